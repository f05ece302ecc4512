#include "osmforge/geometry.hpp"

#include "osmforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace osmforge {

bool AreaTagRule::is_area(const TagMap& tags) const
{
    if (auto a = tags.get("area")) {
        if (*a == "yes") {
            return true;
        }
        if (*a == "no") {
            return false;
        }
    }
    if (line.matches(tags)) {
        return false;
    }
    return area.matches(tags);
}

double signed_ring_area(std::span<const GeoPoint> ring) noexcept
{
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        sum += ring[i].lon * ring[i + 1].lat - ring[i + 1].lon * ring[i].lat;
    }
    return sum / 2.0;
}

namespace {

double orient(const GeoPoint& a, const GeoPoint& b, const GeoPoint& c) noexcept
{
    return (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
}

bool on_segment(const GeoPoint& a, const GeoPoint& b, const GeoPoint& p) noexcept
{
    return std::min(a.lon, b.lon) <= p.lon && p.lon <= std::max(a.lon, b.lon) &&
           std::min(a.lat, b.lat) <= p.lat && p.lat <= std::max(a.lat, b.lat);
}

bool segments_touch(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1, const GeoPoint& q2) noexcept
{
    const double d1 = orient(q1, q2, p1);
    const double d2 = orient(q1, q2, p2);
    const double d3 = orient(p1, p2, q1);
    const double d4 = orient(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
    }
    return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
           (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

// Adjacent edges a->b, b->c fold back onto each other.
bool folds_back(const GeoPoint& a, const GeoPoint& b, const GeoPoint& c) noexcept
{
    if (orient(a, b, c) != 0) {
        return false;
    }
    const double dot = (a.lon - b.lon) * (c.lon - b.lon) + (a.lat - b.lat) * (c.lat - b.lat);
    return dot > 0;
}

void collapse_duplicates(std::vector<GeoPoint>& v)
{
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::vector<GeoPoint> way_coordinates(const OsmDocument& doc, const OsmElement& way)
{
    std::vector<GeoPoint> out;
    out.reserve(way.as_way().refs.size());
    for (auto id : way.as_way().refs) {
        const auto* node = doc.find({ElementKind::Node, id});
        if (node == nullptr) {
            throw MissingNodeError(id);
        }
        out.push_back({node->as_node().lon, node->as_node().lat});
    }
    return out;
}

// Empty optional when valid, otherwise the reason.
std::optional<std::string> ring_problem(const Ring& ring)
{
    if (ring.size() < 4) {
        return "ring has fewer than 4 vertices";
    }
    if (ring.front() != ring.back()) {
        return "ring is not closed";
    }
    if (signed_ring_area(ring) == 0.0) {
        return "ring has zero area";
    }
    if (ring_self_intersects(ring)) {
        return "ring self-intersects";
    }
    return std::nullopt;
}

void note(std::vector<std::string>* warnings, std::string msg)
{
    if (warnings != nullptr) {
        warnings->push_back(std::move(msg));
    }
}

// Joins member ways end to end (by node id) into closed rings. Ways that
// cannot be closed are reported and dropped.
std::vector<std::vector<std::int64_t>> join_rings(std::vector<std::vector<std::int64_t>> pieces,
                                                  const ElementRef& rel, std::vector<std::string>* warnings)
{
    std::vector<std::vector<std::int64_t>> rings;
    std::vector<bool> used(pieces.size(), false);
    for (std::size_t start = 0; start < pieces.size(); ++start) {
        if (used[start]) {
            continue;
        }
        used[start] = true;
        auto ring = pieces[start];
        bool extended = true;
        while (ring.front() != ring.back() && extended) {
            extended = false;
            for (std::size_t j = 0; j < pieces.size(); ++j) {
                if (used[j]) {
                    continue;
                }
                auto& piece = pieces[j];
                if (piece.front() == ring.back()) {
                    ring.insert(ring.end(), piece.begin() + 1, piece.end());
                } else if (piece.back() == ring.back()) {
                    ring.insert(ring.end(), piece.rbegin() + 1, piece.rend());
                } else {
                    continue;
                }
                used[j] = true;
                extended = true;
                break;
            }
        }
        if (ring.front() == ring.back()) {
            rings.push_back(std::move(ring));
        } else {
            note(warnings, to_string(rel) + ": dropped an unclosed ring");
        }
    }
    return rings;
}

Geometry resolve_multipolygon(const OsmDocument& doc, const OsmElement& rel, std::vector<std::string>* warnings)
{
    std::vector<std::vector<std::int64_t>> outer_pieces;
    std::vector<std::vector<std::int64_t>> inner_pieces;
    for (const auto& m : rel.as_relation().members) {
        if (m.kind != ElementKind::Way) {
            continue;
        }
        const auto* way = doc.find({ElementKind::Way, m.ref});
        if (way == nullptr) {
            note(warnings, to_string(rel.ref()) + ": member way " + std::to_string(m.ref) + " not in document");
            continue;
        }
        if (m.role == "outer" || m.role.empty()) {
            outer_pieces.push_back(way->as_way().refs);
        } else if (m.role == "inner") {
            inner_pieces.push_back(way->as_way().refs);
        }
    }

    auto to_ring = [&](const std::vector<std::int64_t>& ids) {
        Ring ring;
        ring.reserve(ids.size());
        for (auto id : ids) {
            const auto* node = doc.find({ElementKind::Node, id});
            if (node == nullptr) {
                throw MissingNodeError(id);
            }
            ring.push_back({node->as_node().lon, node->as_node().lat});
        }
        collapse_duplicates(ring);
        return ring;
    };

    std::vector<Polygon> parts;
    for (const auto& ids : join_rings(std::move(outer_pieces), rel.ref(), warnings)) {
        auto ring = to_ring(ids);
        if (auto why = ring_problem(ring)) {
            note(warnings, to_string(rel.ref()) + ": dropped outer ring, " + *why);
            continue;
        }
        parts.push_back({std::move(ring), {}});
    }
    if (parts.empty()) {
        throw GeometryError(to_string(rel.ref()) + " has no valid outer ring");
    }
    for (const auto& ids : join_rings(std::move(inner_pieces), rel.ref(), warnings)) {
        auto ring = to_ring(ids);
        if (auto why = ring_problem(ring)) {
            note(warnings, to_string(rel.ref()) + ": dropped inner ring, " + *why);
            continue;
        }
        auto owner = std::find_if(parts.begin(), parts.end(),
                                  [&](const Polygon& p) { return ring_contains(p.outer, ring.front()); });
        if (owner == parts.end()) {
            note(warnings, to_string(rel.ref()) + ": dropped inner ring outside every outer ring");
            continue;
        }
        owner->holes.push_back(std::move(ring));
    }
    if (parts.size() == 1) {
        return std::move(parts.front());
    }
    return MultiPolygon{std::move(parts)};
}

} // namespace

bool ring_self_intersects(std::span<const GeoPoint> ring) noexcept
{
    const std::size_t n = ring.size() < 2 ? 0 : ring.size() - 1; // edge count
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a1 = ring[i];
        const auto& a2 = ring[i + 1];
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) {
                const auto& shared = j == i + 1 ? a2 : a1;
                const auto& other_a = j == i + 1 ? a1 : a2;
                const auto& other_b = j == i + 1 ? ring[j + 1] : ring[j];
                if (folds_back(other_a, shared, other_b)) {
                    return true;
                }
                continue;
            }
            if (segments_touch(a1, a2, ring[j], ring[j + 1])) {
                return true;
            }
        }
    }
    return false;
}

bool ring_contains(std::span<const GeoPoint> ring, const GeoPoint& p) noexcept
{
    bool inside = false;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const auto& a = ring[i];
        const auto& b = ring[i + 1];
        if ((a.lat <= p.lat) != (b.lat <= p.lat)) {
            const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if (x > p.lon) {
                inside = !inside;
            }
        }
    }
    return inside;
}

Geometry resolve_geometry(const OsmDocument& doc, const ElementRef& ref, const AreaTagRule& rule,
                          std::vector<std::string>* warnings)
{
    const auto& element = doc.at(ref);
    switch (element.kind()) {
    case ElementKind::Node:
        return PointGeometry{{element.as_node().lon, element.as_node().lat}};

    case ElementKind::Way: {
        const auto& refs = element.as_way().refs;
        auto coords = way_coordinates(doc, element);
        collapse_duplicates(coords);
        const bool closed = refs.front() == refs.back();
        if (closed && rule.is_area(element.tags())) {
            if (auto why = ring_problem(coords)) {
                throw GeometryError(to_string(ref) + ": " + *why);
            }
            return Polygon{std::move(coords), {}};
        }
        if (coords.size() < 2) {
            throw GeometryError(to_string(ref) + ": polyline collapses to a single vertex");
        }
        return Polyline{std::move(coords)};
    }

    case ElementKind::Relation: {
        auto type = element.tags().get("type");
        if (!type || *type != "multipolygon") {
            throw GeometryError(to_string(ref) + ": relation type '" + std::string(type.value_or("")) +
                                "' has no surface geometry");
        }
        return resolve_multipolygon(doc, element, warnings);
    }
    }
    throw GeometryError("unreachable");
}

} // namespace osmforge
