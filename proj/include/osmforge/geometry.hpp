#pragma once

#include "osmforge/geo.hpp"
#include "osmforge/osm.hpp"
#include "osmforge/tags.hpp"

#include <string>
#include <variant>
#include <vector>

namespace osmforge {

/// Closed vertex loop, first == last. Coordinates in degrees.
using Ring = std::vector<GeoPoint>;

struct PointGeometry {
    GeoPoint position;
    friend bool operator==(const PointGeometry&, const PointGeometry&) = default;
};

struct Polyline {
    std::vector<GeoPoint> vertices;
    friend bool operator==(const Polyline&, const Polyline&) = default;
};

struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
    friend bool operator==(const Polygon&, const Polygon&) = default;
};

/// Multipolygon relations with more than one outer ring.
struct MultiPolygon {
    std::vector<Polygon> parts;
    friend bool operator==(const MultiPolygon&, const MultiPolygon&) = default;
};

using Geometry = std::variant<PointGeometry, Polyline, Polygon, MultiPolygon>;

/// Decides whether a closed way describes a surface. `area=yes/no` always
/// wins; otherwise `line` is checked before `area`.
struct AreaTagRule {
    TagPredicate area;
    TagPredicate line;

    bool is_area(const TagMap& tags) const;
};

/// Assembles the geometry of one element.
///
/// Closed ways with area semantics become polygons, other ways polylines,
/// and `type=multipolygon` relations are joined by role into polygons with
/// holes. Consecutive duplicate vertices are collapsed. Rings that cannot be
/// closed or that self-intersect are dropped from relations (with a message
/// appended to `warnings` when given) and rejected for plain ways.
///
/// Throws MissingNodeError for a dangling node reference and GeometryError
/// when no valid surface remains or the relation type is not supported.
Geometry resolve_geometry(const OsmDocument& doc, const ElementRef& ref, const AreaTagRule& rule,
                          std::vector<std::string>* warnings = nullptr);

/// Signed shoelace area in the coordinate units given (positive for
/// counter-clockwise in a y-up frame).
double signed_ring_area(std::span<const GeoPoint> ring) noexcept;

/// True if any two non-adjacent edges touch or adjacent edges fold back.
bool ring_self_intersects(std::span<const GeoPoint> ring) noexcept;

/// Even-odd point-in-ring test.
bool ring_contains(std::span<const GeoPoint> ring, const GeoPoint& p) noexcept;

} // namespace osmforge
