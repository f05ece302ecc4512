#include "osmforge/osm.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace osmforge {

using nlohmann::json;

std::string_view to_string(ElementKind kind) noexcept
{
    switch (kind) {
    case ElementKind::Node:
        return "node";
    case ElementKind::Way:
        return "way";
    case ElementKind::Relation:
        return "relation";
    }
    return "?";
}

ElementKind parse_element_kind(std::string_view s)
{
    if (s == "node") {
        return ElementKind::Node;
    }
    if (s == "way") {
        return ElementKind::Way;
    }
    if (s == "relation") {
        return ElementKind::Relation;
    }
    throw std::invalid_argument("unknown element kind '" + std::string(s) + "'");
}

std::string to_string(const ElementRef& ref)
{
    return std::string(to_string(ref.kind)) + "/" + std::to_string(ref.id);
}

OsmElement OsmElement::node(std::int64_t id, double lon, double lat, TagMap tags)
{
    if (!(lon >= -180.0 && lon <= 180.0) || !(lat >= -90.0 && lat <= 90.0)) {
        std::ostringstream msg;
        msg << "node " << id << " coordinate (" << lon << ", " << lat << ") out of range";
        throw RangeError(msg.str());
    }
    return {id, std::move(tags), NodeData{lon, lat}};
}

OsmElement OsmElement::way(std::int64_t id, std::vector<std::int64_t> refs, TagMap tags)
{
    if (refs.size() < 2) {
        throw std::invalid_argument("way " + std::to_string(id) + " needs at least 2 node references");
    }
    return {id, std::move(tags), WayData{std::move(refs)}};
}

OsmElement OsmElement::relation(std::int64_t id, std::vector<RelationMember> members, TagMap tags)
{
    if (members.empty()) {
        throw std::invalid_argument("relation " + std::to_string(id) + " has no members");
    }
    return {id, std::move(tags), RelationData{std::move(members)}};
}

OsmElement OsmElement::with_tags(TagMap tags) const
{
    OsmElement copy = *this;
    copy.m_tags = std::move(tags);
    return copy;
}

struct OsmDocument::Data {
    std::vector<OsmElement> elements;
    std::unordered_map<ElementRef, std::size_t, ElementRefHash> index;
    std::optional<TimeStamp6D> capture_timestamp;
    std::optional<GeoBounds> source_bounds;
    std::size_t counts[3] = {0, 0, 0};
};

OsmDocument::OsmDocument() : m_data(std::make_shared<const Data>()) {}

OsmDocument::OsmDocument(std::vector<OsmElement> elements, std::optional<TimeStamp6D> capture_timestamp,
                         std::optional<GeoBounds> source_bounds)
{
    auto data = std::make_shared<Data>();
    data->index.reserve(elements.size());
    for (std::size_t i = 0; i < elements.size(); ++i) {
        const auto ref = elements[i].ref();
        if (!data->index.emplace(ref, i).second) {
            throw SchemaError("duplicate element " + to_string(ref) + " at index " + std::to_string(i), i);
        }
        ++data->counts[static_cast<int>(ref.kind)];
    }
    data->elements = std::move(elements);
    data->capture_timestamp = capture_timestamp;
    data->source_bounds = source_bounds;
    m_data = std::move(data);
}

std::span<const OsmElement> OsmDocument::elements() const noexcept
{
    return m_data->elements;
}

std::size_t OsmDocument::count(ElementKind kind) const noexcept
{
    return m_data->counts[static_cast<int>(kind)];
}

const OsmElement* OsmDocument::find(const ElementRef& ref) const noexcept
{
    auto it = m_data->index.find(ref);
    return it == m_data->index.end() ? nullptr : &m_data->elements[it->second];
}

const OsmElement& OsmDocument::at(const ElementRef& ref) const
{
    if (const auto* e = find(ref)) {
        return *e;
    }
    throw std::out_of_range("no element " + to_string(ref));
}

const std::optional<TimeStamp6D>& OsmDocument::capture_timestamp() const noexcept
{
    return m_data->capture_timestamp;
}

const std::optional<GeoBounds>& OsmDocument::source_bounds() const noexcept
{
    return m_data->source_bounds;
}

bool operator==(const OsmDocument& a, const OsmDocument& b)
{
    return a.m_data == b.m_data ||
           (a.m_data->elements == b.m_data->elements &&
            a.m_data->capture_timestamp == b.m_data->capture_timestamp &&
            a.m_data->source_bounds == b.m_data->source_bounds);
}

namespace {

constexpr std::size_t kDocumentLevel = std::numeric_limits<std::size_t>::max();

const json& require(const json& obj, const char* field, std::size_t index)
{
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) {
        throw SchemaError("element " + std::to_string(index) + " is missing '" + field + "'", index);
    }
    return *it;
}

std::int64_t require_int(const json& obj, const char* field, std::size_t index)
{
    const auto& v = require(obj, field, index);
    if (!v.is_number_integer()) {
        throw SchemaError("element " + std::to_string(index) + " field '" + field + "' is not an integer",
                          index);
    }
    return v.get<std::int64_t>();
}

double require_number(const json& obj, const char* field, std::size_t index)
{
    const auto& v = require(obj, field, index);
    if (!v.is_number()) {
        throw SchemaError("element " + std::to_string(index) + " field '" + field + "' is not a number",
                          index);
    }
    return v.get<double>();
}

TagMap parse_tags(const json& obj, std::size_t index)
{
    TagMap tags;
    auto it = obj.find("tags");
    if (it == obj.end()) {
        return tags;
    }
    if (!it->is_object()) {
        throw SchemaError("element " + std::to_string(index) + " tags must be an object", index);
    }
    for (const auto& [k, v] : it->items()) {
        if (!v.is_string() || k.empty() || v.get_ref<const std::string&>().empty()) {
            throw SchemaError("element " + std::to_string(index) + " has an invalid tag '" + k + "'", index);
        }
        tags.set(k, v.get<std::string>());
    }
    return tags;
}

OsmElement parse_element(const json& obj, std::size_t index)
{
    if (!obj.is_object()) {
        throw SchemaError("element " + std::to_string(index) + " is not an object", index);
    }
    const auto& type = require(obj, "type", index);
    if (!type.is_string()) {
        throw SchemaError("element " + std::to_string(index) + " type is not a string", index);
    }
    const auto id = require_int(obj, "id", index);
    auto tags = parse_tags(obj, index);
    const auto& kind = type.get_ref<const std::string&>();

    if (kind == "node") {
        const double lat = require_number(obj, "lat", index);
        const double lon = require_number(obj, "lon", index);
        return OsmElement::node(id, lon, lat, std::move(tags));
    }
    if (kind == "way") {
        const auto& nodes = require(obj, "nodes", index);
        if (!nodes.is_array() || nodes.size() < 2) {
            throw SchemaError("way at index " + std::to_string(index) + " needs at least 2 node refs", index);
        }
        std::vector<std::int64_t> refs;
        refs.reserve(nodes.size());
        for (const auto& r : nodes) {
            if (!r.is_number_integer()) {
                throw SchemaError("way at index " + std::to_string(index) + " has a non-integer node ref",
                                  index);
            }
            refs.push_back(r.get<std::int64_t>());
        }
        return OsmElement::way(id, std::move(refs), std::move(tags));
    }
    if (kind == "relation") {
        const auto& members = require(obj, "members", index);
        if (!members.is_array() || members.empty()) {
            throw SchemaError("relation at index " + std::to_string(index) + " has no members", index);
        }
        std::vector<RelationMember> out;
        for (const auto& m : members) {
            if (!m.is_object()) {
                throw SchemaError("relation member is not an object", index);
            }
            RelationMember member;
            member.ref = require_int(m, "ref", index);
            const auto& mtype = require(m, "type", index);
            try {
                member.kind = parse_element_kind(mtype.get<std::string>());
            } catch (const std::exception&) {
                throw SchemaError("relation at index " + std::to_string(index) + " has an invalid member type",
                                  index);
            }
            if (auto role = m.find("role"); role != m.end() && role->is_string()) {
                member.role = role->get<std::string>();
            }
            out.push_back(std::move(member));
        }
        return OsmElement::relation(id, std::move(out), std::move(tags));
    }
    throw SchemaError("element " + std::to_string(index) + " has unknown type '" + kind + "'", index);
}

} // namespace

OsmDocument parse_osm_json(std::string_view bytes)
{
    json root;
    try {
        root = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    if (!root.is_object()) {
        throw SchemaError("top level is not an object", kDocumentLevel);
    }
    auto it = root.find("elements");
    if (it == root.end() || !it->is_array()) {
        throw SchemaError("missing 'elements' array", kDocumentLevel);
    }

    std::vector<OsmElement> elements;
    elements.reserve(it->size());
    std::unordered_map<ElementRef, std::size_t, ElementRefHash> seen;
    for (std::size_t i = 0; i < it->size(); ++i) {
        auto e = parse_element((*it)[i], i);
        auto [pos, inserted] = seen.emplace(e.ref(), elements.size());
        if (inserted) {
            elements.push_back(std::move(e));
            continue;
        }
        // `out body; >; out skel;` repeats elements without tags.
        auto& first = elements[pos->second];
        const bool same_shape = first.with_tags({}) == e.with_tags({});
        if (!same_shape || (!e.tags().empty() && !first.tags().empty() && e.tags() != first.tags())) {
            throw SchemaError("duplicate element " + to_string(e.ref()) + " at index " + std::to_string(i), i);
        }
        if (first.tags().empty()) {
            first = std::move(e);
        }
    }

    std::optional<TimeStamp6D> ts;
    if (auto t = root.find("capture_timestamp"); t != root.end() && t->is_string()) {
        ts = TimeStamp6D::parse(t->get<std::string>());
    } else if (auto o = root.find("osm3s"); o != root.end() && o->is_object()) {
        if (auto base = o->find("timestamp_osm_base"); base != o->end() && base->is_string()) {
            ts = TimeStamp6D::parse(base->get<std::string>());
        }
    }

    std::optional<GeoBounds> bounds;
    if (auto b = root.find("bounds"); b != root.end() && b->is_object()) {
        try {
            bounds = GeoBounds{b->at("minlon").get<double>(), b->at("minlat").get<double>(),
                               b->at("maxlon").get<double>(), b->at("maxlat").get<double>()};
        } catch (const json::exception&) {
            throw SchemaError("malformed 'bounds' object", kDocumentLevel);
        }
        if (!bounds->valid()) {
            throw RangeError("degenerate 'bounds' object");
        }
    }
    return OsmDocument(std::move(elements), ts, bounds);
}

json element_to_json(const OsmElement& e)
{
    json j;
    j["type"] = std::string(to_string(e.kind()));
    j["id"] = e.id();
    switch (e.kind()) {
    case ElementKind::Node:
        j["lat"] = e.as_node().lat;
        j["lon"] = e.as_node().lon;
        break;
    case ElementKind::Way:
        j["nodes"] = e.as_way().refs;
        break;
    case ElementKind::Relation: {
        auto& members = j["members"] = json::array();
        for (const auto& m : e.as_relation().members) {
            members.push_back({{"type", std::string(to_string(m.kind))}, {"ref", m.ref}, {"role", m.role}});
        }
        break;
    }
    }
    if (!e.tags().empty()) {
        auto& tags = j["tags"] = json::object();
        for (const auto& [k, v] : e.tags()) {
            tags[k] = v;
        }
    }
    return j;
}

std::string serialize_osm_json(const OsmDocument& doc)
{
    json root;
    root["version"] = 0.6;
    root["generator"] = "osmforge";
    if (doc.capture_timestamp()) {
        root["capture_timestamp"] = doc.capture_timestamp()->iso();
    }
    if (const auto& b = doc.source_bounds()) {
        root["bounds"] = {{"minlat", b->south}, {"minlon", b->west}, {"maxlat", b->north}, {"maxlon", b->east}};
    }
    auto& elements = root["elements"] = json::array();
    for (const auto& e : doc.elements()) {
        elements.push_back(element_to_json(e));
    }
    return root.dump(1);
}

std::string element_fingerprint(const OsmElement& element)
{
    return element_to_json(element).dump();
}

std::string document_fingerprint(const OsmDocument& doc)
{
    return sha256_hex(serialize_osm_json(doc));
}

} // namespace osmforge
