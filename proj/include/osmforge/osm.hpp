#pragma once

#include "osmforge/geo.hpp"
#include "osmforge/tags.hpp"
#include "osmforge/timestamp.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace osmforge {

enum class ElementKind : std::uint8_t { Node, Way, Relation };

std::string_view to_string(ElementKind kind) noexcept;
/// Throws std::invalid_argument for anything but "node", "way", "relation".
ElementKind parse_element_kind(std::string_view s);

/// (kind, id) pair; ids are only unique within a kind.
struct ElementRef {
    ElementKind kind = ElementKind::Node;
    std::int64_t id = 0;

    friend bool operator==(const ElementRef&, const ElementRef&) = default;
    friend auto operator<=>(const ElementRef&, const ElementRef&) = default;
};

std::string to_string(const ElementRef& ref);

struct ElementRefHash {
    std::size_t operator()(const ElementRef& r) const noexcept
    {
        return std::hash<std::int64_t>{}(r.id) * 3 + static_cast<std::size_t>(r.kind);
    }
};

struct RelationMember {
    std::int64_t ref = 0;
    ElementKind kind = ElementKind::Way;
    std::string role;

    friend bool operator==(const RelationMember&, const RelationMember&) = default;
};

struct NodeData {
    double lon = 0.0;
    double lat = 0.0;
    friend bool operator==(const NodeData&, const NodeData&) = default;
};

struct WayData {
    std::vector<std::int64_t> refs;
    friend bool operator==(const WayData&, const WayData&) = default;
};

struct RelationData {
    std::vector<RelationMember> members;
    friend bool operator==(const RelationData&, const RelationData&) = default;
};

class OsmElement {
public:
    /// Throws RangeError for coordinates outside [-180, 180] x [-90, 90].
    static OsmElement node(std::int64_t id, double lon, double lat, TagMap tags = {});
    /// Throws std::invalid_argument for fewer than two node references.
    static OsmElement way(std::int64_t id, std::vector<std::int64_t> refs, TagMap tags = {});
    /// Throws std::invalid_argument for an empty member list.
    static OsmElement relation(std::int64_t id, std::vector<RelationMember> members, TagMap tags = {});

    std::int64_t id() const noexcept { return m_id; }
    ElementKind kind() const noexcept { return static_cast<ElementKind>(m_payload.index()); }
    ElementRef ref() const noexcept { return {kind(), m_id}; }
    const TagMap& tags() const noexcept { return m_tags; }

    const NodeData& as_node() const { return std::get<NodeData>(m_payload); }
    const WayData& as_way() const { return std::get<WayData>(m_payload); }
    const RelationData& as_relation() const { return std::get<RelationData>(m_payload); }

    OsmElement with_tags(TagMap tags) const;

    friend bool operator==(const OsmElement&, const OsmElement&) = default;

private:
    using Payload = std::variant<NodeData, WayData, RelationData>;
    OsmElement(std::int64_t id, TagMap tags, Payload payload)
        : m_id(id), m_tags(std::move(tags)), m_payload(std::move(payload)) {}

    std::int64_t m_id;
    TagMap m_tags;
    Payload m_payload;
};

/// Immutable collection of elements in input order. Copies share storage.
class OsmDocument {
public:
    OsmDocument();
    /// Throws SchemaError (naming the element index) on a duplicate (kind, id).
    explicit OsmDocument(std::vector<OsmElement> elements,
                         std::optional<TimeStamp6D> capture_timestamp = std::nullopt,
                         std::optional<GeoBounds> source_bounds = std::nullopt);

    std::span<const OsmElement> elements() const noexcept;
    std::size_t size() const noexcept { return elements().size(); }
    std::size_t count(ElementKind kind) const noexcept;

    const OsmElement* find(const ElementRef& ref) const noexcept;
    /// Throws std::out_of_range when absent.
    const OsmElement& at(const ElementRef& ref) const;
    bool contains(const ElementRef& ref) const noexcept { return find(ref) != nullptr; }

    const std::optional<TimeStamp6D>& capture_timestamp() const noexcept;
    const std::optional<GeoBounds>& source_bounds() const noexcept;

    friend bool operator==(const OsmDocument& a, const OsmDocument& b);

private:
    struct Data;
    std::shared_ptr<const Data> m_data;
};

/// Parses an Overpass / OSM API JSON document (`{"elements": [...]}`).
/// A repeated element with the same geometry is merged into its first
/// occurrence when at most one copy carries tags; any other repeat is a
/// SchemaError.
OsmDocument parse_osm_json(std::string_view bytes);

nlohmann::json element_to_json(const OsmElement& element);
/// Serializes in the same `elements` convention `parse_osm_json` reads.
std::string serialize_osm_json(const OsmDocument& doc);
/// Canonical single-line JSON for one element; equal elements give equal strings.
std::string element_fingerprint(const OsmElement& element);
/// SHA-256 of the canonical serialization.
std::string document_fingerprint(const OsmDocument& doc);

} // namespace osmforge
