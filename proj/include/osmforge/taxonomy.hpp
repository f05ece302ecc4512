#pragma once

#include "osmforge/geometry.hpp"
#include "osmforge/osm.hpp"
#include "osmforge/tags.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace osmforge {

class MaskGrid;

/// Broad surface categories; the value is the general-mask pixel index.
enum class GeneralClass : std::uint8_t { Background = 0, Road, Water, Vegetation, Building, OtherSurface };

inline constexpr std::size_t kGeneralClassCount = 6;

std::string_view to_string(GeneralClass c) noexcept;
/// Throws ConfigError for unknown names.
GeneralClass parse_general_class(std::string_view name);

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    /// `#rrggbb`; throws ConfigError otherwise.
    static Rgb parse_hex(std::string_view hex);
    std::string hex() const;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

enum class GeometryKind { Area, Line, Point };

struct SpecificClass {
    std::string name;
    TagPredicate match;
    std::uint8_t index = 0; ///< specific-mask pixel value, 1..255
    Rgb color;
    GeometryKind geometry = GeometryKind::Area;
    GeneralClass parent = GeneralClass::OtherSurface;
    std::optional<double> stroke_px; ///< line width at the reference zoom
};

struct GeneralRule {
    TagPredicate match;
    GeneralClass target = GeneralClass::OtherSurface;
};

struct StrokeConfig {
    int reference_zoom = 18;
    double default_px = 3.0;
    double point_px = 3.0;
};

/// Ordered first-match-wins rules plus palettes, loaded from the JSON
/// config shipped in `config/taxonomy.json`. Immutable once loaded.
class ClassificationRules {
public:
    /// Validates palette injectivity, parent references and rule
    /// reachability; throws ConfigError on any violation.
    static ClassificationRules from_json(const nlohmann::json& j);
    static ClassificationRules load(const std::filesystem::path& path);

    const std::string& version() const noexcept { return m_version; }
    const std::array<Rgb, kGeneralClassCount>& general_palette() const noexcept { return m_general_palette; }
    /// Indexed by specific-mask value; unused indices are black.
    const std::vector<Rgb>& specific_palette() const noexcept { return m_specific_palette; }
    const std::vector<GeneralRule>& general_rules() const noexcept { return m_general_rules; }
    const std::vector<SpecificClass>& specific_classes() const noexcept { return m_specific; }
    const AreaTagRule& area_rule() const noexcept { return m_area_rule; }
    const StrokeConfig& stroke() const noexcept { return m_stroke; }

    const SpecificClass* specific_by_index(std::uint8_t index) const noexcept;
    const SpecificClass* specific_by_name(std::string_view name) const noexcept;

    /// Stroke width in pixels at zoom `z`, scaled by 2^(z - reference) and
    /// never below one pixel.
    double line_width_px(const SpecificClass* specific, int z) const noexcept;
    double point_diameter_px(int z) const noexcept;

    /// Largest line width any class can produce at zoom `z`.
    double max_line_width_px(int z) const noexcept;

private:
    std::string m_version;
    std::array<Rgb, kGeneralClassCount> m_general_palette{};
    std::vector<Rgb> m_specific_palette;
    std::vector<GeneralRule> m_general_rules;
    std::vector<SpecificClass> m_specific;
    AreaTagRule m_area_rule;
    StrokeConfig m_stroke;
};

/// A matching specific class decides the general class (its parent), so the
/// two masks never disagree; otherwise the first matching general rule wins.
/// Untagged elements have no class.
std::optional<GeneralClass> classify_general(const TagMap& tags, const ClassificationRules& rules);

/// First matching registry entry, or nullptr.
const SpecificClass* classify_specific(const TagMap& tags, const ClassificationRules& rules);

/// Specific classes visible in a rendered specific mask, by descending pixel
/// count, ties alphabetical, truncated to `top_k`.
std::vector<std::string> summarize_categories(const MaskGrid& specific, const ClassificationRules& rules,
                                              std::size_t top_k = 5);

/// Renders `doc` into `tile` and summarizes its specific mask.
std::vector<std::string> summarize_categories(const OsmDocument& doc, const TileRef& tile,
                                              const ClassificationRules& rules, std::size_t top_k = 5,
                                              int tile_size = kDefaultTileSize);

} // namespace osmforge
