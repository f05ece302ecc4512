#include "osmforge/taxonomy.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"
#include "osmforge/raster.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace osmforge {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kGeneralClassCount> kGeneralNames = {
    "background", "road", "water", "vegetation", "building", "other_surface"};

GeometryKind parse_geometry_kind(std::string_view s)
{
    if (s == "area") {
        return GeometryKind::Area;
    }
    if (s == "line") {
        return GeometryKind::Line;
    }
    if (s == "point") {
        return GeometryKind::Point;
    }
    throw ConfigError("unknown geometry kind '" + std::string(s) + "'");
}

// Rejects any pattern that an earlier rule's pattern already covers.
template <class Rule, class Name>
void check_reachability(const std::vector<Rule>& rules, Name name_of)
{
    for (std::size_t j = 0; j < rules.size(); ++j) {
        for (const auto& later : rules[j].match.any_of) {
            for (std::size_t i = 0; i < j; ++i) {
                for (const auto& earlier : rules[i].match.any_of) {
                    if (later.implies(earlier)) {
                        throw ConfigError("rule '" + name_of(rules[j]) + "' has a pattern shadowed by rule '" +
                                          name_of(rules[i]) + "'");
                    }
                }
            }
        }
    }
}

} // namespace

std::string_view to_string(GeneralClass c) noexcept
{
    return kGeneralNames[static_cast<std::size_t>(c)];
}

GeneralClass parse_general_class(std::string_view name)
{
    for (std::size_t i = 0; i < kGeneralNames.size(); ++i) {
        if (kGeneralNames[i] == name) {
            return static_cast<GeneralClass>(i);
        }
    }
    throw ConfigError("unknown general class '" + std::string(name) + "'");
}

Rgb Rgb::parse_hex(std::string_view hex)
{
    auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') {
            return c - '0';
        }
        if (c >= 'a' && c <= 'f') {
            return c - 'a' + 10;
        }
        if (c >= 'A' && c <= 'F') {
            return c - 'A' + 10;
        }
        throw ConfigError("bad hex color '" + std::string(hex) + "'");
    };
    if (hex.size() != 7 || hex[0] != '#') {
        throw ConfigError("bad hex color '" + std::string(hex) + "'");
    }
    auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(nibble(hex[i]) * 16 + nibble(hex[i + 1])); };
    return {byte(1), byte(3), byte(5)};
}

std::string Rgb::hex() const
{
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

ClassificationRules ClassificationRules::from_json(const json& j)
{
    ClassificationRules rules;
    try {
        rules.m_version = j.at("version").get<std::string>();

        // General palette: every class exactly once, colors distinct.
        std::array<bool, kGeneralClassCount> seen{};
        for (const auto& entry : j.at("general")) {
            auto cls = parse_general_class(entry.at("name").get<std::string>());
            auto idx = static_cast<std::size_t>(cls);
            if (seen[idx]) {
                throw ConfigError("general class '" + std::string(to_string(cls)) + "' listed twice");
            }
            seen[idx] = true;
            rules.m_general_palette[idx] = Rgb::parse_hex(entry.at("color").get<std::string>());
        }
        if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
            throw ConfigError("general palette must list all six classes");
        }
        for (std::size_t a = 0; a < kGeneralClassCount; ++a) {
            for (std::size_t b = a + 1; b < kGeneralClassCount; ++b) {
                if (rules.m_general_palette[a] == rules.m_general_palette[b]) {
                    throw ConfigError("general palette colors must be distinct");
                }
            }
        }

        for (const auto& entry : j.at("general_rules")) {
            auto cls = parse_general_class(entry.at("class").get<std::string>());
            if (cls == GeneralClass::Background) {
                throw ConfigError("rules cannot target the background class");
            }
            rules.m_general_rules.push_back({parse_tag_predicate(entry.at("match")), cls});
        }

        const Rgb specific_bg = Rgb::parse_hex(j.value("specific_background", std::string("#000000")));
        std::set<int> indices;
        std::map<std::tuple<int, int, int>, std::string> colors{{{specific_bg.r, specific_bg.g, specific_bg.b}, "background"}};
        std::set<std::string> names;
        for (const auto& entry : j.at("specific")) {
            SpecificClass sc;
            sc.name = entry.at("name").get<std::string>();
            const int index = entry.at("index").get<int>();
            if (index < 1 || index > 255) {
                throw ConfigError("specific class '" + sc.name + "' index must be in [1, 255]");
            }
            if (!indices.insert(index).second) {
                throw ConfigError("specific palette index " + std::to_string(index) + " used twice");
            }
            if (!names.insert(sc.name).second) {
                throw ConfigError("specific class '" + sc.name + "' listed twice");
            }
            sc.index = static_cast<std::uint8_t>(index);
            sc.color = Rgb::parse_hex(entry.at("color").get<std::string>());
            auto [it, fresh] = colors.emplace(std::tuple<int, int, int>{sc.color.r, sc.color.g, sc.color.b}, sc.name);
            if (!fresh) {
                throw ConfigError("specific class '" + sc.name + "' shares its color with '" + it->second + "'");
            }
            sc.geometry = parse_geometry_kind(entry.value("geometry", std::string("area")));
            sc.parent = parse_general_class(entry.at("parent").get<std::string>());
            if (sc.parent == GeneralClass::Background) {
                throw ConfigError("specific class '" + sc.name + "' cannot have background as parent");
            }
            if (auto s = entry.find("stroke_px"); s != entry.end()) {
                sc.stroke_px = s->get<double>();
                if (!(*sc.stroke_px > 0)) {
                    throw ConfigError("stroke_px must be positive");
                }
            }
            sc.match = parse_tag_predicate(entry.at("match"));
            rules.m_specific.push_back(std::move(sc));
        }

        rules.m_specific_palette.assign(indices.empty() ? 1 : static_cast<std::size_t>(*indices.rbegin()) + 1, Rgb{});
        rules.m_specific_palette[0] = specific_bg;
        for (const auto& sc : rules.m_specific) {
            rules.m_specific_palette[sc.index] = sc.color;
        }

        const auto& area = j.at("area_tags");
        rules.m_area_rule.area = parse_tag_predicate(area.at("area"));
        rules.m_area_rule.line = parse_tag_predicate(area.at("line"));

        if (auto s = j.find("stroke"); s != j.end()) {
            rules.m_stroke.reference_zoom = s->value("reference_zoom", 18);
            rules.m_stroke.default_px = s->value("default_px", 3.0);
            rules.m_stroke.point_px = s->value("point_px", 3.0);
            if (!(rules.m_stroke.default_px > 0) || !(rules.m_stroke.point_px > 0)) {
                throw ConfigError("stroke widths must be positive");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("taxonomy config: ") + e.what());
    }

    check_reachability(rules.m_general_rules,
                       [](const GeneralRule& r) { return std::string(to_string(r.target)); });
    check_reachability(rules.m_specific, [](const SpecificClass& c) { return c.name; });
    return rules;
}

ClassificationRules ClassificationRules::load(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

const SpecificClass* ClassificationRules::specific_by_index(std::uint8_t index) const noexcept
{
    auto it = std::find_if(m_specific.begin(), m_specific.end(),
                           [&](const SpecificClass& c) { return c.index == index; });
    return it == m_specific.end() ? nullptr : &*it;
}

const SpecificClass* ClassificationRules::specific_by_name(std::string_view name) const noexcept
{
    auto it = std::find_if(m_specific.begin(), m_specific.end(),
                           [&](const SpecificClass& c) { return c.name == name; });
    return it == m_specific.end() ? nullptr : &*it;
}

double ClassificationRules::line_width_px(const SpecificClass* specific, int z) const noexcept
{
    const double base = specific != nullptr && specific->stroke_px ? *specific->stroke_px : m_stroke.default_px;
    return std::max(1.0, base * std::ldexp(1.0, z - m_stroke.reference_zoom));
}

double ClassificationRules::point_diameter_px(int z) const noexcept
{
    return std::max(1.0, m_stroke.point_px * std::ldexp(1.0, z - m_stroke.reference_zoom));
}

double ClassificationRules::max_line_width_px(int z) const noexcept
{
    double widest = std::max(line_width_px(nullptr, z), point_diameter_px(z));
    for (const auto& c : m_specific) {
        widest = std::max(widest, line_width_px(&c, z));
    }
    return widest;
}

std::optional<GeneralClass> classify_general(const TagMap& tags, const ClassificationRules& rules)
{
    if (tags.empty()) {
        return std::nullopt;
    }
    if (const auto* specific = classify_specific(tags, rules)) {
        return specific->parent;
    }
    for (const auto& rule : rules.general_rules()) {
        if (rule.match.matches(tags)) {
            return rule.target;
        }
    }
    return std::nullopt;
}

const SpecificClass* classify_specific(const TagMap& tags, const ClassificationRules& rules)
{
    if (tags.empty()) {
        return nullptr;
    }
    for (const auto& c : rules.specific_classes()) {
        if (c.match.matches(tags)) {
            return &c;
        }
    }
    return nullptr;
}

std::vector<std::string> summarize_categories(const MaskGrid& specific, const ClassificationRules& rules,
                                              std::size_t top_k)
{
    std::array<std::size_t, 256> counts{};
    for (auto v : specific.data()) {
        ++counts[v];
    }
    std::vector<std::pair<std::size_t, std::string>> present;
    for (const auto& c : rules.specific_classes()) {
        if (counts[c.index] > 0) {
            present.emplace_back(counts[c.index], c.name);
        }
    }
    std::sort(present.begin(), present.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < present.size() && i < top_k; ++i) {
        out.push_back(present[i].second);
    }
    return out;
}

std::vector<std::string> summarize_categories(const OsmDocument& doc, const TileRef& tile,
                                              const ClassificationRules& rules, std::size_t top_k, int tile_size)
{
    return summarize_categories(render_masks(doc, tile, rules, tile_size).specific, rules, top_k);
}

} // namespace osmforge
