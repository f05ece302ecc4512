#pragma once

#include "osmforge/hash.hpp"
#include "osmforge/osm.hpp"
#include "osmforge/taxonomy.hpp"

#include <filesystem>
#include <random>
#include <utility>
#include <vector>
#include <string>

namespace test {

inline std::filesystem::path fixtures()
{
    return OSMFORGE_FIXTURES_DIR;
}

inline std::filesystem::path taxonomy_path()
{
    return std::filesystem::path(OSMFORGE_CONFIG_DIR) / "taxonomy.json";
}

inline const osmforge::ClassificationRules& rules()
{
    static const auto r = osmforge::ClassificationRules::load(taxonomy_path());
    return r;
}

inline constexpr osmforge::TileRef kTile{18, 74975, 100281};

inline osmforge::OsmDocument fixture_doc(const osmforge::TileRef& t = kTile)
{
    return osmforge::parse_osm_json(osmforge::read_file(fixtures() / "overpass" / std::to_string(t.z) /
                                                        std::to_string(t.x) / (std::to_string(t.y) + ".json")));
}

/// Closed way over pixel-space vertices of `kTile`; node ids start at `first_node`.
inline void add_pixel_way(std::vector<osmforge::OsmElement>& out, std::int64_t way_id, std::int64_t first_node,
                          const std::vector<std::pair<double, double>>& pixels, osmforge::TagMap tags,
                          bool closed = true)
{
    std::vector<std::int64_t> refs;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto g = osmforge::pixel_to_geo({pixels[i].first, pixels[i].second, 256}, kTile);
        const auto id = first_node + static_cast<std::int64_t>(i);
        out.push_back(osmforge::OsmElement::node(id, g.lon, g.lat));
        refs.push_back(id);
    }
    if (closed) {
        refs.push_back(refs.front());
    }
    out.push_back(osmforge::OsmElement::way(way_id, std::move(refs), std::move(tags)));
}

inline void add_pixel_rect(std::vector<osmforge::OsmElement>& out, std::int64_t way_id, std::int64_t first_node,
                           double x0, double y0, double x1, double y1, osmforge::TagMap tags)
{
    add_pixel_way(out, way_id, first_node, {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, std::move(tags));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name)
    {
        std::random_device rd;
        m_path = std::filesystem::temp_directory_path() / ("osmforge_" + name + "_" + std::to_string(rd()));
        std::filesystem::create_directories(m_path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return m_path; }

private:
    std::filesystem::path m_path;
};

} // namespace test
