#pragma once

#include "osmforge/geo.hpp"
#include "osmforge/geometry.hpp"
#include "osmforge/osm.hpp"
#include "osmforge/taxonomy.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace osmforge {

enum class MaskKind : std::uint8_t { General, Specific };

std::string_view to_string(MaskKind kind) noexcept;

/// Square row-major grid of 8-bit class indices.
class MaskGrid {
public:
    MaskGrid() = default;
    MaskGrid(int size, MaskKind kind, std::string palette_version = {});

    int width() const noexcept { return m_size; }
    int height() const noexcept { return m_size; }
    MaskKind kind() const noexcept { return m_kind; }
    const std::string& palette_version() const noexcept { return m_palette_version; }

    std::uint8_t at(int col, int row) const { return m_data[index(col, row)]; }
    void set(int col, int row, std::uint8_t v) { m_data[index(col, row)] = v; }
    void fill_span(int row, int col_begin, int col_end, std::uint8_t v);

    std::span<const std::uint8_t> data() const noexcept { return m_data; }
    std::span<std::uint8_t> data() noexcept { return m_data; }
    std::size_t count(std::uint8_t v) const noexcept;

    friend bool operator==(const MaskGrid&, const MaskGrid&) = default;

private:
    std::size_t index(int col, int row) const noexcept
    {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(m_size) + static_cast<std::size_t>(col);
    }

    int m_size = 0;
    MaskKind m_kind = MaskKind::General;
    std::string m_palette_version;
    std::vector<std::uint8_t> m_data;
};

struct MaskPair {
    MaskGrid general;
    MaskGrid specific;
    TileRef tile;

    /// Short content hash over tile and both grids.
    std::string id() const;
    friend bool operator==(const MaskPair&, const MaskPair&) = default;
};

struct ChangeMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> changed; ///< 1 where (general, specific) differ
    std::string before_id;
    std::string after_id;

    std::size_t changed_count() const noexcept;
};

/// Pixel-space vertex (x = column, y = row, both fractional).
struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Receives one horizontal run [col_begin, col_end) on `row`.
using SpanSink = std::function<void(int row, int col_begin, int col_end)>;

/// Even-odd scanline fill sampled at pixel centers. Edges use the half-open
/// rule (a vertex at exactly a center row counts for the edge going down),
/// and a center exactly on a crossing belongs to the run starting there.
void scan_rings(std::span<const std::vector<PixelPoint>> rings, int width, int height, const SpanSink& sink);

/// Pixels whose center lies within width/2 of any segment (round caps and
/// joins). Ties at exactly width/2 go to the pixel above, then to the left.
void scan_stroke(std::span<const PixelPoint> vertices, double width_px, int width, int height,
                 const SpanSink& sink);

std::vector<PixelPoint> project_ring(std::span<const GeoPoint> ring, const TileRef& tile, int tile_size);

/// Area of a polygon after projection, in square pixels (holes subtracted).
double projected_area_px(const Polygon& poly, const TileRef& tile, int tile_size);

/// Fills `poly` into `grid`. A ring that projects to zero area leaves the
/// grid unchanged and appends a warning.
void rasterize_polygon(const Polygon& poly, std::uint8_t class_index, MaskGrid& grid, const TileRef& tile,
                       std::vector<std::string>* warnings = nullptr);

/// Throws std::invalid_argument for width_px < 1.
void rasterize_polyline(const Polyline& line, std::uint8_t class_index, double width_px, MaskGrid& grid,
                        const TileRef& tile);

/// Renders both masks for one tile.
///
/// Draw order: polygons by descending projected area, then lines, then
/// points, ties in document order. Every drawn pixel receives the general
/// class in the general mask and the specific index (or background) in the
/// specific mask, so parent consistency holds everywhere. Elements whose
/// geometry cannot be built are skipped with a warning.
MaskPair render_masks(const OsmDocument& doc, const TileRef& tile, const ClassificationRules& rules,
                      int tile_size = kDefaultTileSize, std::vector<std::string>* warnings = nullptr);

/// Footprint (1 = covered) of the given geometry drawn the way render_masks
/// would draw an element of that specific class.
std::vector<std::uint8_t> geometry_footprint(const Geometry& geometry, const SpecificClass* specific,
                                             const ClassificationRules& rules, const TileRef& tile,
                                             int tile_size = kDefaultTileSize);

/// Throws ShapeError when sizes or tiles differ.
ChangeMask mask_diff(const MaskPair& before, const MaskPair& after);

} // namespace osmforge
