#include "osmforge/raster.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osmforge {

namespace {

// Clamps before converting so far-away geometry cannot overflow an int.
int to_pixel_index(double v, int lo, int hi) noexcept
{
    return static_cast<int>(std::clamp(v, static_cast<double>(lo), static_cast<double>(hi)));
}

} // namespace

std::string_view to_string(MaskKind kind) noexcept
{
    return kind == MaskKind::General ? "general" : "specific";
}

MaskGrid::MaskGrid(int size, MaskKind kind, std::string palette_version)
    : m_size(size), m_kind(kind), m_palette_version(std::move(palette_version)),
      m_data(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0)
{
    if (size < 1) {
        throw std::invalid_argument("mask size must be positive");
    }
}

void MaskGrid::fill_span(int row, int col_begin, int col_end, std::uint8_t v)
{
    std::fill(m_data.begin() + static_cast<std::ptrdiff_t>(index(col_begin, row)),
              m_data.begin() + static_cast<std::ptrdiff_t>(index(col_end, row)), v);
}

std::size_t MaskGrid::count(std::uint8_t v) const noexcept
{
    return static_cast<std::size_t>(std::count(m_data.begin(), m_data.end(), v));
}

std::string MaskPair::id() const
{
    std::string buf = std::to_string(tile.z) + "/" + std::to_string(tile.x) + "/" + std::to_string(tile.y) + ":";
    buf.append(general.data().begin(), general.data().end());
    buf.append(specific.data().begin(), specific.data().end());
    return sha256_hex(buf).substr(0, 16);
}

std::size_t ChangeMask::changed_count() const noexcept
{
    return static_cast<std::size_t>(std::count(changed.begin(), changed.end(), std::uint8_t{1}));
}

void scan_rings(std::span<const std::vector<PixelPoint>> rings, int width, int height, const SpanSink& sink)
{
    double ymin = INFINITY;
    double ymax = -INFINITY;
    for (const auto& ring : rings) {
        for (const auto& p : ring) {
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    if (!(ymin <= ymax)) {
        return;
    }
    const int row_first = to_pixel_index(std::floor(ymin - 0.5), 0, height);
    const int row_last = to_pixel_index(std::ceil(ymax), -1, height - 1);

    std::vector<double> xs;
    for (int row = row_first; row <= row_last; ++row) {
        const double y = row + 0.5;
        xs.clear();
        for (const auto& ring : rings) {
            for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
                const auto& a = ring[i];
                const auto& b = ring[i + 1];
                if ((a.y <= y) != (b.y <= y)) {
                    xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Centers c + 0.5 with xs[k] <= c + 0.5 < xs[k + 1].
            auto first_at_or_after = [&](double x) -> long long {
                if (x <= 0.5) {
                    return 0;
                }
                if (x > width - 0.5) {
                    return width;
                }
                auto c = static_cast<long long>(std::floor(x - 0.5));
                while (static_cast<double>(c) + 0.5 < x) {
                    ++c;
                }
                while (c > 0 && static_cast<double>(c - 1) + 0.5 >= x) {
                    --c;
                }
                return c;
            };
            const long long begin = first_at_or_after(xs[k]);
            const long long end = first_at_or_after(xs[k + 1]);
            if (begin < end) {
                sink(row, static_cast<int>(begin), static_cast<int>(end));
            }
        }
    }
}

void scan_stroke(std::span<const PixelPoint> vertices, double width_px, int width, int height, const SpanSink& sink)
{
    if (vertices.empty()) {
        return;
    }
    const double r = width_px / 2.0;
    const double r2 = r * r;

    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& p : vertices) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const int row_first = to_pixel_index(std::floor(ymin - r - 1), 0, height);
    const int row_last = to_pixel_index(std::ceil(ymax + r), -1, height - 1);
    const int col_first = to_pixel_index(std::floor(xmin - r - 1), 0, width);
    const int col_last = to_pixel_index(std::ceil(xmax + r), -1, width - 1);
    if (row_first > row_last || col_first > col_last) {
        return;
    }

    // A single vertex is a zero-length segment (a disc).
    const std::size_t segments = std::max<std::size_t>(1, vertices.size() - 1);
    auto covered = [&](double px, double py) {
        for (std::size_t i = 0; i < segments; ++i) {
            const auto& a = vertices[i];
            const auto& b = vertices[std::min(i + 1, vertices.size() - 1)];
            const double dx = b.x - a.x;
            const double dy = b.y - a.y;
            const double len2 = dx * dx + dy * dy;
            double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double ox = px - (a.x + t * dx);
            const double oy = py - (a.y + t * dy);
            const double d2 = ox * ox + oy * oy;
            if (d2 < r2 || (d2 == r2 && (oy < 0 || (oy == 0 && ox < 0)))) {
                return true;
            }
        }
        return false;
    };

    for (int row = row_first; row <= row_last; ++row) {
        int run_start = -1;
        for (int col = col_first; col <= col_last; ++col) {
            const bool in = covered(col + 0.5, row + 0.5);
            if (in && run_start < 0) {
                run_start = col;
            } else if (!in && run_start >= 0) {
                sink(row, run_start, col);
                run_start = -1;
            }
        }
        if (run_start >= 0) {
            sink(row, run_start, col_last + 1);
        }
    }
}

std::vector<PixelPoint> project_ring(std::span<const GeoPoint> ring, const TileRef& tile, int tile_size)
{
    std::vector<PixelPoint> out;
    out.reserve(ring.size());
    for (const auto& p : ring) {
        auto px = geo_to_pixel(p, tile, tile_size);
        out.push_back({px.col, px.row});
    }
    return out;
}

namespace {

double shoelace_px(std::span<const PixelPoint> ring) noexcept
{
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        sum += ring[i].x * ring[i + 1].y - ring[i + 1].x * ring[i].y;
    }
    return std::abs(sum) / 2.0;
}

std::vector<std::vector<PixelPoint>> project_polygon(const Polygon& poly, const TileRef& tile, int tile_size)
{
    std::vector<std::vector<PixelPoint>> rings;
    rings.push_back(project_ring(poly.outer, tile, tile_size));
    for (const auto& h : poly.holes) {
        rings.push_back(project_ring(h, tile, tile_size));
    }
    return rings;
}

struct DrawItem {
    enum class Shape { Surface, Line, Point } shape;
    std::vector<std::vector<PixelPoint>> rings; // surfaces: all rings; lines/points: one vertex list
    double area = 0.0;
    double width_px = 1.0;
    GeneralClass general;
    std::uint8_t specific;
};

// Appends draw items for one geometry; returns false for a degenerate surface.
bool build_items(const Geometry& geometry, const SpecificClass* specific, GeneralClass general,
                 const ClassificationRules& rules, const TileRef& tile, int tile_size, std::vector<DrawItem>& out)
{
    const std::uint8_t sidx = specific != nullptr ? specific->index : 0;
    const double width = rules.line_width_px(specific, tile.z);
    return std::visit(
        [&](const auto& g) -> bool {
            using G = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<G, PointGeometry>) {
                auto px = geo_to_pixel(g.position, tile, tile_size);
                out.push_back({DrawItem::Shape::Point, {{{px.col, px.row}}}, 0.0,
                               rules.point_diameter_px(tile.z), general, sidx});
                return true;
            } else if constexpr (std::is_same_v<G, Polyline>) {
                out.push_back({DrawItem::Shape::Line, {project_ring(g.vertices, tile, tile_size)}, 0.0, width,
                               general, sidx});
                return true;
            } else {
                std::vector<Polygon> parts;
                if constexpr (std::is_same_v<G, Polygon>) {
                    parts.push_back(g);
                } else {
                    parts = g.parts;
                }
                DrawItem item{DrawItem::Shape::Surface, {}, 0.0, width, general, sidx};
                for (const auto& part : parts) {
                    auto rings = project_polygon(part, tile, tile_size);
                    item.area += shoelace_px(rings.front());
                    for (std::size_t h = 1; h < rings.size(); ++h) {
                        item.area -= shoelace_px(rings[h]);
                    }
                    for (auto& r : rings) {
                        item.rings.push_back(std::move(r));
                    }
                }
                if (!(item.area > 0.0)) {
                    return false;
                }
                out.push_back(std::move(item));
                return true;
            }
        },
        geometry);
}

void scan_item(const DrawItem& item, int size, const SpanSink& sink)
{
    switch (item.shape) {
    case DrawItem::Shape::Surface:
        scan_rings(item.rings, size, size, sink);
        break;
    case DrawItem::Shape::Line:
    case DrawItem::Shape::Point:
        scan_stroke(item.rings.front(), item.width_px, size, size, sink);
        break;
    }
}

} // namespace

double projected_area_px(const Polygon& poly, const TileRef& tile, int tile_size)
{
    auto rings = project_polygon(poly, tile, tile_size);
    double area = shoelace_px(rings.front());
    for (std::size_t h = 1; h < rings.size(); ++h) {
        area -= shoelace_px(rings[h]);
    }
    return area;
}

void rasterize_polygon(const Polygon& poly, std::uint8_t class_index, MaskGrid& grid, const TileRef& tile,
                       std::vector<std::string>* warnings)
{
    auto rings = project_polygon(poly, tile, grid.width());
    if (shoelace_px(rings.front()) == 0.0) {
        if (warnings != nullptr) {
            warnings->push_back("skipped polygon with zero projected area");
        }
        return;
    }
    scan_rings(rings, grid.width(), grid.height(),
               [&](int row, int c0, int c1) { grid.fill_span(row, c0, c1, class_index); });
}

void rasterize_polyline(const Polyline& line, std::uint8_t class_index, double width_px, MaskGrid& grid,
                        const TileRef& tile)
{
    if (!(width_px >= 1.0)) {
        throw std::invalid_argument("stroke width must be at least one pixel");
    }
    auto vertices = project_ring(line.vertices, tile, grid.width());
    scan_stroke(vertices, width_px, grid.width(), grid.height(),
                [&](int row, int c0, int c1) { grid.fill_span(row, c0, c1, class_index); });
}

MaskPair render_masks(const OsmDocument& doc, const TileRef& tile, const ClassificationRules& rules, int tile_size,
                      std::vector<std::string>* warnings)
{
    if (!tile.valid()) {
        throw RangeError("invalid tile reference");
    }
    MaskPair out{MaskGrid(tile_size, MaskKind::General, rules.version()),
                 MaskGrid(tile_size, MaskKind::Specific, rules.version()), tile};

    std::vector<DrawItem> items;
    for (const auto& element : doc.elements()) {
        const auto general = classify_general(element.tags(), rules);
        if (!general) {
            continue;
        }
        const auto* specific = classify_specific(element.tags(), rules);
        try {
            auto geometry = resolve_geometry(doc, element.ref(), rules.area_rule(), warnings);
            if (!build_items(geometry, specific, *general, rules, tile, tile_size, items) && warnings != nullptr) {
                warnings->push_back(to_string(element.ref()) + ": zero projected area, skipped");
            }
        } catch (const Error& e) {
            if (warnings != nullptr) {
                warnings->push_back(to_string(element.ref()) + ": " + e.what());
            }
        }
    }

    auto rank = [](const DrawItem& d) { return static_cast<int>(d.shape); };
    std::stable_sort(items.begin(), items.end(), [&](const DrawItem& a, const DrawItem& b) {
        if (rank(a) != rank(b)) {
            return rank(a) < rank(b);
        }
        return a.shape == DrawItem::Shape::Surface && a.area > b.area;
    });

    for (const auto& item : items) {
        const auto g = static_cast<std::uint8_t>(item.general);
        scan_item(item, tile_size, [&](int row, int c0, int c1) {
            out.general.fill_span(row, c0, c1, g);
            out.specific.fill_span(row, c0, c1, item.specific);
        });
    }
    return out;
}

std::vector<std::uint8_t> geometry_footprint(const Geometry& geometry, const SpecificClass* specific,
                                             const ClassificationRules& rules, const TileRef& tile, int tile_size)
{
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(tile_size) * static_cast<std::size_t>(tile_size), 0);
    std::vector<DrawItem> items;
    build_items(geometry, specific, GeneralClass::OtherSurface, rules, tile, tile_size, items);
    for (const auto& item : items) {
        scan_item(item, tile_size, [&](int row, int c0, int c1) {
            auto base = mask.begin() + static_cast<std::ptrdiff_t>(row) * tile_size;
            std::fill(base + c0, base + c1, std::uint8_t{1});
        });
    }
    return mask;
}

ChangeMask mask_diff(const MaskPair& before, const MaskPair& after)
{
    if (before.general.width() != after.general.width() || before.specific.width() != after.specific.width() ||
        before.general.width() != before.specific.width() || before.tile != after.tile) {
        throw ShapeError("mask pairs differ in size or tile");
    }
    ChangeMask cm;
    cm.width = before.general.width();
    cm.height = before.general.height();
    cm.changed.resize(before.general.data().size());
    const auto g0 = before.general.data();
    const auto g1 = after.general.data();
    const auto s0 = before.specific.data();
    const auto s1 = after.specific.data();
    for (std::size_t i = 0; i < cm.changed.size(); ++i) {
        cm.changed[i] = (g0[i] != g1[i] || s0[i] != s1[i]) ? 1 : 0;
    }
    cm.before_id = before.id();
    cm.after_id = after.id();
    return cm;
}

} // namespace osmforge
