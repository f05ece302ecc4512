#include "osmforge/pair.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace osmforge {

std::optional<PixelBox> bounding_box(std::span<const std::uint8_t> mask, int size)
{
    std::optional<PixelBox> box;
    for (int row = 0; row < size; ++row) {
        for (int col = 0; col < size; ++col) {
            if (mask[static_cast<std::size_t>(row) * size + col] == 0) {
                continue;
            }
            if (!box) {
                box = PixelBox{col, row, col, row};
            } else {
                box->col_min = std::min(box->col_min, col);
                box->col_max = std::max(box->col_max, col);
                box->row_min = std::min(box->row_min, row);
                box->row_max = std::max(box->row_max, row);
            }
        }
    }
    return box;
}

namespace {

void add_footprint(const OsmDocument& doc, const ElementRef& ref, const ClassificationRules& rules,
                   const TileRef& tile, int tile_size, std::vector<std::uint8_t>& region)
{
    const auto* element = doc.find(ref);
    if (element == nullptr || !classify_general(element->tags(), rules)) {
        return;
    }
    Geometry geometry;
    try {
        geometry = resolve_geometry(doc, ref, rules.area_rule());
    } catch (const Error&) {
        return; // not drawable, so it contributes no pixels
    }
    const auto fp = geometry_footprint(geometry, classify_specific(element->tags(), rules), rules, tile, tile_size);
    for (std::size_t i = 0; i < region.size(); ++i) {
        region[i] |= fp[i];
    }
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int size, int r)
{
    if (r <= 0) {
        return mask;
    }
    // Separable max filter: rows, then columns.
    std::vector<std::uint8_t> tmp(mask.size(), 0);
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int row = 0; row < size; ++row) {
        for (int col = 0; col < size; ++col) {
            if (mask[static_cast<std::size_t>(row) * size + col]) {
                for (int c = std::max(0, col - r); c <= std::min(size - 1, col + r); ++c) {
                    tmp[static_cast<std::size_t>(row) * size + c] = 1;
                }
            }
        }
    }
    for (int row = 0; row < size; ++row) {
        for (int col = 0; col < size; ++col) {
            if (tmp[static_cast<std::size_t>(row) * size + col]) {
                for (int rr = std::max(0, row - r); rr <= std::min(size - 1, row + r); ++rr) {
                    out[static_cast<std::size_t>(rr) * size + col] = 1;
                }
            }
        }
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> edit_region(const OsmDocument& before, const OsmDocument& after, const ChangeSet& changes,
                                      const ClassificationRules& rules, const TileRef& tile, int tile_size,
                                      int dilation_px)
{
    std::vector<std::uint8_t> region(static_cast<std::size_t>(tile_size) * tile_size, 0);
    auto both = [&](const ElementRef& ref) {
        add_footprint(before, ref, rules, tile, tile_size, region);
        add_footprint(after, ref, rules, tile, tile_size, region);
    };
    for (const auto& ref : changes.added) {
        both(ref);
    }
    for (const auto& ref : changes.removed) {
        both(ref);
    }
    for (const auto& r : changes.retagged) {
        both(r.target);
    }
    for (const auto& ref : changes.modified) {
        both(ref);
    }
    return dilate(region, tile_size, dilation_px);
}

LocalityReport edit_locality(const ChangeMask& change, std::span<const std::uint8_t> region, int dilation_px)
{
    if (change.width != change.height || region.size() != change.changed.size()) {
        throw ShapeError("change mask and edit region differ in size");
    }
    LocalityReport r;
    r.dilation_px = dilation_px;
    for (std::size_t i = 0; i < region.size(); ++i) {
        r.changed_pixels += change.changed[i];
        r.region_pixels += region[i] ? 1 : 0;
        if (change.changed[i] && !region[i]) {
            ++r.changed_outside;
        }
    }
    r.changed_box = bounding_box(change.changed, change.width);
    r.region_box = bounding_box(region, change.width);
    return r;
}

EditPair make_edit_pair(const OsmDocument& doc, const EditScript& script, const TileRef& tile,
                        const TimeStamp6D& ts, const std::string& country, const ClassificationRules& rules,
                        const EncoderWeights& weights, const BundleOptions& options,
                        std::vector<std::string>* warnings)
{
    EditPair p;
    p.after_doc = apply_edit(doc, script);
    p.changes = diff_documents(doc, p.after_doc);
    p.before = assemble_bundle(doc, tile, ts, country, rules, weights, options, warnings);
    p.after = assemble_bundle(p.after_doc, tile, ts, country, rules, weights, options, warnings);
    p.change = mask_diff(p.before.masks, p.after.masks);
    const int dilation = static_cast<int>(std::ceil(rules.max_line_width_px(tile.z)));
    const auto region = edit_region(doc, p.after_doc, p.changes, rules, tile, options.tile_size, dilation);
    p.locality = edit_locality(p.change, region, dilation);
    return p;
}

std::string locality_json(const LocalityReport& r)
{
    auto box = [](const std::optional<PixelBox>& b) -> nlohmann::json {
        if (!b) {
            return nullptr;
        }
        return {{"col_min", b->col_min}, {"row_min", b->row_min}, {"col_max", b->col_max}, {"row_max", b->row_max}};
    };
    const nlohmann::json j = {{"changed_pixels", r.changed_pixels},
                              {"region_pixels", r.region_pixels},
                              {"changed_outside_region", r.changed_outside},
                              {"dilation_px", r.dilation_px},
                              {"changed_box", box(r.changed_box)},
                              {"region_box", box(r.region_box)},
                              {"local", r.local()}};
    return j.dump(1) + "\n";
}

} // namespace osmforge
