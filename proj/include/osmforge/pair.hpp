#pragma once

#include "osmforge/bundle.hpp"
#include "osmforge/edit.hpp"

#include <optional>
#include <string>
#include <vector>

namespace osmforge {

/// Inclusive pixel rectangle.
struct PixelBox {
    int col_min = 0;
    int row_min = 0;
    int col_max = 0;
    int row_max = 0;

    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

std::optional<PixelBox> bounding_box(std::span<const std::uint8_t> mask, int size);

/// Pixels drawn by any element in `changes`, in either document, grown by
/// `dilation_px` in every direction (square neighborhood).
std::vector<std::uint8_t> edit_region(const OsmDocument& before, const OsmDocument& after, const ChangeSet& changes,
                                      const ClassificationRules& rules, const TileRef& tile, int tile_size,
                                      int dilation_px);

struct LocalityReport {
    std::size_t changed_pixels = 0;
    std::size_t region_pixels = 0;
    std::size_t changed_outside = 0;
    int dilation_px = 0;
    std::optional<PixelBox> changed_box;
    std::optional<PixelBox> region_box;

    bool local() const noexcept { return changed_outside == 0; }
};

LocalityReport edit_locality(const ChangeMask& change, std::span<const std::uint8_t> region, int dilation_px);

struct EditPair {
    OsmDocument after_doc;
    ChangeSet changes;
    ConditioningBundle before;
    ConditioningBundle after;
    ChangeMask change;
    LocalityReport locality;
};

/// Applies `script` to `doc` and conditions both versions of the tile. The
/// locality region is dilated by the widest stroke at the tile's zoom.
EditPair make_edit_pair(const OsmDocument& doc, const EditScript& script, const TileRef& tile,
                        const TimeStamp6D& ts, const std::string& country, const ClassificationRules& rules,
                        const EncoderWeights& weights, const BundleOptions& options = {},
                        std::vector<std::string>* warnings = nullptr);

std::string locality_json(const LocalityReport& report);

} // namespace osmforge
