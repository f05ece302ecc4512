#pragma once

#include "osmforge/raster.hpp"
#include "osmforge/taxonomy.hpp"

#include <filesystem>
#include <span>
#include <string>

namespace osmforge {

/// 8-bit indexed-color PNG. Throws Error if a pixel has no palette entry.
std::string encode_indexed_png(const MaskGrid& grid, std::span<const Rgb> palette);

struct DecodedPng {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> indices;
    std::vector<Rgb> palette;
};

DecodedPng decode_indexed_png(std::string_view bytes);

/// Palette matching the grid's kind.
std::span<const Rgb> palette_for(const MaskGrid& grid, const ClassificationRules& rules);

/// Sidecar JSON written next to a raw mask.
std::string mask_sidecar_json(const MaskGrid& grid, const TileRef& tile);

/// Writes `<path>` (raw row-major bytes) and `<path>.json`.
void write_mask_raw(const MaskGrid& grid, const TileRef& tile, const std::filesystem::path& path);

struct LoadedMask {
    MaskGrid grid;
    TileRef tile;
};

/// Reads a raw mask and its sidecar; throws SchemaError on inconsistency.
LoadedMask read_mask_raw(const std::filesystem::path& path);

/// RGB PNG (no palette) for plots.
std::string encode_rgb_png(int width, int height, std::span<const std::uint8_t> rgb);

} // namespace osmforge
