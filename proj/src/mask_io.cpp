#include "osmforge/mask_io.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"

#include <json.hpp>
#include <png.h>

#include <cstring>
#include <limits>

namespace osmforge {

using nlohmann::json;

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t len)
{
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

void no_flush(png_structp) {}

[[noreturn]] void png_fail(png_structp, png_const_charp msg)
{
    throw Error(std::string("libpng: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter()
    {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
        if (png == nullptr) {
            throw Error("png_create_write_struct failed");
        }
        info = png_create_info_struct(png);
        if (info == nullptr) {
            png_destroy_write_struct(&png, nullptr);
            throw Error("png_create_info_struct failed");
        }
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;
};

std::string write_png(int width, int height, int color_type, std::span<const Rgb> palette,
                      std::span<const std::uint8_t> pixels, int bytes_per_pixel)
{
    std::string out;
    PngWriter w;
    png_set_write_fn(w.png, &out, append_bytes, no_flush);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> colors;
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        for (const auto& c : palette) {
            colors.push_back({c.r, c.g, c.b});
        }
        png_set_PLTE(w.png, w.info, colors.data(), static_cast<int>(colors.size()));
    }
    png_write_info(w.png, w.info);
    const auto stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(bytes_per_pixel);
    for (int row = 0; row < height; ++row) {
        png_write_row(w.png, const_cast<png_bytep>(pixels.data() + stride * static_cast<std::size_t>(row)));
    }
    png_write_end(w.png, nullptr);
    return out;
}

struct ReadCursor {
    std::string_view bytes;
    std::size_t pos = 0;
};

void read_bytes(png_structp png, png_bytep data, png_size_t len)
{
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + len > cur->bytes.size()) {
        png_error(png, "truncated PNG");
    }
    std::memcpy(data, cur->bytes.data() + cur->pos, len);
    cur->pos += len;
}

json tile_json(const TileRef& t)
{
    return {{"z", t.z}, {"x", t.x}, {"y", t.y}};
}

} // namespace

std::string encode_indexed_png(const MaskGrid& grid, std::span<const Rgb> palette)
{
    if (palette.empty() || palette.size() > 256) {
        throw Error("palette must have 1..256 entries");
    }
    for (auto v : grid.data()) {
        if (v >= palette.size()) {
            throw Error("mask value " + std::to_string(v) + " has no palette entry");
        }
    }
    return write_png(grid.width(), grid.height(), PNG_COLOR_TYPE_PALETTE, palette, grid.data(), 1);
}

std::string encode_rgb_png(int width, int height, std::span<const std::uint8_t> rgb)
{
    if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
        throw ShapeError("rgb buffer size does not match dimensions");
    }
    return write_png(width, height, PNG_COLOR_TYPE_RGB, {}, rgb, 3);
}

DecodedPng decode_indexed_png(std::string_view bytes)
{
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (png == nullptr) {
        throw Error("png_create_read_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    DecodedPng out;
    try {
        ReadCursor cursor{bytes, 0};
        png_set_read_fn(png, &cursor, read_bytes);
        png_read_info(png, info);
        if (png_get_color_type(png, info) != PNG_COLOR_TYPE_PALETTE || png_get_bit_depth(png, info) != 8) {
            throw Error("not an 8-bit indexed PNG");
        }
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        png_colorp colors = nullptr;
        int ncolors = 0;
        png_get_PLTE(png, info, &colors, &ncolors);
        for (int i = 0; i < ncolors; ++i) {
            out.palette.push_back({colors[i].red, colors[i].green, colors[i].blue});
        }
        out.indices.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height));
        for (int row = 0; row < out.height; ++row) {
            png_read_row(png, out.indices.data() + static_cast<std::size_t>(row) * static_cast<std::size_t>(out.width),
                         nullptr);
        }
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

std::span<const Rgb> palette_for(const MaskGrid& grid, const ClassificationRules& rules)
{
    if (grid.kind() == MaskKind::General) {
        return rules.general_palette();
    }
    return rules.specific_palette();
}

std::string mask_sidecar_json(const MaskGrid& grid, const TileRef& tile)
{
    json j = {{"width", grid.width()},
              {"height", grid.height()},
              {"kind", std::string(to_string(grid.kind()))},
              {"palette_version", grid.palette_version()},
              {"tile", tile_json(tile)},
              {"dtype", "uint8"},
              {"layout", "row-major"}};
    return j.dump(1);
}

void write_mask_raw(const MaskGrid& grid, const TileRef& tile, const std::filesystem::path& path)
{
    const auto d = grid.data();
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(d.data()), d.size()));
    auto sidecar = path;
    sidecar += ".json";
    write_file_atomic(sidecar, mask_sidecar_json(grid, tile));
}

LoadedMask read_mask_raw(const std::filesystem::path& path)
{
    auto sidecar_path = path;
    sidecar_path += ".json";
    json meta;
    try {
        meta = json::parse(read_file(sidecar_path));
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    const auto bytes = read_file(path);
    try {
        const int width = meta.at("width").get<int>();
        const int height = meta.at("height").get<int>();
        const auto kind_name = meta.at("kind").get<std::string>();
        if (width != height || width < 1) {
            throw SchemaError("mask sidecar has non-square or empty dimensions", 0);
        }
        if (bytes.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
            throw SchemaError("raw mask size does not match sidecar", 0);
        }
        const auto kind = kind_name == "general" ? MaskKind::General : MaskKind::Specific;
        LoadedMask out{MaskGrid(width, kind, meta.at("palette_version").get<std::string>()),
                       {meta.at("tile").at("z").get<int>(), meta.at("tile").at("x").get<std::int64_t>(),
                        meta.at("tile").at("y").get<std::int64_t>()}};
        std::memcpy(out.grid.data().data(), bytes.data(), bytes.size());
        return out;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("mask sidecar: ") + e.what(), 0);
    }
}

} // namespace osmforge
