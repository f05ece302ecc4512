#include "osmforge/geo.hpp"

#include "osmforge/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace osmforge {

namespace {

double tiles_at(int z)
{
    return std::ldexp(1.0, z);
}

void check_zoom(int z)
{
    if (z < 0 || z > kMaxZoom) {
        throw RangeError("zoom " + std::to_string(z) + " outside [0, 22]");
    }
}

std::int64_t clamp_index(double v, std::int64_t n)
{
    if (v < 0) {
        return 0;
    }
    if (v >= static_cast<double>(n)) {
        return n - 1;
    }
    return static_cast<std::int64_t>(v);
}

} // namespace

bool TileRef::valid() const noexcept
{
    if (z < 0 || z > kMaxZoom) {
        return false;
    }
    const std::int64_t n = std::int64_t{1} << z;
    return x >= 0 && x < n && y >= 0 && y < n;
}

void check_mercator(const GeoPoint& p)
{
    if (!(p.lon >= -180.0 && p.lon <= 180.0)) {
        std::ostringstream msg;
        msg << "longitude " << p.lon << " outside [-180, 180]";
        throw RangeError(msg.str());
    }
    if (!(p.lat > -kMaxMercatorLat && p.lat < kMaxMercatorLat)) {
        std::ostringstream msg;
        msg << "latitude " << p.lat << " outside the Web Mercator band";
        throw RangeError(msg.str());
    }
}

double lon_to_world_x(double lon) noexcept
{
    return (lon + 180.0) / 360.0;
}

double lat_to_world_y(double lat)
{
    if (!(std::abs(lat) < 90.0)) {
        throw RangeError("latitude at or beyond a pole");
    }
    const double r = lat * std::numbers::pi / 180.0;
    return (1.0 - std::log(std::tan(r) + 1.0 / std::cos(r)) / std::numbers::pi) / 2.0;
}

double world_x_to_lon(double x) noexcept
{
    return x * 360.0 - 180.0;
}

double world_y_to_lat(double y) noexcept
{
    return std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * y))) * 180.0 / std::numbers::pi;
}

TileRef tile_index(const GeoPoint& p, int z)
{
    check_zoom(z);
    check_mercator(p);
    const double n = tiles_at(z);
    const auto count = std::int64_t{1} << z;
    return {z, clamp_index(std::floor(lon_to_world_x(p.lon) * n), count),
            clamp_index(std::floor(lat_to_world_y(p.lat) * n), count)};
}

GeoBounds tile_bounds(const TileRef& t)
{
    if (!t.valid()) {
        throw RangeError("invalid tile reference");
    }
    const double n = tiles_at(t.z);
    const auto x = static_cast<double>(t.x);
    const auto y = static_cast<double>(t.y);
    return {world_x_to_lon(x / n), world_y_to_lat((y + 1) / n), world_x_to_lon((x + 1) / n),
            world_y_to_lat(y / n)};
}

PixelCoord geo_to_pixel(const GeoPoint& p, const TileRef& t, int tile_size)
{
    if (tile_size < 1) {
        throw RangeError("tile size must be positive");
    }
    if (!(std::abs(p.lat) < kMaxMercatorLat)) {
        throw RangeError("latitude outside the Web Mercator band");
    }
    const double n = tiles_at(t.z);
    const double size = tile_size;
    return {(lon_to_world_x(p.lon) * n - static_cast<double>(t.x)) * size,
            (lat_to_world_y(p.lat) * n - static_cast<double>(t.y)) * size, tile_size};
}

GeoPoint pixel_to_geo(const PixelCoord& px, const TileRef& t)
{
    const double n = tiles_at(t.z);
    const double size = px.tile_size;
    return {world_x_to_lon((static_cast<double>(t.x) + px.col / size) / n),
            world_y_to_lat((static_cast<double>(t.y) + px.row / size) / n)};
}

} // namespace osmforge
