#pragma once

#include <cstdint>

namespace osmforge {

/// Web Mercator latitude limit, atan(sinh(pi)) in degrees.
inline constexpr double kMaxMercatorLat = 85.05112877980659;
inline constexpr int kMaxZoom = 22;
inline constexpr int kDefaultTileSize = 256;

struct GeoPoint {
    double lon = 0.0; ///< degrees
    double lat = 0.0; ///< degrees

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct TileRef {
    int z = 0;
    std::int64_t x = 0;
    std::int64_t y = 0;

    bool valid() const noexcept;
    friend bool operator==(const TileRef&, const TileRef&) = default;
    friend auto operator<=>(const TileRef&, const TileRef&) = default;
};

struct GeoBounds {
    double west = 0.0;
    double south = 0.0;
    double east = 0.0;
    double north = 0.0;

    bool valid() const noexcept { return west < east && south < north; }
    GeoPoint center() const noexcept { return {(west + east) / 2, (south + north) / 2}; }

    /// Half-open membership: west/north edges inclusive, east/south exclusive.
    bool contains(const GeoPoint& p) const noexcept
    {
        return p.lon >= west && p.lon < east && p.lat > south && p.lat <= north;
    }
    friend bool operator==(const GeoBounds&, const GeoBounds&) = default;
};

/// Fractional pixel position relative to a tile's north-west corner.
struct PixelCoord {
    double col = 0.0;
    double row = 0.0;
    int tile_size = kDefaultTileSize;
};

/// Throws RangeError unless lon is in [-180, 180] and lat strictly inside
/// the Mercator band.
void check_mercator(const GeoPoint& p);

/// Mercator x/y in [0, 1] world units; y grows southwards.
double lon_to_world_x(double lon) noexcept;
double lat_to_world_y(double lat);
double world_x_to_lon(double x) noexcept;
double world_y_to_lat(double y) noexcept;

TileRef tile_index(const GeoPoint& p, int z);
GeoBounds tile_bounds(const TileRef& t);
PixelCoord geo_to_pixel(const GeoPoint& p, const TileRef& t, int tile_size = kDefaultTileSize);
GeoPoint pixel_to_geo(const PixelCoord& px, const TileRef& t);

} // namespace osmforge
