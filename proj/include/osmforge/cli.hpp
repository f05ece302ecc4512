#pragma once

#include "osmforge/bundle.hpp"
#include "osmforge/encoders.hpp"
#include "osmforge/ingest.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace osmforge {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitUsage = 2 };

/// Top-level config file. Relative paths are resolved against the file's
/// directory.
struct ForgeConfig {
    std::filesystem::path taxonomy;
    IngestConfig ingest;
    EncoderDims dims;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> weights;
    BundleOptions bundle;
    int diffusion_steps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    int ddim_steps = 50;
    double cfg_scale = 1.0;

    /// Throws ConfigError.
    static ForgeConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static ForgeConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

struct PointRow {
    std::size_t line = 0; ///< 1-based line in the file
    GeoPoint point;
    int zoom = 0;
    TimeStamp6D date;
    std::string country;
    TileRef tile;
};

struct PointsFile {
    std::vector<PointRow> rows;
    std::vector<std::string> errors; ///< "row N: reason" for rejected rows
};

/// CSV with header `lon,lat,zoom,date,country`. Fields may be double-quoted.
/// A bad header throws ConfigError; bad rows are reported and skipped.
PointsFile parse_points_csv(std::string_view text);

/// Runs `forge <command> [flags]`. Returns the process exit code.
int run_forge(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_forge(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace osmforge
