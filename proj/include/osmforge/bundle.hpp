#pragma once

#include "osmforge/encoders.hpp"
#include "osmforge/osm.hpp"
#include "osmforge/raster.hpp"
#include "osmforge/taxonomy.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace osmforge {

/// Everything the generator is conditioned on for one tile: both masks,
/// location and time embeddings, the prompt and optionally a text embedding.
struct ConditioningBundle {
    MaskPair masks;
    Embedding e_loc;
    Embedding e_time;
    std::string prompt;
    std::optional<Embedding> e_text;
    TileRef tile;
    TimeStamp6D timestamp;
    std::string country;

    friend bool operator==(const ConditioningBundle&, const ConditioningBundle&) = default;
};

struct BundleOptions {
    std::size_t top_k = 5;
    int tile_size = kDefaultTileSize;
    /// External uses `external_text` as supplied (e.g. a CLIP embedding file).
    enum class Text { None, Pseudo, External } text = Text::None;
    std::size_t text_dim = 768;
    std::optional<Embedding> external_text;
};

/// Renders masks, encodes the tile center and timestamp, and builds the
/// prompt from the specific-mask summary.
ConditioningBundle assemble_bundle(const OsmDocument& doc, const TileRef& tile, const TimeStamp6D& ts,
                                   const std::string& country, const ClassificationRules& rules,
                                   const EncoderWeights& weights, const BundleOptions& options = {},
                                   std::vector<std::string>* warnings = nullptr);

/// Files written for one bundle, relative to the manifest directory.
struct BundleFiles {
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> files;
};

/// Writes `<stem>.bundle.json` plus the mask PNGs, raw masks with sidecars
/// and embedding files it references. The manifest records a SHA-256 for
/// every referenced file.
BundleFiles write_bundle(const ConditioningBundle& bundle, const ClassificationRules& rules,
                         const std::filesystem::path& dir, const std::string& stem);

/// Loads a bundle from its manifest, verifying every file hash.
ConditioningBundle read_bundle(const std::filesystem::path& manifest);

} // namespace osmforge
