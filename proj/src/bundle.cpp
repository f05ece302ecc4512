#include "osmforge/bundle.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"
#include "osmforge/mask_io.hpp"

#include <json.hpp>

namespace osmforge {

using nlohmann::json;
namespace fs = std::filesystem;

ConditioningBundle assemble_bundle(const OsmDocument& doc, const TileRef& tile, const TimeStamp6D& ts,
                                   const std::string& country, const ClassificationRules& rules,
                                   const EncoderWeights& weights, const BundleOptions& options,
                                   std::vector<std::string>* warnings)
{
    ConditioningBundle b;
    b.tile = tile;
    b.timestamp = ts;
    b.country = country;
    b.masks = render_masks(doc, tile, rules, options.tile_size, warnings);
    b.e_loc = encode_location(tile_bounds(tile).center(), weights);
    b.e_time = encode_time(ts, weights);
    const auto summary = summarize_categories(b.masks.specific, rules, options.top_k);
    b.prompt = build_prompt(summary, country);
    if (options.text == BundleOptions::Text::Pseudo) {
        b.e_text = pseudo_text_embedding(b.prompt, options.text_dim);
    } else if (options.text == BundleOptions::Text::External) {
        if (!options.external_text || options.external_text->kind != EmbeddingKind::Text) {
            throw WeightsError("external text embedding missing or not of kind text");
        }
        b.e_text = options.external_text;
    }
    return b;
}

namespace {

json file_entry(const fs::path& dir, const std::string& name, std::string_view bytes, BundleFiles& files)
{
    write_file_atomic(dir / name, bytes);
    files.files.push_back(name);
    return {{"path", name}, {"sha256", sha256_hex(bytes)}};
}

std::string verified_read(const fs::path& dir, const json& entry)
{
    const auto rel = entry.at("path").get<std::string>();
    auto bytes = read_file(dir / rel);
    if (sha256_hex(bytes) != entry.at("sha256").get<std::string>()) {
        throw SchemaError("bundle file " + rel + " does not match its recorded hash", 0);
    }
    return bytes;
}

} // namespace

BundleFiles write_bundle(const ConditioningBundle& b, const ClassificationRules& rules, const fs::path& dir,
                         const std::string& stem)
{
    BundleFiles files;
    fs::create_directories(dir);

    json masks = json::object();
    for (const auto* grid : {&b.masks.general, &b.masks.specific}) {
        const std::string kind(to_string(grid->kind()));
        const auto d = grid->data();
        const std::string raw(reinterpret_cast<const char*>(d.data()), d.size());
        masks[kind] = {
            {"png", file_entry(dir, stem + "." + kind + ".png", encode_indexed_png(*grid, palette_for(*grid, rules)),
                               files)},
            {"raw", file_entry(dir, stem + "." + kind + ".raw", raw, files)},
            {"sidecar", file_entry(dir, stem + "." + kind + ".raw.json", mask_sidecar_json(*grid, b.tile), files)}};
    }

    json embeddings = json::object();
    auto add_embedding = [&](const char* name, const Embedding& e) {
        auto entry = file_entry(dir, stem + "." + name + ".bin", encode_embedding_file(e), files);
        entry["dim"] = e.dim();
        embeddings[name] = std::move(entry);
    };
    add_embedding("e_loc", b.e_loc);
    add_embedding("e_time", b.e_time);
    if (b.e_text) {
        add_embedding("e_text", *b.e_text);
    }

    json manifest = {{"format", "osmforge-bundle"},
                     {"version", 1},
                     {"tile", {{"z", b.tile.z}, {"x", b.tile.x}, {"y", b.tile.y}}},
                     {"timestamp", b.timestamp.iso()},
                     {"country", b.country},
                     {"prompt", b.prompt},
                     {"palette_version", b.masks.general.palette_version()},
                     {"mask_pair_id", b.masks.id()},
                     {"masks", masks},
                     {"embeddings", embeddings}};
    files.manifest = stem + ".bundle.json";
    write_file_atomic(dir / files.manifest, manifest.dump(1) + "\n");
    return files;
}

ConditioningBundle read_bundle(const fs::path& manifest_path)
{
    const auto dir = manifest_path.parent_path();
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    try {
        if (m.at("format").get<std::string>() != "osmforge-bundle") {
            throw SchemaError("not a bundle manifest", 0);
        }
        ConditioningBundle b;
        b.tile = {m.at("tile").at("z").get<int>(), m.at("tile").at("x").get<std::int64_t>(),
                  m.at("tile").at("y").get<std::int64_t>()};
        b.timestamp = TimeStamp6D::parse(m.at("timestamp").get<std::string>());
        b.country = m.at("country").get<std::string>();
        b.prompt = m.at("prompt").get<std::string>();

        auto load_mask = [&](const char* kind) {
            const auto& entry = m.at("masks").at(kind);
            verified_read(dir, entry.at("raw"));
            verified_read(dir, entry.at("sidecar"));
            verified_read(dir, entry.at("png"));
            auto loaded = read_mask_raw(dir / entry.at("raw").at("path").get<std::string>());
            if (loaded.tile != b.tile) {
                throw SchemaError(std::string(kind) + " mask refers to a different tile", 0);
            }
            return loaded.grid;
        };
        b.masks = {load_mask("general"), load_mask("specific"), b.tile};

        const auto& emb = m.at("embeddings");
        b.e_loc = decode_embedding_file(verified_read(dir, emb.at("e_loc")));
        b.e_time = decode_embedding_file(verified_read(dir, emb.at("e_time")));
        if (emb.contains("e_text")) {
            b.e_text = decode_embedding_file(verified_read(dir, emb.at("e_text")));
        }
        return b;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bundle manifest: ") + e.what(), 0);
    }
}

} // namespace osmforge
