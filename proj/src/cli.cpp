#include "osmforge/cli.hpp"

#include "osmforge/diffusion.hpp"
#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"
#include "osmforge/mask_io.hpp"
#include "osmforge/pair.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace osmforge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p)
{
    return p.empty() || p.is_absolute() ? p : (base / p).lexically_normal();
}

} // namespace

ForgeConfig ForgeConfig::from_json(const json& j, const fs::path& base_dir)
{
    ForgeConfig c;
    try {
        c.taxonomy = resolve(base_dir, j.value("taxonomy", std::string("taxonomy.json")));
        if (j.contains("ingest")) {
            c.ingest = IngestConfig::from_json(j.at("ingest"));
        }
        c.ingest.cache_dir = resolve(base_dir, c.ingest.cache_dir);
        c.ingest.fixtures_dir = resolve(base_dir, c.ingest.fixtures_dir);

        if (j.contains("encoders")) {
            const auto& e = j.at("encoders");
            c.seed = e.value("seed", c.seed);
            if (e.contains("weights") && !e.at("weights").is_null()) {
                c.weights = resolve(base_dir, e.at("weights").get<std::string>());
            }
            c.dims.time_dim = e.value("time_dim", c.dims.time_dim);
            c.dims.location_dim = e.value("location_dim", c.dims.location_dim);
            c.dims.location_hidden = e.value("location_hidden", c.dims.location_hidden);
            c.dims.frequencies = e.value("frequencies", c.dims.frequencies);
            c.dims.activation = parse_activation(e.value("activation", std::string(to_string(c.dims.activation))));
        }
        if (j.contains("bundle")) {
            const auto& b = j.at("bundle");
            c.bundle.tile_size = b.value("tile_size", c.bundle.tile_size);
            c.bundle.top_k = b.value("top_k", c.bundle.top_k);
            const auto text = b.value("text", std::string("none"));
            if (text == "none") {
                c.bundle.text = BundleOptions::Text::None;
            } else if (text == "pseudo") {
                c.bundle.text = BundleOptions::Text::Pseudo;
            } else {
                throw ConfigError("bundle.text must be \"none\" or \"pseudo\"");
            }
            c.bundle.text_dim = b.value("text_dim", c.bundle.text_dim);
        }
        if (j.contains("diffusion")) {
            const auto& d = j.at("diffusion");
            c.diffusion_steps = d.value("T", c.diffusion_steps);
            c.beta_min = d.value("beta_min", c.beta_min);
            c.beta_max = d.value("beta_max", c.beta_max);
            c.ddim_steps = d.value("ddim_steps", c.ddim_steps);
            c.cfg_scale = d.value("cfg_scale", c.cfg_scale);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.dims.frequencies < 1 || c.dims.time_dim < 1 || c.dims.location_dim < 1 || c.dims.location_hidden < 1) {
        throw ConfigError("config: encoder dimensions must be positive");
    }
    if (c.bundle.tile_size < 1 || c.bundle.top_k < 1) {
        throw ConfigError("config: bundle.tile_size and bundle.top_k must be positive");
    }
    if (c.ddim_steps < 1 || c.ddim_steps > c.diffusion_steps) {
        throw ConfigError("config: diffusion.ddim_steps must lie in [1, T]");
    }
    return c;
}

ForgeConfig ForgeConfig::load(const fs::path& path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return from_json(j, path.parent_path());
}

json ForgeConfig::to_json() const
{
    return {{"taxonomy", taxonomy.generic_string()},
            {"ingest", ingest.to_json()},
            {"encoders",
             {{"seed", seed},
              {"weights", weights ? json(weights->generic_string()) : json(nullptr)},
              {"time_dim", dims.time_dim},
              {"location_dim", dims.location_dim},
              {"location_hidden", dims.location_hidden},
              {"frequencies", dims.frequencies},
              {"activation", to_string(dims.activation)}}},
            {"bundle",
             {{"tile_size", bundle.tile_size},
              {"top_k", bundle.top_k},
              {"text", bundle.text == BundleOptions::Text::Pseudo     ? "pseudo"
                       : bundle.text == BundleOptions::Text::External ? "external"
                                                                      : "none"},
              {"text_dim", bundle.text_dim}}},
            {"diffusion",
             {{"T", diffusion_steps},
              {"beta_min", beta_min},
              {"beta_max", beta_max},
              {"ddim_steps", ddim_steps},
              {"cfg_scale", cfg_scale}}}};
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                fields.back() += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.emplace_back();
        } else {
            fields.back() += ch;
        }
    }
    for (auto& f : fields) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return fields;
}

double parse_double(const std::string& s, const char* what)
{
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty() || !std::isfinite(v)) {
        throw RangeError(std::string(what) + " '" + s + "' is not a number");
    }
    return v;
}

} // namespace

PointsFile parse_points_csv(std::string_view text)
{
    PointsFile out;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (!header_seen) {
            const std::vector<std::string> expected{"lon", "lat", "zoom", "date", "country"};
            if (fields != expected) {
                throw ConfigError("points file header must be lon,lat,zoom,date,country");
            }
            header_seen = true;
            continue;
        }
        try {
            if (fields.size() != 5) {
                throw RangeError("expected 5 fields, got " + std::to_string(fields.size()));
            }
            PointRow row;
            row.line = line_no;
            row.point = {parse_double(fields[0], "lon"), parse_double(fields[1], "lat")};
            const double z = parse_double(fields[2], "zoom");
            if (z != std::floor(z) || z < 0 || z > kMaxZoom) {
                throw RangeError("zoom '" + fields[2] + "' must be an integer in [0, 22]");
            }
            row.zoom = static_cast<int>(z);
            row.date = TimeStamp6D::parse(fields[3]);
            if (fields[4].empty()) {
                throw RangeError("country is empty");
            }
            row.country = fields[4];
            row.tile = tile_index(row.point, row.zoom);
            out.rows.push_back(std::move(row));
        } catch (const Error& e) {
            out.errors.push_back("row " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header_seen) {
        throw ConfigError("points file is missing its header");
    }
    return out;
}

namespace {

std::string utc_now_iso()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string tile_stem(const TileRef& t)
{
    return std::to_string(t.z) + "_" + std::to_string(t.x) + "_" + std::to_string(t.y);
}

std::string tile_text(const TileRef& t)
{
    return std::to_string(t.z) + "/" + std::to_string(t.x) + "/" + std::to_string(t.y);
}

std::string date_stem(const TimeStamp6D& ts)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d%02d%02d", ts.year, ts.month, ts.day);
    return buf;
}

TileRef parse_tile_arg(const std::string& s)
{
    TileRef t;
    char extra = 0;
    long long x = 0;
    long long y = 0;
    if (std::sscanf(s.c_str(), "%d/%lld/%lld%c", &t.z, &x, &y, &extra) != 3) {
        throw ConfigError("tile '" + s + "' is not z/x/y");
    }
    t.x = x;
    t.y = y;
    if (!t.valid()) {
        throw ConfigError("tile '" + s + "' is outside the zoom's range");
    }
    return t;
}

/// Collects what a run read and wrote; written once at the end.
class RunManifest {
public:
    RunManifest(std::string command, const fs::path& out_dir, json config)
        : m_out(out_dir), m_start(std::chrono::steady_clock::now())
    {
        m_j = {{"command", std::move(command)},
               {"tool_version", kToolVersion},
               {"config", std::move(config)},
               {"started_at", utc_now_iso()},
               {"inputs", json::object()},
               {"outputs", json::object()},
               {"errors", json::array()}};
    }

    void input(const std::string& key, const fs::path& path)
    {
        std::lock_guard lock(m_mutex);
        m_j["inputs"][key] = sha256_file(path);
    }

    void output(const fs::path& path)
    {
        auto hash = sha256_file(path);
        std::lock_guard lock(m_mutex);
        m_j["outputs"][path.lexically_relative(m_out).generic_string()] = std::move(hash);
    }

    void output_bytes(const fs::path& rel, std::string_view bytes)
    {
        write_file_atomic(m_out / rel, bytes);
        output(m_out / rel);
    }

    void error(const std::string& message)
    {
        std::lock_guard lock(m_mutex);
        m_j["errors"].push_back(message);
    }

    json& extra(const std::string& key) { return m_j[key]; }
    std::size_t error_count() const { return m_j["errors"].size(); }

    fs::path write(const std::string& name)
    {
        m_j["wall_clock_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
        const auto path = m_out / (name + ".manifest.json");
        write_file_atomic(path, m_j.dump(1) + "\n");
        return path;
    }

private:
    fs::path m_out;
    std::chrono::steady_clock::time_point m_start;
    std::mutex m_mutex;
    json m_j;
};

template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn)
{
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            fn(i);
        }
    };
    const auto threads_wanted = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
    std::vector<std::thread> threads;
    for (std::size_t i = 1; i < threads_wanted; ++i) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
}

struct CommonFlags {
    std::string config;
    std::string out = "out";
    std::string cache_dir;
    std::string fixtures;
    bool offline = false;
    int jobs = 0;
    std::string taxonomy;
};

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("--config", f.config, "Config file (JSON)");
    sub->add_option("--out", f.out, "Output root")->capture_default_str();
    sub->add_option("--cache-dir", f.cache_dir, "Cache root (overrides OSMFORGE_CACHE_DIR and the config)");
    sub->add_option("--fixtures", f.fixtures, "Fixture directory for offline mode");
    sub->add_flag("--offline", f.offline, "Serve fetches from fixtures only");
    sub->add_option("--jobs", f.jobs, "Parallel tiles")->check(CLI::PositiveNumber);
    sub->add_option("--taxonomy", f.taxonomy, "Taxonomy config (overrides the config)");
}

ForgeConfig load_config(const CommonFlags& f)
{
    ForgeConfig c;
    if (!f.config.empty()) {
        c = ForgeConfig::load(f.config);
    } else {
#ifdef OSMFORGE_DEFAULT_CONFIG
        if (fs::exists(OSMFORGE_DEFAULT_CONFIG)) {
            c = ForgeConfig::load(OSMFORGE_DEFAULT_CONFIG);
        }
#endif
    }
    if (!f.taxonomy.empty()) {
        c.taxonomy = f.taxonomy;
    }
    c.ingest.cache_dir = f.cache_dir.empty() ? resolve_cache_dir(c.ingest.cache_dir) : fs::path(f.cache_dir);
    if (!f.fixtures.empty()) {
        c.ingest.fixtures_dir = f.fixtures;
    }
    if (f.offline) {
        c.ingest.offline = true;
    }
    if (c.ingest.offline && c.ingest.fixtures_dir.empty()) {
        throw ConfigError("offline mode needs --fixtures or ingest.fixtures_dir");
    }
    if (f.jobs > 0) {
        c.ingest.jobs = f.jobs;
    }
    return c;
}

ClassificationRules load_rules(const ForgeConfig& c)
{
    try {
        return ClassificationRules::load(c.taxonomy);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

EncoderWeights load_encoder_weights(const ForgeConfig& c)
{
    return c.weights ? load_weights_file(*c.weights) : EncoderWeights::seeded(c.seed, c.dims);
}

/// Reads the cached Overpass response for a tile.
OsmDocument load_cached_doc(const ForgeConfig& c, const TileRef& tile, RunManifest* manifest)
{
    Fetcher fetcher(c.ingest, nullptr);
    const FetchRequest req{tile, FetchKind::Osm};
    const auto path = fetcher.cache_path(req);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw FixtureMissError("no cached OSM data for tile " + tile_text(tile) + " (" + path.string() +
                               "); run `forge fetch` first");
    }
    if (manifest) {
        manifest->input("cache:" + fetcher.relative_path(req).generic_string(), path);
    }
    return parse_osm_json(read_file(path));
}

struct Target {
    TileRef tile;
    std::optional<TimeStamp6D> date;
    std::string country;
    std::string label;
};

std::vector<Target> targets_from(const std::vector<std::string>& tiles, const std::string& points,
                                 RunManifest& manifest, std::ostream& err)
{
    std::vector<Target> out;
    for (const auto& t : tiles) {
        out.push_back({parse_tile_arg(t), std::nullopt, {}, "tile " + t});
    }
    if (!points.empty()) {
        std::string text;
        try {
            text = read_file(points);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        manifest.input("points", points);
        auto parsed = parse_points_csv(text);
        for (const auto& e : parsed.errors) {
            err << e << "\n";
            manifest.error(e);
        }
        for (const auto& r : parsed.rows) {
            out.push_back({r.tile, r.date, r.country, "row " + std::to_string(r.line)});
        }
    }
    return out;
}

int finish(RunManifest& manifest, const std::string& name, std::ostream& out)
{
    const auto path = manifest.write(name);
    out << "manifest: " << path.string() << "\n";
    return manifest.error_count() == 0 ? kExitOk : kExitPartial;
}

int cmd_fetch(const CommonFlags& flags, const std::string& points, bool imagery, std::ostream& out,
              std::ostream& err)
{
    auto cfg = load_config(flags);
    if (imagery && !cfg.ingest.imagery) {
        throw ConfigError("--imagery needs an imagery endpoint in the config");
    }
    const fs::path out_dir = flags.out;
    RunManifest manifest("fetch", out_dir, cfg.to_json());
    auto targets = targets_from({}, points, manifest, err);

    std::vector<FetchRequest> requests;
    std::vector<std::string> labels;
    std::map<std::pair<TileRef, FetchKind>, bool> seen;
    for (const auto& t : targets) {
        for (auto kind : {FetchKind::Osm, FetchKind::Imagery}) {
            if (kind == FetchKind::Imagery && !imagery) {
                continue;
            }
            if (seen.emplace(std::make_pair(t.tile, kind), true).second) {
                requests.push_back({t.tile, kind});
                labels.push_back(t.label);
            }
        }
    }

    Fetcher fetcher(cfg.ingest, std::make_shared<HttplibTransport>());
    const auto outcomes = fetcher.fetch_all(requests);
    json entries = json::array();
    std::size_t ok = 0;
    std::size_t cached = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        json e = {{"tile", tile_text(std::get<TileRef>(requests[i].target))},
                  {"kind", to_string(requests[i].kind)},
                  {"source", labels[i]}};
        if (o.result) {
            ++ok;
            cached += o.result->from_cache ? 1 : 0;
            e["path"] = fetcher.relative_path(requests[i]).generic_string();
            e["sha256"] = o.result->sha256;
            e["from_cache"] = o.result->from_cache;
        } else {
            try {
                std::rethrow_exception(o.error);
            } catch (const std::exception& ex) {
                const auto msg = labels[i] + ": " + ex.what();
                err << msg << "\n";
                manifest.error(msg);
                e["error"] = ex.what();
            }
        }
        entries.push_back(std::move(e));
    }
    manifest.extra("entries") = std::move(entries);
    out << "fetched " << ok << "/" << requests.size() << " (" << cached << " from cache)\n";
    return finish(manifest, "fetch", out);
}

int cmd_render(const CommonFlags& flags, const std::vector<std::string>& tiles, const std::string& points,
               std::ostream& out, std::ostream& err)
{
    auto cfg = load_config(flags);
    const auto rules = load_rules(cfg);
    const fs::path out_dir = flags.out;
    RunManifest manifest("render", out_dir, cfg.to_json());
    manifest.input("taxonomy", cfg.taxonomy);
    auto targets = targets_from(tiles, points, manifest, err);
    if (targets.empty()) {
        throw ConfigError("render needs --tile or --points");
    }
    std::mutex err_mutex;
    std::vector<std::string> done(targets.size());
    parallel_for(targets.size(), cfg.ingest.jobs, [&](std::size_t i) {
        const auto& t = targets[i];
        try {
            const auto doc = load_cached_doc(cfg, t.tile, &manifest);
            std::vector<std::string> warnings;
            const auto masks = render_masks(doc, t.tile, rules, cfg.bundle.tile_size, &warnings);
            const auto stem = tile_stem(t.tile);
            for (const auto* grid : {&masks.general, &masks.specific}) {
                const std::string kind(to_string(grid->kind()));
                const auto base = fs::path("masks") / (stem + "." + kind);
                manifest.output_bytes(base.string() + ".png", encode_indexed_png(*grid, palette_for(*grid, rules)));
                const auto raw = out_dir / (base.string() + ".raw");
                write_mask_raw(*grid, t.tile, raw);
                manifest.output(raw);
                manifest.output(raw.string() + ".json");
            }
            std::lock_guard lock(err_mutex);
            for (const auto& w : warnings) {
                err << t.label << ": warning: " << w << "\n";
            }
            done[i] = stem;
        } catch (const Error& e) {
            const auto msg = t.label + ": " + e.what();
            manifest.error(msg);
            std::lock_guard lock(err_mutex);
            err << msg << "\n";
        }
    });
    out << "rendered " << std::count_if(done.begin(), done.end(), [](const auto& s) { return !s.empty(); }) << "/"
        << targets.size() << " tiles\n";
    return finish(manifest, "render", out);
}

int cmd_encode(const CommonFlags& flags, const std::vector<std::string>& tiles, const std::string& points,
               const std::string& date, const std::string& country, const std::string& text_embedding,
               std::ostream& out, std::ostream& err)
{
    auto cfg = load_config(flags);
    if (!text_embedding.empty()) {
        cfg.bundle.text = BundleOptions::Text::External;
        cfg.bundle.external_text = decode_embedding_file(read_file(text_embedding));
    }
    const auto rules = load_rules(cfg);
    const auto weights = load_encoder_weights(cfg);
    const fs::path out_dir = flags.out;
    RunManifest manifest("encode", out_dir, cfg.to_json());
    manifest.input("taxonomy", cfg.taxonomy);
    if (cfg.weights) {
        manifest.input("weights", *cfg.weights);
    }
    if (!text_embedding.empty()) {
        manifest.input("text_embedding", text_embedding);
    }
    auto targets = targets_from(tiles, points, manifest, err);
    if (targets.empty()) {
        throw ConfigError("encode needs --tile or --points");
    }
    for (auto& t : targets) {
        if (!t.date) {
            if (date.empty() || country.empty()) {
                throw ConfigError("--tile needs --date and --country");
            }
            t.date = TimeStamp6D::parse(date);
            t.country = country;
        }
    }
    std::mutex err_mutex;
    std::atomic<std::size_t> ok{0};
    parallel_for(targets.size(), cfg.ingest.jobs, [&](std::size_t i) {
        const auto& t = targets[i];
        try {
            const auto doc = load_cached_doc(cfg, t.tile, &manifest);
            std::vector<std::string> warnings;
            const auto bundle = assemble_bundle(doc, t.tile, *t.date, t.country, rules, weights, cfg.bundle, &warnings);
            const auto dir = out_dir / "bundles";
            const auto files = write_bundle(bundle, rules, dir, tile_stem(t.tile) + "_" + date_stem(*t.date));
            for (const auto& f : files.files) {
                manifest.output(dir / f);
            }
            manifest.output(dir / files.manifest);
            ++ok;
            std::lock_guard lock(err_mutex);
            for (const auto& w : warnings) {
                err << t.label << ": warning: " << w << "\n";
            }
        } catch (const Error& e) {
            const auto msg = t.label + ": " + e.what();
            manifest.error(msg);
            std::lock_guard lock(err_mutex);
            err << msg << "\n";
        }
    });
    out << "encoded " << ok << "/" << targets.size() << " bundles\n";
    return finish(manifest, "encode", out);
}

int cmd_pair(const CommonFlags& flags, const std::string& tile_arg, const std::string& edit_path,
             const std::string& date, const std::string& country, std::ostream& out, std::ostream& err)
{
    auto cfg = load_config(flags);
    const auto rules = load_rules(cfg);
    const auto weights = load_encoder_weights(cfg);
    const auto tile = parse_tile_arg(tile_arg);
    const auto ts = TimeStamp6D::parse(date);
    const fs::path out_dir = flags.out;
    RunManifest manifest("pair", out_dir, cfg.to_json());
    manifest.input("taxonomy", cfg.taxonomy);
    manifest.input("edit", edit_path);

    const auto doc = load_cached_doc(cfg, tile, &manifest);
    const auto script = parse_edit_script(read_file(edit_path));
    std::vector<std::string> warnings;
    const auto pair = make_edit_pair(doc, script, tile, ts, country, rules, weights, cfg.bundle, &warnings);
    for (const auto& w : warnings) {
        err << "warning: " << w << "\n";
    }

    for (const auto& [bundle, stem] : {std::pair{&pair.before, "before"}, std::pair{&pair.after, "after"}}) {
        const auto files = write_bundle(*bundle, rules, out_dir, stem);
        for (const auto& f : files.files) {
            manifest.output(out_dir / f);
        }
        manifest.output(out_dir / files.manifest);
    }
    manifest.output_bytes("after.osm.json", serialize_osm_json(pair.after_doc));

    MaskGrid change(pair.change.width, MaskKind::General, "change");
    std::copy(pair.change.changed.begin(), pair.change.changed.end(), change.data().begin());
    const std::vector<Rgb> change_palette{{0, 0, 0}, {255, 255, 255}};
    manifest.output_bytes("change.png", encode_indexed_png(change, change_palette));
    manifest.output_bytes("change.raw", std::string(pair.change.changed.begin(), pair.change.changed.end()));
    manifest.output_bytes("locality.json", locality_json(pair.locality));

    manifest.extra("changed_pixels") = pair.locality.changed_pixels;
    manifest.extra("local") = pair.locality.local();
    out << "changed pixels: " << pair.locality.changed_pixels << ", outside edit region: "
        << pair.locality.changed_outside << "\n";
    return finish(manifest, "pair", out);
}

struct DemoFlags {
    std::size_t dim = 16;
    std::vector<int> t_stars;
    int steps = 0;
    std::uint64_t seed = 0;
    std::string denoiser = "analytic";
    double s2 = 0.25;
    bool plot = false;
    bool trajectory = false;
};

double rel_l2(const std::vector<double>& a, const std::vector<double>& b, double* max_abs)
{
    double num = 0;
    double den = 0;
    *max_abs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
        *max_abs = std::max(*max_abs, std::abs(d));
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

void draw_line(std::vector<std::uint8_t>& rgb, int w, int h, int x0, int y0, int x1, int y1, Rgb c)
{
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int e = dx + dy;
    for (;;) {
        if (x0 >= 0 && x0 < w && y0 >= 0 && y0 < h) {
            auto* p = &rgb[(static_cast<std::size_t>(y0) * w + x0) * 3];
            p[0] = c.r;
            p[1] = c.g;
            p[2] = c.b;
        }
        if (x0 == x1 && y0 == y1) {
            break;
        }
        const int e2 = 2 * e;
        if (e2 >= dy) {
            e += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            e += dx;
            y0 += sy;
        }
    }
}

/// Error against t*/T on linear axes.
std::string error_plot(const std::vector<std::pair<double, double>>& pts)
{
    const int w = 400;
    const int h = 300;
    const int m = 30;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 255);
    const Rgb axis{0, 0, 0};
    draw_line(rgb, w, h, m, h - m, w - m, h - m, axis);
    draw_line(rgb, w, h, m, h - m, m, m, axis);
    double ymax = 0;
    for (const auto& p : pts) {
        ymax = std::max(ymax, p.second);
    }
    if (ymax <= 0) {
        ymax = 1;
    }
    auto px = [&](const std::pair<double, double>& p) {
        return std::pair{m + static_cast<int>(std::lround(p.first * (w - 2 * m))),
                         h - m - static_cast<int>(std::lround(p.second / ymax * (h - 2 * m)))};
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto [x, y] = px(pts[i]);
        if (i > 0) {
            const auto [x0, y0] = px(pts[i - 1]);
            draw_line(rgb, w, h, x0, y0, x, y, {30, 100, 220});
        }
        for (int d = -2; d <= 2; ++d) {
            draw_line(rgb, w, h, x - 2, y + d, x + 2, y + d, {220, 60, 40});
        }
    }
    return encode_rgb_png(w, h, rgb);
}

int cmd_invert_demo(const CommonFlags& flags, DemoFlags demo, std::ostream& out)
{
    auto cfg = load_config(flags);
    const auto s = make_schedule(cfg.diffusion_steps, LinearBeta{cfg.beta_min, cfg.beta_max});
    const int steps = demo.steps > 0 ? demo.steps : cfg.ddim_steps;
    if (steps > s.T) {
        throw ConfigError("--steps exceeds T");
    }
    if (demo.dim < 1 || !(demo.s2 > 0)) {
        throw ConfigError("--dim and --s2 must be positive");
    }
    const auto grid = uniform_grid(s, steps);
    if (demo.t_stars.empty()) {
        for (double f : {0.0, 0.1, 0.25, 0.5, 1.0}) {
            demo.t_stars.push_back(grid[static_cast<std::size_t>(std::lround(f * steps))]);
        }
    }
    for (int t : demo.t_stars) {
        if (std::find(grid.begin(), grid.end(), t) == grid.end()) {
            throw ConfigError("t* = " + std::to_string(t) + " is not on the " + std::to_string(steps) +
                              "-step grid");
        }
    }
    std::sort(demo.t_stars.begin(), demo.t_stars.end());
    demo.t_stars.erase(std::unique(demo.t_stars.begin(), demo.t_stars.end()), demo.t_stars.end());

    const fs::path out_dir = flags.out;
    RunManifest manifest("invert-demo", out_dir, cfg.to_json());

    std::mt19937_64 rng(demo.seed);
    const std::vector<double> mu(demo.dim, 0.5);
    const std::vector<double> mu_new(demo.dim, -0.5);
    std::vector<double> x_obs = standard_normal(demo.dim, rng);
    for (std::size_t i = 0; i < demo.dim; ++i) {
        x_obs[i] = mu[i] + std::sqrt(demo.s2) * x_obs[i];
    }

    std::shared_ptr<const Denoiser> denoiser;
    if (demo.denoiser == "analytic") {
        denoiser = std::make_shared<AnalyticGaussianDenoiser>(mu, demo.s2, s);
    } else if (demo.denoiser == "constant") {
        denoiser = std::make_shared<ConstantDenoiser>(standard_normal(demo.dim, rng));
    } else {
        throw ConfigError("--denoiser must be analytic or constant");
    }
    if (cfg.cfg_scale != 1.0) {
        denoiser = std::make_shared<GuidedDenoiser>(denoiser, Condition{"unconditional", {}}, cfg.cfg_scale);
    }
    const Condition c_ref{"reference", mu};
    const Condition c_new{"target", mu_new};

    json recon = json::array();
    std::vector<std::pair<double, double>> curve;
    std::vector<TrajectoryRecord> log;
    bool monotone = true;
    double prev = -1;
    for (int t_star : demo.t_stars) {
        const bool last = t_star == demo.t_stars.back();
        InversionOptions opts{grid, false, demo.trajectory && last ? &log : nullptr};
        const auto state = ddim_invert(x_obs, c_ref, t_star, *denoiser, s, opts);
        const auto rec = redenoise(state, c_ref, *denoiser, s, SigmaPolicy::ddim(), nullptr, opts.log);
        double max_abs = 0;
        const double err = rel_l2(rec, x_obs, &max_abs);
        recon.push_back({{"t_star", t_star}, {"rel_l2_error", err}, {"max_abs_error", max_abs}});
        curve.emplace_back(static_cast<double>(t_star) / s.T, err);
        monotone = monotone && err >= prev;
        prev = err;
    }

    json report = {{"dim", demo.dim},
                   {"T", s.T},
                   {"steps", steps},
                   {"seed", demo.seed},
                   {"denoiser", demo.denoiser},
                   {"s2", demo.s2},
                   {"cfg_scale", cfg.cfg_scale},
                   {"schedule_id", s.id()},
                   {"reconstruction", recon},
                   {"monotone_non_decreasing", monotone}};

    if (demo.denoiser == "analytic") {
        const int t_star = grid[static_cast<std::size_t>(steps / 2)];
        const auto state = ddim_invert(x_obs, c_ref, t_star, *denoiser, s, {grid});
        const auto edited = redenoise(state, c_new, *denoiser, s);
        const double ab = s.alpha_bar[t_star];
        const double keep = std::sqrt(demo.s2) * std::sqrt(ab) / std::sqrt(ab * demo.s2 + 1.0 - ab);
        double dev = 0;
        double mean_shift = 0;
        for (std::size_t i = 0; i < demo.dim; ++i) {
            const double closed = x_obs[i] - mu[i] + mu_new[i] + keep * (mu[i] - mu_new[i]);
            dev = std::max(dev, std::abs(edited[i] - closed));
            mean_shift += (edited[i] - x_obs[i]) / (mu_new[i] - mu[i]);
        }
        report["conditional_shift"] = {{"t_star", t_star},
                                       {"mu_ref", mu.front()},
                                       {"mu_new", mu_new.front()},
                                       {"shift_fraction", mean_shift / static_cast<double>(demo.dim)},
                                       {"closed_form_shift_fraction", 1.0 - keep},
                                       {"max_abs_dev_from_closed_form", dev}};
    }

    manifest.output_bytes("invert_demo.json", report.dump(1) + "\n");
    if (demo.plot) {
        manifest.output_bytes("invert_demo.png", error_plot(curve));
    }
    if (demo.trajectory) {
        manifest.output_bytes("trajectory.jsonl", trajectory_jsonl(log));
    }
    for (const auto& r : recon) {
        out << "t*=" << r["t_star"].get<int>() << " rel_l2=" << r["rel_l2_error"].get<double>() << "\n";
    }
    return finish(manifest, "invert-demo", out);
}

} // namespace

int run_forge(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Build conditioning data from OpenStreetMap tiles", "forge"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    CommonFlags common;
    std::string points;
    std::vector<std::string> tiles;
    std::string tile;
    std::string date;
    std::string country;
    std::string edit;
    bool imagery = false;
    DemoFlags demo;

    auto* fetch = app.add_subcommand("fetch", "Fetch OSM data (and optionally imagery) for every point");
    add_common(fetch, common);
    fetch->add_option("--points", points, "CSV of lon,lat,zoom,date,country")->required();
    fetch->add_flag("--imagery", imagery, "Also fetch imagery tiles");

    auto* render = app.add_subcommand("render", "Render general and specific masks");
    add_common(render, common);
    render->add_option("--tile", tiles, "Tile z/x/y (repeatable)");
    render->add_option("--points", points, "CSV of lon,lat,zoom,date,country");

    auto* encode = app.add_subcommand("encode", "Write conditioning bundles");
    add_common(encode, common);
    encode->add_option("--tile", tiles, "Tile z/x/y (repeatable)");
    encode->add_option("--points", points, "CSV of lon,lat,zoom,date,country");
    encode->add_option("--date", date, "Capture date for --tile targets");
    encode->add_option("--country", country, "Country for --tile targets");
    std::string text_embedding;
    encode->add_option("--text-embedding", text_embedding, "Text embedding file used for every bundle");

    auto* pair = app.add_subcommand("pair", "Apply an edit script and write before/after bundles");
    add_common(pair, common);
    pair->add_option("--tile", tile, "Tile z/x/y")->required();
    pair->add_option("--edit", edit, "Edit script (JSON)")->required();
    pair->add_option("--date", date, "Capture date")->required();
    pair->add_option("--country", country, "Country")->required();

    auto* invert = app.add_subcommand("invert-demo", "Inversion experiments with analytic denoisers");
    add_common(invert, common);
    invert->add_option("--dim", demo.dim, "State dimension")->capture_default_str();
    invert->add_option("--t-star", demo.t_stars, "Inversion depths (grid points)");
    invert->add_option("--steps", demo.steps, "DDIM steps (default from config)");
    invert->add_option("--seed", demo.seed, "Seed")->capture_default_str();
    invert->add_option("--denoiser", demo.denoiser, "analytic or constant")->capture_default_str();
    invert->add_option("--s2", demo.s2, "Data variance")->capture_default_str();
    invert->add_flag("--plot", demo.plot, "Write an error-vs-t* plot");
    invert->add_flag("--trajectory", demo.trajectory, "Write the deepest trajectory as JSONL");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (fetch->parsed()) {
            return cmd_fetch(common, points, imagery, out, err);
        }
        if (render->parsed()) {
            return cmd_render(common, tiles, points, out, err);
        }
        if (encode->parsed()) {
            return cmd_encode(common, tiles, points, date, country, text_embedding, out, err);
        }
        if (pair->parsed()) {
            return cmd_pair(common, tile, edit, date, country, out, err);
        }
        return cmd_invert_demo(common, demo, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DateError& e) {
        err << "invalid date: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitPartial;
    }
}

int run_forge(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv{"forge"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run_forge(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace osmforge
