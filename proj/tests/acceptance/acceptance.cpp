// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.

#include "osmforge/cli.hpp"
#include "osmforge/diffusion.hpp"
#include "osmforge/edit.hpp"
#include "osmforge/encoders.hpp"
#include "osmforge/errors.hpp"
#include "osmforge/geometry.hpp"
#include "osmforge/hash.hpp"
#include "osmforge/raster.hpp"
#include "osmforge/taxonomy.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>

using namespace osmforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = OSMFORGE_FIXTURES_DIR;
const fs::path kConfig = OSMFORGE_CONFIG_DIR;
constexpr TileRef kTile{18, 74975, 100281};

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v)
{
    std::ostringstream s;
    s << v;
    return s.str();
}

const ClassificationRules& rules()
{
    static const auto r = ClassificationRules::load(kConfig / "taxonomy.json");
    return r;
}

Outcome tile_math()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> lon(-180.0, 180.0);
    std::uniform_real_distribution<double> lat(-85.05, 85.05);
    std::uniform_int_distribution<int> zoom(0, 19);
    std::uniform_real_distribution<double> px(0.0, 256.0);
    int failures = 0;
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        const GeoPoint p{lon(rng), lat(rng)};
        const int z = zoom(rng);
        const auto t = tile_index(p, z);
        const auto b = tile_bounds(t);
        failures += !b.contains(p);
        failures += !(tile_index(b.center(), z) == t);
        const auto g = pixel_to_geo({px(rng), px(rng), 256}, t);
        const auto back = pixel_to_geo(geo_to_pixel(g, t), t);
        worst = std::max({worst, std::abs(back.lon - g.lon), std::abs(back.lat - g.lat)});
        const auto q = pixel_to_geo(geo_to_pixel(p, t), t);
        worst = std::max({worst, std::abs(q.lon - p.lon), std::abs(q.lat - p.lat)});
    }
    const double elapsed = seconds_since(start);
    return {failures == 0 && worst < 1e-6 && elapsed < 5.0,
            "10000 cases, " + std::to_string(failures) + " containment/round-trip failures, max composition error " +
                fmt(worst) + " deg, " + fmt(elapsed) + " s"};
}

bool brute_inside(const std::vector<std::vector<PixelPoint>>& rings, double x, double y)
{
    bool inside = false;
    for (const auto& ring : rings) {
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const auto& a = ring[i];
            const auto& b = ring[j];
            if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) {
                inside = !inside;
            }
        }
    }
    return inside;
}

Ring random_ring(std::mt19937_64& rng, const TileRef& tile, int size, double cx, double cy, double r_min,
                 double r_max, int n)
{
    std::uniform_real_distribution<double> radius(r_min, r_max);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    Ring ring;
    for (int k = 0; k < n; ++k) {
        const double a = 2 * std::numbers::pi * (k + 0.5 + jitter(rng)) / n;
        const double r = radius(rng);
        ring.push_back(pixel_to_geo({cx + r * std::cos(a), cy + r * std::sin(a), size}, tile));
    }
    ring.push_back(ring.front());
    return ring;
}

Outcome raster_oracle()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> centre(8.0, 56.0);
    std::uniform_int_distribution<int> verts(3, 14);
    std::uniform_real_distribution<double> coord(-6.0, 70.0);
    const TileRef tile{12, 1170, 1566};
    long mismatches = 0;
    long filled = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Polygon poly;
        if (trial % 2 == 0) {
            // Arbitrary vertex soup, self-intersections allowed.
            for (int k = verts(rng); k > 0; --k) {
                poly.outer.push_back(pixel_to_geo({coord(rng), coord(rng), 64}, tile));
            }
            poly.outer.push_back(poly.outer.front());
        } else {
            const double cx = centre(rng);
            const double cy = centre(rng);
            poly.outer = random_ring(rng, tile, 64, cx, cy, 14, 34, verts(rng));
            poly.holes.push_back(random_ring(rng, tile, 64, cx, cy, 3, 8, verts(rng)));
        }
        MaskGrid grid(64, MaskKind::General);
        rasterize_polygon(poly, 1, grid, tile);
        std::vector<std::vector<PixelPoint>> rings{project_ring(poly.outer, tile, 64)};
        for (const auto& h : poly.holes) {
            rings.push_back(project_ring(h, tile, 64));
        }
        for (int r = 0; r < 64; ++r) {
            for (int c = 0; c < 64; ++c) {
                const bool got = grid.at(c, r) == 1;
                filled += got;
                mismatches += got != brute_inside(rings, c + 0.5, r + 0.5);
            }
        }
    }
    const double elapsed = seconds_since(start);
    return {mismatches == 0 && elapsed < 30.0,
            "200 polygons on 64x64, " + std::to_string(mismatches) + " mismatches (" + std::to_string(filled) +
                " filled pixels checked), " + fmt(elapsed) + " s"};
}

Outcome area_fidelity()
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> centre(60.0, 196.0);
    std::uniform_int_distribution<int> verts(3, 24);
    int done = 0;
    double worst = 0;
    while (done < 100) {
        Polygon poly;
        poly.outer = random_ring(rng, kTile, 256, centre(rng), centre(rng), 15, 60, verts(rng));
        const double area = projected_area_px(poly, kTile, 256);
        if (area < 1000) {
            continue;
        }
        MaskGrid grid(256, MaskKind::General);
        rasterize_polygon(poly, 1, grid, kTile);
        worst = std::max(worst, std::abs(static_cast<double>(grid.count(1)) - area) / area);
        ++done;
    }
    return {worst <= 0.02, "100 polygons >= 1000 px, max relative area error " + fmt(worst)};
}

Outcome sigma_identity()
{
    const auto s = make_schedule();
    double worst = 0;
    for (int t = 1; t <= s.T; ++t) {
        const double sg = ddpm_sigma(s, t);
        worst = std::max(worst, std::abs(sg * sg - posterior_variance(s, t)));
    }
    return {worst < 1e-12, "T=1000, max |sigma^2 - posterior variance| = " + fmt(worst)};
}

Outcome sampling()
{
    const auto start = std::chrono::steady_clock::now();
    const auto s = make_schedule();
    const std::vector<double> mu{1.0, -0.5};
    const double s2 = 0.36;
    const AnalyticGaussianDenoiser d(mu, s2, s);
    std::mt19937_64 rng(20000);
    const int n = 20000;
    double sum[2] = {0, 0};
    double sq[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
        const auto x = sample(2, Condition{}, d, s, rng);
        for (int k = 0; k < 2; ++k) {
            sum[k] += x[k];
            sq[k] += x[k] * x[k];
        }
    }
    bool ok = true;
    std::string detail;
    for (int k = 0; k < 2; ++k) {
        const double mean = sum[k] / n;
        const double var = sq[k] / n - mean * mean;
        ok = ok && std::abs(mean - mu[k]) < 0.05 && std::abs(var - s2) / s2 < 0.10;
        detail += "x" + std::to_string(k) + " mean " + fmt(mean) + " (target " + fmt(mu[k]) + "), var " + fmt(var) +
                  " (target " + fmt(s2) + "); ";
    }
    const double elapsed = seconds_since(start);
    return {ok && elapsed < 60.0, "20000 DDPM samples, " + detail + fmt(elapsed) + " s"};
}

Outcome constant_round_trip()
{
    const auto s = make_schedule();
    std::mt19937_64 rng(6);
    const ConstantDenoiser d(standard_normal(32, rng));
    const auto x = standard_normal(32, rng);
    const Condition c{"ref", {}};
    double worst = 0;
    for (int t_star : {1, s.T / 4, s.T / 2, s.T}) {
        const auto state = ddim_invert(x, c, t_star, d, s);
        const auto back = redenoise(state, c, d, s);
        for (std::size_t i = 0; i < x.size(); ++i) {
            worst = std::max(worst, std::abs(back[i] - x[i]));
        }
    }
    return {worst < 1e-10, "t* in {1, T/4, T/2, T}, max abs error " + fmt(worst)};
}

Outcome monotonicity()
{
    const auto s = make_schedule();
    const std::size_t dim = 16;
    const AnalyticGaussianDenoiser d(std::vector<double>(dim, 0.5), 0.25, s);
    std::mt19937_64 rng(7);
    auto x = standard_normal(dim, rng);
    for (auto& v : x) {
        v = 0.5 + 0.5 * v;
    }
    const Condition c{"ref", std::vector<double>(dim, 0.5)};
    bool ok = true;
    double prev = -1;
    std::string detail;
    for (int t_star : {s.T / 10, s.T / 4, s.T / 2, s.T}) {
        const auto back = redenoise(ddim_invert(x, c, t_star, d, s), c, d, s);
        double num = 0;
        double den = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            num += (back[i] - x[i]) * (back[i] - x[i]);
            den += x[i] * x[i];
        }
        const double err = std::sqrt(num / den);
        ok = ok && err >= prev;
        prev = err;
        detail += "t*=" + std::to_string(t_star) + ": " + fmt(err) + "; ";
    }
    return {ok, "relative L2 " + detail};
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& m, int size, int d)
{
    std::vector<std::uint8_t> out(m.size(), 0);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            if (!m[static_cast<std::size_t>(r * size + c)]) {
                continue;
            }
            for (int rr = std::max(0, r - d); rr <= std::min(size - 1, r + d); ++rr) {
                for (int cc = std::max(0, c - d); cc <= std::min(size - 1, c + d); ++cc) {
                    out[static_cast<std::size_t>(rr * size + cc)] = 1;
                }
            }
        }
    }
    return out;
}

void add_footprint(std::vector<std::uint8_t>& acc, const OsmDocument& doc, const ElementRef& ref)
{
    const auto* e = doc.find(ref);
    if (!e) {
        return;
    }
    const auto& r = rules();
    try {
        const auto fp = geometry_footprint(resolve_geometry(doc, ref, r.area_rule()), classify_specific(e->tags(), r),
                                           r, kTile);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] |= fp[i];
        }
    } catch (const GeometryError&) {
    }
}

Outcome edit_locality()
{
    const auto& r = rules();
    const auto doc = parse_osm_json(read_file(kFixtures / "overpass/18/74975/100281.json"));
    const auto before = render_masks(doc, kTile, r);
    const int dilation = static_cast<int>(std::ceil(r.max_line_width_px(kTile.z)));
    bool ok = true;
    std::string detail;
    for (const auto* name : {"add_stadium", "add_building", "remove_buildings", "remove_storage_tanks",
                             "change_lake_to_grass", "change_crop_to_solar"}) {
        const auto script = parse_edit_script(read_file(kFixtures / "edits" / (std::string(name) + ".json")));
        const auto after_doc = apply_edit(doc, script);
        const auto diff = mask_diff(before, render_masks(after_doc, kTile, r));
        std::vector<std::uint8_t> region(diff.changed.size(), 0);
        for (const auto& ref : touched_elements(script)) {
            add_footprint(region, doc, ref);
            add_footprint(region, after_doc, ref);
        }
        region = dilate(region, 256, dilation);
        std::size_t outside = 0;
        for (std::size_t i = 0; i < region.size(); ++i) {
            outside += diff.changed[i] && !region[i];
        }
        ok = ok && outside == 0 && diff.changed_count() > 0;
        detail += std::string(name) + " " + std::to_string(diff.changed_count()) + " changed/" +
                  std::to_string(outside) + " outside; ";
    }
    return {ok, "dilation " + std::to_string(dilation) + " px; " + detail};
}

Outcome prompts()
{
    static const std::regex grammar(
        R"(Generate a high-resolution satellite image in [^.]+?(, using semantic masks highlighting [a-z][a-z ]*(, [a-z][a-z ]*)*)?\.)");
    const std::vector<std::string> countries{"France", "Canada", "USA", "Korea, Republic of", "Cote d'Ivoire",
                                             "Bosnia and Herzegovina", "Japan", "United States"};
    std::vector<std::string> names;
    for (const auto& c : rules().specific_classes()) {
        names.push_back(c.name);
    }
    std::mt19937_64 rng(9);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        auto pool = names;
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(rng() % 6);
        const auto p = build_prompt(pool, countries[rng() % countries.size()]);
        bad += !std::regex_match(p, grammar);
    }
    return {bad == 0, "1000 prompts, " + std::to_string(bad) + " off-template"};
}

json run_pipeline(const fs::path& root, std::string& log)
{
    const std::vector<std::string> common{"--cache-dir", (root / "cache").string(), "--out", (root / "out").string(),
                                          "--offline", "--fixtures", kFixtures.string()};
    const auto points = (kFixtures / "points.csv").string();
    const std::vector<std::vector<std::string>> commands{
        {"fetch", "--points", points},
        {"render", "--points", points},
        {"encode", "--points", points},
        {"pair", "--tile", "18/74975/100281", "--edit", (kFixtures / "edits/add_stadium.json").string(), "--date",
         "2023-06-15", "--country", "United States"}};
    json hashes;
    for (auto args : commands) {
        const auto cmd = args.front();
        args.insert(args.begin() + 1, common.begin(), common.end());
        std::ostringstream out;
        std::ostringstream err;
        const int code = run_forge(args, out, err);
        log += cmd + "=" + std::to_string(code) + " ";
        const auto m = json::parse(read_file(root / "out" / (cmd + ".manifest.json")));
        hashes[cmd] = m["outputs"];
        if (m.contains("entries")) {
            hashes[cmd + ".entries"] = m["entries"];
        }
    }
    return hashes;
}

Outcome determinism()
{
    const auto base = fs::temp_directory_path() / ("osmforge_acceptance_" + std::to_string(std::random_device{}()));
    std::string log_a;
    std::string log_b;
    const auto a = run_pipeline(base / "a", log_a);
    const auto b = run_pipeline(base / "b", log_b);
    std::size_t files = 0;
    for (const auto& [cmd, outputs] : a.items()) {
        if (cmd.find('.') == std::string::npos) {
            files += outputs.size();
        }
    }
    std::error_code ec;
    fs::remove_all(base, ec);
    const bool all_ok = log_a.find("=1") == std::string::npos && log_a.find("=2") == std::string::npos;
    return {all_ok && a == b && files > 0,
            "fetch/render/encode/pair twice, " + std::to_string(files) + " output hashes " +
                (a == b ? "identical" : "DIFFER") + "; exit codes " + log_a};
}

Outcome encoder_properties()
{
    const auto w = EncoderWeights::seeded(0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lon(-180.0, 180.0);
    std::uniform_real_distribution<double> lat(-85.0, 85.0);
    double worst_shift = 0;
    for (int i = 0; i < 1000; ++i) {
        const GeoPoint p{lon(rng), lat(rng)};
        const auto a = encode_location(p, w);
        const auto b = encode_location({p.lon + 360.0, p.lat}, w);
        for (std::size_t k = 0; k < a.dim(); ++k) {
            worst_shift = std::max(worst_shift, std::abs(a.values[k] - b.values[k]));
        }
    }

    const auto zero = encode_time(TimeStamp6D::make(2024, 2, 29, 23, 59, 59), EncoderWeights::zeros());
    const bool zero_ok = std::all_of(zero.values.begin(), zero.values.end(), [](double v) { return v == 0.0; });

    const GeoPoint p{-77.0365, 38.8977};
    const auto ts = TimeStamp6D::make(2023, 6, 15, 10, 0, 0);
    const auto loc0 = encode_location(p, w);
    const auto time0 = encode_time(ts, w);
    int drift = 0;
    for (int i = 0; i < 1000; ++i) {
        drift += !(encode_location(p, w) == loc0);
        drift += !(encode_time(ts, w) == time0);
    }
    return {worst_shift < 1e-9 && zero_ok && drift == 0,
            "lambda+360 max diff " + fmt(worst_shift) + ", zero weights -> " + (zero_ok ? "zero" : "NONZERO") +
                ", " + std::to_string(drift) + " differing results over 1000 repeats"};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"tile math", tile_math},
        {"rasterizer oracle equivalence", raster_oracle},
        {"area fidelity", area_fidelity},
        {"sigma identity", sigma_identity},
        {"analytic-denoiser sampling", sampling},
        {"inversion exactness (constant denoiser)", constant_round_trip},
        {"edit-strength monotonicity", monotonicity},
        {"edit locality", edit_locality},
        {"prompt conformance", prompts},
        {"determinism", determinism},
        {"encoder properties", encoder_properties},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
