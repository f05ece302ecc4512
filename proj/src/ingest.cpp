#include <httplib.h>

#include "osmforge/ingest.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace osmforge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fixed7(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.7f", v);
    return buf;
}

void replace_all(std::string& s, std::string_view from, std::string_view to)
{
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

bool retryable(int status)
{
    return status == 429 || (status >= 500 && status < 600);
}

} // namespace

std::string build_overpass_query(const GeoBounds& b, int timeout_s)
{
    for (double v : {b.west, b.south, b.east, b.north}) {
        if (!std::isfinite(v)) {
            throw RangeError("bounds are not finite");
        }
    }
    if (!b.valid() || b.west < -180.0 || b.east > 180.0 || b.south < -90.0 || b.north > 90.0) {
        throw RangeError("bounds must be non-empty and inside [-180, 180] x [-90, 90]");
    }
    const auto bbox = fixed7(b.south) + "," + fixed7(b.west) + "," + fixed7(b.north) + "," + fixed7(b.east);
    return "[out:json][timeout:" + std::to_string(timeout_s) + "];\n(\n  node(" + bbox + ");\n  way(" + bbox +
           ");\n  relation(" + bbox + ");\n);\nout body;\n>;\nout skel;\n";
}

HttpResponse HttplibTransport::send(const HttpRequest& request)
{
    const auto scheme_end = request.url.find("://");
    if (scheme_end == std::string::npos) {
        throw FetchError("not an absolute URL: " + request.url);
    }
    const auto path_begin = request.url.find('/', scheme_end + 3);
    const auto origin = request.url.substr(0, path_begin);
    const auto path = path_begin == std::string::npos ? std::string("/") : request.url.substr(path_begin);

    httplib::Client client(origin);
    client.set_connection_timeout(m_timeout);
    client.set_read_timeout(m_timeout);
    client.set_follow_location(true);
    httplib::Result res = request.method == HttpRequest::Method::Post
                              ? client.Post(path, request.body, request.content_type)
                              : client.Get(path);
    if (!res) {
        throw FetchError("request to " + request.url + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
}

double SystemClock::now()
{
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_until(double t)
{
    const double d = t - now();
    if (d > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(d));
    }
}

double VirtualClock::now()
{
    std::lock_guard lock(m_mutex);
    return m_now;
}

void VirtualClock::sleep_until(double t)
{
    std::lock_guard lock(m_mutex);
    m_now = std::max(m_now, t);
}

RateLimiter::RateLimiter(double per_second, std::shared_ptr<Clock> clock)
    : m_interval(per_second > 0 ? 1.0 / per_second : 0.0), m_clock(std::move(clock))
{
}

void RateLimiter::acquire()
{
    if (m_interval == 0.0) {
        return;
    }
    double slot;
    {
        std::lock_guard lock(m_mutex);
        const double now = m_clock->now();
        slot = m_started ? std::max(now, m_next) : now;
        m_started = true;
        m_next = slot + m_interval;
    }
    m_clock->sleep_until(slot);
}

double RetryPolicy::delay_after(int attempt) const noexcept
{
    return std::min(max_delay_s, base_delay_s * std::ldexp(1.0, std::max(0, attempt - 1)));
}

IngestConfig IngestConfig::from_json(const json& j)
{
    IngestConfig c;
    try {
        auto endpoint = [](const json& e, Endpoint fallback) {
            fallback.id = e.value("id", fallback.id);
            fallback.url = e.value("url", fallback.url);
            fallback.extension = e.value("extension", fallback.extension);
            if (fallback.id.empty() || fallback.url.empty()) {
                throw ConfigError("endpoint needs an id and a url");
            }
            return fallback;
        };
        if (j.contains("overpass")) {
            c.overpass = endpoint(j.at("overpass"), c.overpass);
        }
        if (j.contains("imagery") && !j.at("imagery").is_null()) {
            c.imagery = endpoint(j.at("imagery"), {"imagery", "", "png"});
        }
        c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
            c.retry.base_delay_s = r.value("base_delay_s", c.retry.base_delay_s);
            c.retry.max_delay_s = r.value("max_delay_s", c.retry.max_delay_s);
        }
        c.query_timeout_s = j.value("query_timeout_s", c.query_timeout_s);
        c.jobs = j.value("jobs", c.jobs);
        c.cache_dir = j.value("cache_dir", c.cache_dir.string());
        c.offline = j.value("offline", c.offline);
        c.fixtures_dir = j.value("fixtures_dir", c.fixtures_dir.string());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ingest config: ") + e.what());
    }
    if (c.retry.max_attempts < 1 || c.retry.base_delay_s < 0 || c.retry.max_delay_s < 0) {
        throw ConfigError("ingest config: invalid retry policy");
    }
    if (c.jobs < 1) {
        throw ConfigError("ingest config: jobs must be at least 1");
    }
    if (c.offline && c.fixtures_dir.empty()) {
        throw ConfigError("ingest config: offline mode needs fixtures_dir");
    }
    return c;
}

json IngestConfig::to_json() const
{
    auto endpoint = [](const Endpoint& e) { return json{{"id", e.id}, {"url", e.url}, {"extension", e.extension}}; };
    return {{"overpass", endpoint(overpass)},
            {"imagery", imagery ? endpoint(*imagery) : json(nullptr)},
            {"requests_per_second", requests_per_second},
            {"retry",
             {{"max_attempts", retry.max_attempts},
              {"base_delay_s", retry.base_delay_s},
              {"max_delay_s", retry.max_delay_s}}},
            {"query_timeout_s", query_timeout_s},
            {"jobs", jobs},
            {"cache_dir", cache_dir.generic_string()},
            {"offline", offline},
            {"fixtures_dir", fixtures_dir.generic_string()}};
}

fs::path resolve_cache_dir(const fs::path& configured)
{
    if (const char* env = std::getenv("OSMFORGE_CACHE_DIR"); env && *env) {
        return env;
    }
    return configured;
}

std::string_view to_string(FetchKind kind) noexcept
{
    return kind == FetchKind::Osm ? "osm" : "imagery";
}

Fetcher::Fetcher(IngestConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<Clock> clock)
    : m_config(std::move(config)),
      m_transport(std::move(transport)),
      m_clock(std::move(clock)),
      m_limiter(m_config.requests_per_second, m_clock)
{
}

const Endpoint& Fetcher::endpoint(FetchKind kind) const
{
    if (kind == FetchKind::Osm) {
        return m_config.overpass;
    }
    if (!m_config.imagery) {
        throw ConfigError("no imagery endpoint configured");
    }
    return *m_config.imagery;
}

fs::path Fetcher::relative_path(const FetchRequest& request) const
{
    const auto& ep = endpoint(request.kind);
    if (const auto* tile = std::get_if<TileRef>(&request.target)) {
        if (!tile->valid()) {
            throw RangeError("invalid tile");
        }
        return fs::path(ep.id) / std::to_string(tile->z) / std::to_string(tile->x) /
               (std::to_string(tile->y) + "." + ep.extension);
    }
    if (request.kind == FetchKind::Imagery) {
        throw ConfigError("imagery is fetched per tile");
    }
    const auto& b = std::get<GeoBounds>(request.target);
    if (!b.valid()) {
        throw RangeError("invalid bounds");
    }
    return fs::path(ep.id) / "bbox" /
           (fixed7(b.south) + "_" + fixed7(b.west) + "_" + fixed7(b.north) + "_" + fixed7(b.east) + "." +
            ep.extension);
}

fs::path Fetcher::cache_path(const FetchRequest& request) const
{
    return m_config.cache_dir / relative_path(request);
}

HttpRequest Fetcher::make_request(const FetchRequest& request) const
{
    const auto& ep = endpoint(request.kind);
    if (request.kind == FetchKind::Osm) {
        const GeoBounds b = std::holds_alternative<TileRef>(request.target)
                                ? tile_bounds(std::get<TileRef>(request.target))
                                : std::get<GeoBounds>(request.target);
        const auto query = build_overpass_query(b, m_config.query_timeout_s);
        return {HttpRequest::Method::Post, ep.url, "data=" + httplib::detail::encode_query_param(query),
                "application/x-www-form-urlencoded"};
    }
    const auto& tile = std::get<TileRef>(request.target);
    auto url = ep.url;
    replace_all(url, "{z}", std::to_string(tile.z));
    replace_all(url, "{x}", std::to_string(tile.x));
    replace_all(url, "{y}", std::to_string(tile.y));
    return {HttpRequest::Method::Get, url, {}, {}};
}

std::optional<FetchResult> Fetcher::read_cache(const fs::path& path) const
{
    const auto meta_path = fs::path(path.string() + ".meta.json");
    std::error_code ec;
    if (!fs::exists(path, ec) || !fs::exists(meta_path, ec)) {
        return std::nullopt;
    }
    try {
        auto body = read_file(path);
        const auto meta = json::parse(read_file(meta_path));
        auto hash = sha256_hex(body);
        if (meta.at("sha256").get<std::string>() != hash) {
            return std::nullopt;
        }
        return FetchResult{std::move(body), path, std::move(hash), true, 0};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

FetchResult Fetcher::store(const FetchRequest& request, const fs::path& path, std::string body,
                           const std::string& source, int attempts)
{
    auto hash = sha256_hex(body);
    json target;
    if (const auto* tile = std::get_if<TileRef>(&request.target)) {
        target = {{"z", tile->z}, {"x", tile->x}, {"y", tile->y}};
    } else {
        const auto& b = std::get<GeoBounds>(request.target);
        target = {{"west", b.west}, {"south", b.south}, {"east", b.east}, {"north", b.north}};
    }
    const json meta = {{"endpoint", endpoint(request.kind).id},
                       {"kind", to_string(request.kind)},
                       {"target", target},
                       {"source", source},
                       {"sha256", hash},
                       {"bytes", body.size()}};
    write_file_atomic(path, body);
    write_file_atomic(path.string() + ".meta.json", meta.dump(1) + "\n");
    return {std::move(body), path, std::move(hash), false, attempts};
}

std::mutex& Fetcher::key_mutex(const fs::path& path)
{
    std::lock_guard lock(m_keys_mutex);
    auto& slot = m_key_mutexes[path];
    if (!slot) {
        slot = std::make_unique<std::mutex>();
    }
    return *slot;
}

FetchResult Fetcher::fetch(const FetchRequest& request)
{
    const auto rel = relative_path(request);
    const auto path = m_config.cache_dir / rel;
    std::lock_guard key_lock(key_mutex(path));

    if (auto hit = read_cache(path)) {
        return *std::move(hit);
    }

    if (m_config.offline) {
        const auto fixture = m_config.fixtures_dir / rel;
        std::error_code ec;
        if (!fs::is_regular_file(fixture, ec)) {
            throw FixtureMissError("no fixture for " + rel.generic_string());
        }
        return store(request, path, read_file(fixture), "fixture", 0);
    }

    const auto http = make_request(request);
    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= m_config.retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            m_clock->sleep_until(m_clock->now() + m_config.retry.delay_after(attempt - 1));
        }
        m_limiter.acquire();
        try {
            auto response = m_transport->send(http);
            if (response.status >= 200 && response.status < 300) {
                return store(request, path, std::move(response.body), "network", attempt);
            }
            if (!retryable(response.status)) {
                throw HttpError(response.status, http.url);
            }
            last_status = response.status;
            last_error.clear();
        } catch (const HttpError&) {
            throw;
        } catch (const FetchError& e) {
            last_status = 0;
            last_error = e.what();
        }
    }
    if (last_status != 0) {
        throw HttpError(last_status, http.url);
    }
    throw FetchError("giving up on " + http.url + " after " + std::to_string(m_config.retry.max_attempts) +
                     " attempts: " + last_error);
}

std::vector<Fetcher::Outcome> Fetcher::fetch_all(std::span<const FetchRequest> requests)
{
    std::vector<Outcome> out(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
                out[i].result = fetch(requests[i]);
            } catch (...) {
                out[i].error = std::current_exception();
            }
        }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(m_config.jobs), requests.size());
    std::vector<std::jthread> threads;
    for (std::size_t i = 1; i < n; ++i) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
    return out;
}

} // namespace osmforge
