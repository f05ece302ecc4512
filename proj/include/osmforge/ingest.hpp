#pragma once

#include "osmforge/geo.hpp"

#include <json.hpp>

#include <chrono>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace osmforge {

/// Overpass QL for every node, way and relation intersecting `b`, with
/// recursion so way and relation members can be resolved. Coordinates are
/// printed with 7 decimals in (south, west, north, east) order. Throws
/// RangeError for invalid or zero-area bounds.
std::string build_overpass_query(const GeoBounds& b, int timeout_s = 60);

struct HttpRequest {
    enum class Method { Get, Post } method = Method::Get;
    std::string url;
    std::string body;
    std::string content_type;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Sends one request. Connection-level failures throw FetchError; any HTTP
/// status is returned.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse send(const HttpRequest& request) = 0;
};

class HttplibTransport final : public Transport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(60)) : m_timeout(timeout) {}
    HttpResponse send(const HttpRequest& request) override;

private:
    std::chrono::seconds m_timeout;
};

/// Seconds on an arbitrary monotonic axis.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
    virtual void sleep_until(double t) = 0;
};

class SystemClock final : public Clock {
public:
    double now() override;
    void sleep_until(double t) override;
};

/// Time moves only when someone sleeps.
class VirtualClock final : public Clock {
public:
    double now() override;
    void sleep_until(double t) override;

private:
    std::mutex m_mutex;
    double m_now = 0.0;
};

/// Grants at most `per_second` permits per second, spaced evenly.
class RateLimiter {
public:
    /// per_second <= 0 disables limiting.
    RateLimiter(double per_second, std::shared_ptr<Clock> clock);
    void acquire();

private:
    double m_interval;
    std::shared_ptr<Clock> m_clock;
    std::mutex m_mutex;
    double m_next = 0.0;
    bool m_started = false;
};

struct RetryPolicy {
    int max_attempts = 4;
    double base_delay_s = 1.0;
    double max_delay_s = 30.0;

    /// Delay before attempt `attempt` + 1: base * 2^(attempt - 1), capped.
    double delay_after(int attempt) const noexcept;
};

struct Endpoint {
    std::string id;
    /// Overpass: interpreter URL. Imagery: template with {z}, {x}, {y}.
    std::string url;
    std::string extension = "json";
};

struct IngestConfig {
    Endpoint overpass{"overpass", "https://overpass-api.de/api/interpreter", "json"};
    std::optional<Endpoint> imagery;
    double requests_per_second = 1.0;
    RetryPolicy retry;
    int query_timeout_s = 60;
    int jobs = 4;
    std::filesystem::path cache_dir = "cache";
    bool offline = false;
    /// Offline mode reads `<fixtures_dir>/<endpoint-id>/...`, the cache layout.
    std::filesystem::path fixtures_dir;

    /// Reads the "ingest" object of a config file; missing keys keep defaults.
    static IngestConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// `OSMFORGE_CACHE_DIR` when set, else `configured`.
std::filesystem::path resolve_cache_dir(const std::filesystem::path& configured);

enum class FetchKind { Osm, Imagery };

std::string_view to_string(FetchKind kind) noexcept;

using FetchTarget = std::variant<TileRef, GeoBounds>;

struct FetchRequest {
    FetchTarget target;
    FetchKind kind = FetchKind::Osm;
};

struct FetchResult {
    std::string body;
    std::filesystem::path path;
    std::string sha256;
    bool from_cache = false;
    int attempts = 0;
};

/// Cache-first fetcher. Responses are persisted (body plus `.meta.json`
/// with the content hash) before they are returned. Safe to call from
/// several threads; writes to one key are serialized.
class Fetcher {
public:
    Fetcher(IngestConfig config, std::shared_ptr<Transport> transport,
            std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

    /// Throws FixtureMissError (offline miss), HttpError (non-retryable
    /// status or retries exhausted on one) or FetchError.
    FetchResult fetch(const FetchRequest& request);

    struct Outcome {
        std::optional<FetchResult> result;
        std::exception_ptr error;
    };
    /// Runs up to `config.jobs` fetches at once; results keep input order.
    std::vector<Outcome> fetch_all(std::span<const FetchRequest> requests);

    /// `<cache>/<endpoint-id>/<z>/<x>/<y>.<ext>` for tiles,
    /// `<cache>/<endpoint-id>/bbox/<s>_<w>_<n>_<e>.<ext>` for bounds.
    std::filesystem::path relative_path(const FetchRequest& request) const;
    std::filesystem::path cache_path(const FetchRequest& request) const;

    const IngestConfig& config() const noexcept { return m_config; }

private:
    const Endpoint& endpoint(FetchKind kind) const;
    HttpRequest make_request(const FetchRequest& request) const;
    std::optional<FetchResult> read_cache(const std::filesystem::path& path) const;
    FetchResult store(const FetchRequest& request, const std::filesystem::path& path, std::string body,
                      const std::string& source, int attempts);
    std::mutex& key_mutex(const std::filesystem::path& path);

    IngestConfig m_config;
    std::shared_ptr<Transport> m_transport;
    std::shared_ptr<Clock> m_clock;
    RateLimiter m_limiter;
    std::mutex m_keys_mutex;
    std::map<std::filesystem::path, std::unique_ptr<std::mutex>> m_key_mutexes;
};

} // namespace osmforge
