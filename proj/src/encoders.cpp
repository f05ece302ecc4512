#include "osmforge/encoders.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"
#include "osmforge/tensor_file.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace osmforge {

using nlohmann::json;

namespace {

// Uniform in [lo, hi) from raw mt19937_64 bits, rounded to float so saved
// weights reload bit-exactly.
class PortableUniform {
public:
    explicit PortableUniform(std::uint64_t seed) : m_engine(seed) {}

    double operator()(double lo, double hi)
    {
        const double u = static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
        return static_cast<double>(static_cast<float>(lo + (hi - lo) * u));
    }

private:
    std::mt19937_64 m_engine;
};

double activate(Activation a, double v) noexcept
{
    switch (a) {
    case Activation::Identity:
        return v;
    case Activation::Relu:
        return v > 0 ? v : 0.0;
    case Activation::Tanh:
        return std::tanh(v);
    case Activation::Sine:
        return std::sin(v);
    }
    return v;
}

void check_finite(const std::vector<double>& v, const char* what)
{
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw WeightsError(std::string(what) + " contains a non-finite value");
        }
    }
}

void check_size(const std::vector<double>& v, std::size_t n, const char* what)
{
    if (v.size() != n) {
        throw WeightsError(std::string(what) + " has " + std::to_string(v.size()) + " values, expected " +
                           std::to_string(n));
    }
}

} // namespace

std::string_view to_string(EmbeddingKind kind) noexcept
{
    switch (kind) {
    case EmbeddingKind::Location:
        return "location";
    case EmbeddingKind::Time:
        return "time";
    case EmbeddingKind::Text:
        return "text";
    }
    return "?";
}

std::string_view to_string(Activation a) noexcept
{
    switch (a) {
    case Activation::Identity:
        return "identity";
    case Activation::Relu:
        return "relu";
    case Activation::Tanh:
        return "tanh";
    case Activation::Sine:
        return "sine";
    }
    return "?";
}

Activation parse_activation(std::string_view name)
{
    for (auto a : {Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sine}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw WeightsError("unknown activation '" + std::string(name) + "'");
}

LocationEncoderWeights LocationEncoderWeights::identity(int frequencies)
{
    LocationEncoderWeights w;
    w.frequencies = frequencies;
    const auto n = w.basis_dim();
    w.hidden = n;
    w.dim = n;
    w.activation = Activation::Identity;
    w.w1.assign(n * n, 0.0);
    w.w2.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        w.w1[i * n + i] = 1.0;
        w.w2[i * n + i] = 1.0;
    }
    w.b1.assign(n, 0.0);
    w.b2.assign(n, 0.0);
    return w;
}

EncoderWeights EncoderWeights::zeros(const EncoderDims& dims)
{
    EncoderWeights w;
    w.time.dim = dims.time_dim;
    w.time.omega.assign(dims.time_dim * kTimeChannels, 0.0);
    w.time.phi.assign(dims.time_dim, 0.0);
    auto& loc = w.location;
    loc.frequencies = dims.frequencies;
    loc.hidden = dims.location_hidden;
    loc.dim = dims.location_dim;
    loc.activation = dims.activation;
    loc.w1.assign(loc.hidden * loc.basis_dim(), 0.0);
    loc.b1.assign(loc.hidden, 0.0);
    loc.w2.assign(loc.dim * loc.hidden, 0.0);
    loc.b2.assign(loc.dim, 0.0);
    return w;
}

EncoderWeights EncoderWeights::seeded(std::uint64_t seed, const EncoderDims& dims)
{
    auto w = zeros(dims);
    PortableUniform rng(seed);
    for (auto& v : w.time.omega) {
        v = rng(-8.0, 8.0);
    }
    for (auto& v : w.time.phi) {
        v = rng(-std::numbers::pi, std::numbers::pi);
    }
    auto& loc = w.location;
    const double a1 = std::sqrt(6.0 / static_cast<double>(loc.basis_dim() + loc.hidden));
    const double a2 = std::sqrt(6.0 / static_cast<double>(loc.hidden + loc.dim));
    for (auto& v : loc.w1) {
        v = rng(-a1, a1);
    }
    for (auto& v : loc.b1) {
        v = rng(-0.1, 0.1);
    }
    for (auto& v : loc.w2) {
        v = rng(-a2, a2);
    }
    for (auto& v : loc.b2) {
        v = rng(-0.1, 0.1);
    }
    return w;
}

void EncoderWeights::validate() const
{
    if (time.dim == 0) {
        throw WeightsError("time encoder dimension must be positive");
    }
    check_size(time.omega, time.dim * kTimeChannels, "time.omega");
    check_size(time.phi, time.dim, "time.phi");
    if (location.frequencies < 1 || location.frequencies > 30 || location.hidden == 0 || location.dim == 0) {
        throw WeightsError("location encoder dimensions out of range");
    }
    check_size(location.w1, location.hidden * location.basis_dim(), "location.w1");
    check_size(location.b1, location.hidden, "location.b1");
    check_size(location.w2, location.dim * location.hidden, "location.w2");
    check_size(location.b2, location.dim, "location.b2");
    check_finite(time.omega, "time.omega");
    check_finite(time.phi, "time.phi");
    check_finite(location.w1, "location.w1");
    check_finite(location.b1, "location.b1");
    check_finite(location.w2, "location.w2");
    check_finite(location.b2, "location.b2");
}

bool operator==(const EncoderWeights& a, const EncoderWeights& b)
{
    const auto& la = a.location;
    const auto& lb = b.location;
    return a.time.dim == b.time.dim && a.time.omega == b.time.omega && a.time.phi == b.time.phi &&
           la.frequencies == lb.frequencies && la.hidden == lb.hidden && la.dim == lb.dim &&
           la.activation == lb.activation && la.w1 == lb.w1 && la.b1 == lb.b1 && la.w2 == lb.w2 && la.b2 == lb.b2;
}

std::string save_weights(const EncoderWeights& w)
{
    w.validate();
    TensorFile f;
    f.meta = {{"kind", "osmforge-encoder-weights"},
              {"time", {{"dim", w.time.dim}, {"channels", kTimeChannels}}},
              {"location",
               {{"frequencies", w.location.frequencies},
                {"hidden", w.location.hidden},
                {"dim", w.location.dim},
                {"activation", std::string(to_string(w.location.activation))}}}};
    const auto basis = w.location.basis_dim();
    f.arrays = {{"time.omega", {w.time.dim, kTimeChannels}, w.time.omega},
                {"time.phi", {w.time.dim}, w.time.phi},
                {"location.w1", {w.location.hidden, basis}, w.location.w1},
                {"location.b1", {w.location.hidden}, w.location.b1},
                {"location.w2", {w.location.dim, w.location.hidden}, w.location.w2},
                {"location.b2", {w.location.dim}, w.location.b2}};
    return encode_tensor_file(f, DType::F32);
}

EncoderWeights load_weights(std::string_view bytes)
{
    const auto f = decode_tensor_file(bytes);
    EncoderWeights w;
    try {
        w.time.dim = f.meta.at("time").at("dim").get<std::size_t>();
        const auto& loc = f.meta.at("location");
        w.location.frequencies = loc.at("frequencies").get<int>();
        w.location.hidden = loc.at("hidden").get<std::size_t>();
        w.location.dim = loc.at("dim").get<std::size_t>();
        w.location.activation = parse_activation(loc.at("activation").get<std::string>());
    } catch (const json::exception& e) {
        throw WeightsError(std::string("weight file meta: ") + e.what());
    }
    w.time.omega = f.get("time.omega").values;
    w.time.phi = f.get("time.phi").values;
    w.location.w1 = f.get("location.w1").values;
    w.location.b1 = f.get("location.b1").values;
    w.location.w2 = f.get("location.w2").values;
    w.location.b2 = f.get("location.b2").values;
    w.validate();
    return w;
}

EncoderWeights load_weights_file(const std::filesystem::path& path)
{
    return load_weights(read_file(path));
}

Embedding encode_time_channels(std::span<const double, kTimeChannels> tau, const TimeEncoderWeights& w)
{
    Embedding e{EmbeddingKind::Time, std::vector<double>(w.dim)};
    for (std::size_t i = 0; i < w.dim; ++i) {
        double a = w.phi[i];
        for (std::size_t c = 0; c < kTimeChannels; ++c) {
            a += w.omega[i * kTimeChannels + c] * tau[c];
        }
        e.values[i] = i == 0 ? a : std::sin(a);
    }
    return e;
}

Embedding encode_time(const TimeStamp6D& ts, const EncoderWeights& w)
{
    const auto checked = TimeStamp6D::make(ts.year, ts.month, ts.day, ts.hour, ts.minute, ts.second);
    const auto tau = checked.normalized();
    return encode_time_channels(tau, w.time);
}

std::vector<double> location_basis(const GeoPoint& p, int frequencies)
{
    if (!std::isfinite(p.lon)) {
        throw RangeError("longitude is not finite");
    }
    double lon = std::fmod(p.lon, 360.0);
    if (lon >= 180.0) {
        lon -= 360.0;
    } else if (lon < -180.0) {
        lon += 360.0;
    }
    const double lam = lon * std::numbers::pi / 180.0;
    const double phi = p.lat * std::numbers::pi / 180.0;
    std::vector<double> basis;
    basis.reserve(4 * static_cast<std::size_t>(frequencies));
    for (int k = 0; k < frequencies; ++k) {
        const double scale = std::ldexp(1.0, k);
        basis.push_back(std::sin(scale * lam));
        basis.push_back(std::cos(scale * lam));
        basis.push_back(std::sin(scale * phi));
        basis.push_back(std::cos(scale * phi));
    }
    return basis;
}

Embedding encode_location(const GeoPoint& p, const EncoderWeights& w)
{
    if (!(std::abs(p.lat) < kMaxMercatorLat)) {
        throw RangeError("latitude outside the Web Mercator band");
    }
    const auto& loc = w.location;
    const auto basis = location_basis(p, loc.frequencies);
    const auto n = basis.size();
    std::vector<double> hidden(loc.hidden);
    for (std::size_t i = 0; i < loc.hidden; ++i) {
        double acc = loc.b1[i];
        for (std::size_t j = 0; j < n; ++j) {
            acc += loc.w1[i * n + j] * basis[j];
        }
        hidden[i] = activate(loc.activation, acc);
    }
    Embedding e{EmbeddingKind::Location, std::vector<double>(loc.dim)};
    for (std::size_t i = 0; i < loc.dim; ++i) {
        double acc = loc.b2[i];
        for (std::size_t j = 0; j < loc.hidden; ++j) {
            acc += loc.w2[i * loc.hidden + j] * hidden[j];
        }
        e.values[i] = acc;
    }
    return e;
}

std::string build_prompt(std::span<const std::string> summary, std::string_view country)
{
    if (country.empty()) {
        throw std::invalid_argument("country must be non-empty");
    }
    std::string out = "Generate a high-resolution satellite image in ";
    out += country;
    if (!summary.empty()) {
        out += ", using semantic masks highlighting ";
        for (std::size_t i = 0; i < summary.size(); ++i) {
            if (i > 0) {
                out += ", ";
            }
            out += summary[i];
        }
    }
    out += '.';
    return out;
}

Embedding pseudo_text_embedding(std::string_view prompt, std::size_t dim)
{
    const auto digest = sha256_hex(prompt);
    const std::uint64_t seed = std::stoull(digest.substr(0, 16), nullptr, 16);
    std::mt19937_64 engine(seed);
    Embedding e{EmbeddingKind::Text, std::vector<double>(dim)};
    double norm = 0.0;
    for (auto& v : e.values) {
        v = static_cast<double>(engine() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
        for (auto& v : e.values) {
            v /= norm;
        }
    }
    return e;
}

std::string encode_embedding_file(const Embedding& e)
{
    TensorFile f;
    f.meta = {{"kind", std::string(to_string(e.kind))}};
    f.arrays.push_back({"embedding", {e.values.size()}, e.values});
    return encode_tensor_file(f, DType::F64);
}

Embedding decode_embedding_file(std::string_view bytes)
{
    const auto f = decode_tensor_file(bytes);
    const auto kind = f.meta.value("kind", std::string("text"));
    Embedding e;
    if (kind == "location") {
        e.kind = EmbeddingKind::Location;
    } else if (kind == "time") {
        e.kind = EmbeddingKind::Time;
    } else if (kind == "text") {
        e.kind = EmbeddingKind::Text;
    } else {
        throw WeightsError("unknown embedding kind '" + kind + "'");
    }
    e.values = f.get("embedding").values;
    return e;
}

} // namespace osmforge
