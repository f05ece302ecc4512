#pragma once

#include "osmforge/geo.hpp"
#include "osmforge/timestamp.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace osmforge {

enum class EmbeddingKind { Location, Time, Text };

std::string_view to_string(EmbeddingKind kind) noexcept;

struct Embedding {
    EmbeddingKind kind = EmbeddingKind::Location;
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    friend bool operator==(const Embedding&, const Embedding&) = default;
};

enum class Activation { Identity, Relu, Tanh, Sine };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view name);

inline constexpr std::size_t kTimeChannels = 6;

/// Time2Vec-style layer over the six normalized timestamp channels:
/// a_i = sum_c omega[i][c] * tau_c + phi[i]; unit 0 is a_0 (linear), every
/// other unit is sin(a_i).
struct TimeEncoderWeights {
    std::size_t dim = 0;
    std::vector<double> omega; ///< dim x 6, row-major
    std::vector<double> phi;   ///< dim
};

/// Multi-scale sinusoidal basis of (lon, lat) in radians with 2^k
/// frequencies, k < frequencies, followed by two affine layers with the
/// activation between them.
struct LocationEncoderWeights {
    int frequencies = 16;
    std::size_t hidden = 0;
    std::size_t dim = 0;
    Activation activation = Activation::Relu;
    std::vector<double> w1; ///< hidden x basis_dim
    std::vector<double> b1; ///< hidden
    std::vector<double> w2; ///< dim x hidden
    std::vector<double> b2; ///< dim

    std::size_t basis_dim() const noexcept { return 4 * static_cast<std::size_t>(frequencies); }

    /// Identity layers (hidden = dim = basis_dim) with the identity activation.
    static LocationEncoderWeights identity(int frequencies);
};

struct EncoderDims {
    std::size_t time_dim = 256;
    std::size_t location_dim = 256;
    std::size_t location_hidden = 256;
    int frequencies = 16;
    Activation activation = Activation::Relu;
};

struct EncoderWeights {
    TimeEncoderWeights time;
    LocationEncoderWeights location;

    /// Deterministic pseudo-random weights, identical on every platform.
    static EncoderWeights seeded(std::uint64_t seed, const EncoderDims& dims = {});
    static EncoderWeights zeros(const EncoderDims& dims = {});

    /// Throws WeightsError on inconsistent shapes or non-finite values.
    void validate() const;

    friend bool operator==(const EncoderWeights&, const EncoderWeights&);
};

/// Weight file: tensor file with f32 arrays time.omega, time.phi,
/// location.w1, location.b1, location.w2, location.b2 and the dims in meta.
std::string save_weights(const EncoderWeights& w);
EncoderWeights load_weights(std::string_view bytes);
EncoderWeights load_weights_file(const std::filesystem::path& path);

Embedding encode_time_channels(std::span<const double, kTimeChannels> tau, const TimeEncoderWeights& w);
/// Normalizes the timestamp (see TimeStamp6D::normalized) and encodes it.
/// Throws DateError for an invalid calendar date.
Embedding encode_time(const TimeStamp6D& ts, const EncoderWeights& w);

/// Basis ordered per frequency as sin(2^k lon), cos(2^k lon), sin(2^k lat),
/// cos(2^k lat). Longitude is wrapped into [-180, 180) first.
std::vector<double> location_basis(const GeoPoint& p, int frequencies);
/// Accepts any finite longitude; latitude must be inside the Mercator band.
Embedding encode_location(const GeoPoint& p, const EncoderWeights& w);

/// Fills the prompt template. An empty summary drops the highlighting
/// clause. Throws std::invalid_argument for an empty country.
std::string build_prompt(std::span<const std::string> summary, std::string_view country);

/// Deterministic unit-norm stand-in for a text encoder, seeded by SHA-256
/// of the prompt. For plumbing only.
Embedding pseudo_text_embedding(std::string_view prompt, std::size_t dim = 768);

/// Embedding stored as a tensor file (array "embedding", f64).
std::string encode_embedding_file(const Embedding& e);
Embedding decode_embedding_file(std::string_view bytes);

} // namespace osmforge
