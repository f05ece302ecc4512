#pragma once

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace osmforge {

enum class DType { F32, F64 };

struct TensorArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t element_count() const noexcept;
    friend bool operator==(const TensorArray&, const TensorArray&) = default;
};

/// Named little-endian float arrays behind a JSON header.
///
/// Layout: the 8 bytes `OSMFTNSR`, a little-endian uint32 header length,
/// the UTF-8 JSON header, then the arrays back to back. The header lists
/// `arrays` (name, dtype, shape, byte offset), free-form `meta`, and
/// `sha256` of the payload, which `decode` verifies.
struct TensorFile {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<TensorArray> arrays;

    /// Throws WeightsError when absent.
    const TensorArray& get(std::string_view name) const;
};

/// F32 rounds every value to single precision.
std::string encode_tensor_file(const TensorFile& file, DType dtype);
/// Throws WeightsError on a bad magic, shape mismatch or checksum failure.
TensorFile decode_tensor_file(std::string_view bytes);

} // namespace osmforge
