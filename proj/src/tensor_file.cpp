#include "osmforge/tensor_file.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>

namespace osmforge {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "OSMFTNSR";

template <class T>
void put_le(std::string& out, T v)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(bytes), std::end(bytes));
    }
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(const char* p)
{
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(bytes), std::end(bytes));
    }
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

} // namespace

std::size_t TensorArray::element_count() const noexcept
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

const TensorArray& TensorFile::get(std::string_view name) const
{
    auto it = std::find_if(arrays.begin(), arrays.end(), [&](const TensorArray& a) { return a.name == name; });
    if (it == arrays.end()) {
        throw WeightsError("tensor file has no array '" + std::string(name) + "'");
    }
    return *it;
}

std::string encode_tensor_file(const TensorFile& file, DType dtype)
{
    std::string payload;
    json arrays = json::array();
    for (const auto& a : file.arrays) {
        if (a.element_count() != a.values.size()) {
            throw WeightsError("array '" + a.name + "' shape does not match its value count");
        }
        arrays.push_back({{"name", a.name},
                          {"dtype", dtype == DType::F32 ? "f32" : "f64"},
                          {"shape", a.shape},
                          {"offset", payload.size()}});
        for (double v : a.values) {
            if (dtype == DType::F32) {
                put_le(payload, static_cast<float>(v));
            } else {
                put_le(payload, v);
            }
        }
    }
    json header = {{"format", 1}, {"arrays", arrays}, {"meta", file.meta}, {"sha256", sha256_hex(payload)}};
    const std::string text = header.dump();

    std::string out(kMagic);
    put_le(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    out += payload;
    return out;
}

TensorFile decode_tensor_file(std::string_view bytes)
{
    if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) {
        throw WeightsError("not a tensor file (bad magic)");
    }
    const auto header_len = get_le<std::uint32_t>(bytes.data() + kMagic.size());
    const std::size_t header_start = kMagic.size() + 4;
    if (bytes.size() < header_start + header_len) {
        throw WeightsError("tensor file header truncated");
    }
    json header;
    try {
        header = json::parse(bytes.substr(header_start, header_len));
    } catch (const json::parse_error& e) {
        throw WeightsError(std::string("tensor file header: ") + e.what());
    }
    const auto payload = bytes.substr(header_start + header_len);
    TensorFile file;
    try {
        if (header.at("sha256").get<std::string>() != sha256_hex(payload)) {
            throw WeightsError("tensor file checksum mismatch");
        }
        file.meta = header.value("meta", json::object());
        for (const auto& a : header.at("arrays")) {
            TensorArray arr;
            arr.name = a.at("name").get<std::string>();
            arr.shape = a.at("shape").get<std::vector<std::size_t>>();
            const auto dtype = a.at("dtype").get<std::string>();
            const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
            if (width == 0) {
                throw WeightsError("unknown dtype '" + dtype + "'");
            }
            const auto offset = a.at("offset").get<std::size_t>();
            const std::size_t n = arr.element_count();
            if (offset + n * width > payload.size()) {
                throw WeightsError("array '" + arr.name + "' runs past the payload");
            }
            arr.values.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const char* p = payload.data() + offset + i * width;
                arr.values[i] = width == 4 ? static_cast<double>(get_le<float>(p)) : get_le<double>(p);
            }
            file.arrays.push_back(std::move(arr));
        }
    } catch (const json::exception& e) {
        throw WeightsError(std::string("tensor file header: ") + e.what());
    }
    return file;
}

} // namespace osmforge
