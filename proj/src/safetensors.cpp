#include "glitch/safetensors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "glitch/error.hpp"
#include "json.hpp"

namespace glitch {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload decoding assumes a little-endian host");

std::string_view to_string(DType dtype) {
    switch (dtype) {
        case DType::F16: return "F16";
        case DType::BF16: return "BF16";
        case DType::F32: return "F32";
        case DType::F64: return "F64";
    }
    return "?";
}

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::F16:
        case DType::BF16: return 2;
        case DType::F32: return 4;
        case DType::F64: return 8;
    }
    return 0;
}

std::size_t TensorInfo::element_count() const {
    std::size_t n = 1;
    for (const auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

double half_to_double(std::uint16_t h) {
    const int sign = (h >> 15) & 1;
    const int exp = (h >> 10) & 0x1F;
    const int mant = h & 0x3FF;
    double v;
    if (exp == 0) {
        v = std::ldexp(static_cast<double>(mant), -24);
    } else if (exp == 31) {
        v = mant == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
    } else {
        v = std::ldexp(1.0 + mant / 1024.0, exp - 15);
    }
    return sign ? -v : v;
}

std::uint16_t double_to_half(double value) {
    const auto x = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    const std::uint32_t sign = (x >> 16) & 0x8000;
    if ((x & 0x7FFFFFFF) > 0x7F800000) return static_cast<std::uint16_t>(sign | 0x7E00);
    const int exp = static_cast<int>((x >> 23) & 0xFF) - 127 + 15;
    std::uint32_t mant = x & 0x7FFFFF;
    if (exp >= 31) return static_cast<std::uint16_t>(sign | 0x7C00);
    if (exp <= 0) {
        if (exp < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x800000;
        const int shift = 14 - exp;
        std::uint32_t half = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t half = (static_cast<std::uint32_t>(exp) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFF;
    if (rem > 0x1000 || (rem == 0x1000 && (half & 1))) ++half;
    return static_cast<std::uint16_t>(sign | half);
}

double bf16_to_double(std::uint16_t h) {
    return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16));
}

std::uint16_t double_to_bf16(double value) {
    const auto x = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    if ((x & 0x7FFFFFFF) > 0x7F800000) return static_cast<std::uint16_t>((x >> 16) | 0x40);
    const std::uint32_t rounding = 0x7FFF + ((x >> 16) & 1);
    return static_cast<std::uint16_t>((x + rounding) >> 16);
}

namespace {

DType parse_dtype(const std::string& s) {
    if (s == "F16") return DType::F16;
    if (s == "BF16") return DType::BF16;
    if (s == "F32") return DType::F32;
    if (s == "F64") return DType::F64;
    throw Error(ErrorCode::MalformedConfig, "unsupported tensor dtype '" + s + "'");
}

std::uint64_t read_le64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
    return v;
}

}  // namespace

void SafeTensorsFile::parse_header(std::string_view header, std::size_t payload_size) {
    json j;
    try {
        j = json::parse(header);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedConfig, std::string("tensor header is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::MalformedConfig, "tensor header must be a JSON object");
    for (const auto& [name, entry] : j.items()) {
        if (name == "__metadata__") {
            if (entry.is_object()) {
                for (const auto& [k, v] : entry.items()) {
                    if (v.is_string()) metadata_[k] = v.get<std::string>();
                }
            }
            continue;
        }
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("data_offsets")) {
            throw Error(ErrorCode::MalformedConfig, "tensor '" + name + "' lacks dtype/shape/data_offsets");
        }
        TensorInfo info;
        info.name = name;
        info.dtype = parse_dtype(entry["dtype"].get<std::string>());
        for (const auto& d : entry["shape"]) {
            if (!d.is_number_integer() || d.get<std::int64_t>() < 0) {
                throw Error(ErrorCode::MalformedConfig, "tensor '" + name + "' has an invalid shape");
            }
            info.shape.push_back(d.get<std::int64_t>());
        }
        const auto& offsets = entry["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2) {
            throw Error(ErrorCode::MalformedConfig, "tensor '" + name + "' has invalid data_offsets");
        }
        info.begin = offsets[0].get<std::size_t>();
        info.end = offsets[1].get<std::size_t>();
        if (info.end < info.begin || info.end > payload_size ||
            info.end - info.begin != info.element_count() * dtype_size(info.dtype)) {
            throw Error(ErrorCode::MalformedConfig, "tensor '" + name + "' data_offsets inconsistent with shape");
        }
        tensors_.emplace(name, std::move(info));
    }
}

SafeTensorsFile SafeTensorsFile::open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::LoadFailure, "cannot open tensor file " + path.string());
    std::error_code ec;
    const auto file_size = std::filesystem::file_size(path, ec);
    if (ec || file_size < 8) throw Error(ErrorCode::MalformedConfig, "tensor file too short: " + path.string());
    char len_bytes[8];
    in.read(len_bytes, 8);
    const std::uint64_t header_len = read_le64(len_bytes);
    if (header_len > file_size - 8) throw Error(ErrorCode::MalformedConfig, "tensor header length exceeds file");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw Error(ErrorCode::LoadFailure, "short read on " + path.string());

    SafeTensorsFile f;
    f.path_ = path;
    f.payload_offset_ = 8 + header_len;
    f.parse_header(header, file_size - f.payload_offset_);
    return f;
}

SafeTensorsFile SafeTensorsFile::from_bytes(std::string bytes) {
    if (bytes.size() < 8) throw Error(ErrorCode::MalformedConfig, "tensor buffer too short");
    const std::uint64_t header_len = read_le64(bytes.data());
    if (header_len > bytes.size() - 8) throw Error(ErrorCode::MalformedConfig, "tensor header length exceeds buffer");
    SafeTensorsFile f;
    f.payload_offset_ = 8 + header_len;
    f.parse_header(std::string_view(bytes).substr(8, header_len), bytes.size() - f.payload_offset_);
    f.bytes_ = std::move(bytes);
    return f;
}

bool SafeTensorsFile::contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

const TensorInfo& SafeTensorsFile::info(std::string_view name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error(ErrorCode::MissingTensor, "no tensor named '" + std::string(name) + "'");
    return it->second;
}

std::vector<std::string> SafeTensorsFile::names() const {
    std::vector<std::string> out;
    for (const auto& [name, info] : tensors_) out.push_back(name);
    return out;
}

std::string SafeTensorsFile::raw(std::string_view name) const {
    const TensorInfo& t = info(name);
    const std::size_t len = t.end - t.begin;
    if (path_.empty()) return bytes_.substr(payload_offset_ + t.begin, len);
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw Error(ErrorCode::LoadFailure, "cannot reopen " + path_.string());
    in.seekg(static_cast<std::streamoff>(payload_offset_ + t.begin));
    std::string out(len, '\0');
    in.read(out.data(), static_cast<std::streamsize>(len));
    if (!in) throw Error(ErrorCode::LoadFailure, "short read of tensor '" + t.name + "'");
    return out;
}

std::vector<double> SafeTensorsFile::values(std::string_view name) const {
    const TensorInfo& t = info(name);
    const std::string bytes = raw(name);
    const std::size_t n = t.element_count();
    std::vector<double> out(n);
    const char* p = bytes.data();
    switch (t.dtype) {
        case DType::F16:
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t h;
                std::memcpy(&h, p + 2 * i, 2);
                out[i] = half_to_double(h);
            }
            break;
        case DType::BF16:
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t h;
                std::memcpy(&h, p + 2 * i, 2);
                out[i] = bf16_to_double(h);
            }
            break;
        case DType::F32:
            for (std::size_t i = 0; i < n; ++i) {
                float f;
                std::memcpy(&f, p + 4 * i, 4);
                out[i] = f;
            }
            break;
        case DType::F64:
            std::memcpy(out.data(), p, 8 * n);
            break;
    }
    return out;
}

std::string write_safetensors(std::span<const TensorData> tensors, const std::map<std::string, std::string>& metadata) {
    json header = json::object();
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::string payload;
    for (const auto& t : tensors) {
        std::size_t expected = 1;
        for (const auto d : t.shape) expected *= static_cast<std::size_t>(d);
        if (expected != t.values.size()) {
            throw Error(ErrorCode::ShapeMismatch, "tensor '" + t.name + "' values do not match shape");
        }
        const std::size_t begin = payload.size();
        for (const double v : t.values) {
            switch (t.dtype) {
                case DType::F16: {
                    const std::uint16_t h = double_to_half(v);
                    payload.append(reinterpret_cast<const char*>(&h), 2);
                    break;
                }
                case DType::BF16: {
                    const std::uint16_t h = double_to_bf16(v);
                    payload.append(reinterpret_cast<const char*>(&h), 2);
                    break;
                }
                case DType::F32: {
                    const float f = static_cast<float>(v);
                    payload.append(reinterpret_cast<const char*>(&f), 4);
                    break;
                }
                case DType::F64:
                    payload.append(reinterpret_cast<const char*>(&v), 8);
                    break;
            }
        }
        header[t.name] = {{"dtype", std::string(to_string(t.dtype))},
                          {"shape", t.shape},
                          {"data_offsets", {begin, payload.size()}}};
    }
    std::string head = header.dump();
    // pad the header so the payload starts 8-byte aligned
    while ((head.size() % 8) != 0) head += ' ';
    std::string out;
    const std::uint64_t len = head.size();
    for (int i = 0; i < 8; ++i) out += static_cast<char>((len >> (8 * i)) & 0xFF);
    out += head;
    out += payload;
    return out;
}

}  // namespace glitch
