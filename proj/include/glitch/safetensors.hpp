#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glitch {

enum class DType { F16, BF16, F32, F64 };

std::string_view to_string(DType dtype);
std::size_t dtype_size(DType dtype);

struct TensorInfo {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;
    std::size_t begin = 0;  // relative to payload start
    std::size_t end = 0;

    std::size_t element_count() const;
};

// Reader for the safetensors layout: 8-byte little-endian header length,
// JSON header, then the little-endian payload. Files are opened lazily;
// only the header is read up front.
class SafeTensorsFile {
public:
    static SafeTensorsFile open(const std::filesystem::path& path);
    static SafeTensorsFile from_bytes(std::string bytes);

    bool contains(std::string_view name) const;
    const TensorInfo& info(std::string_view name) const;
    std::vector<std::string> names() const;
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

    std::string raw(std::string_view name) const;
    // Values converted to double, row-major.
    std::vector<double> values(std::string_view name) const;

private:
    void parse_header(std::string_view header, std::size_t payload_size);

    std::filesystem::path path_;
    std::string bytes_;  // whole file when built from memory
    std::size_t payload_offset_ = 0;
    std::map<std::string, TensorInfo, std::less<>> tensors_;
    std::map<std::string, std::string> metadata_;
};

struct TensorData {
    std::string name;
    DType dtype = DType::F64;
    std::vector<std::int64_t> shape;
    std::vector<double> values;
};

std::string write_safetensors(std::span<const TensorData> tensors,
                              const std::map<std::string, std::string>& metadata = {});

double half_to_double(std::uint16_t h);
std::uint16_t double_to_half(double v);
double bf16_to_double(std::uint16_t h);
std::uint16_t double_to_bf16(double v);

}  // namespace glitch
