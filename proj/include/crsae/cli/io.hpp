#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crsae/matrix.hpp"

namespace crsae::cli {

// Binary array file: "CRSAE1\n", dtype tag, rank, dims, row-major payload.
// All integers and values little-endian.
inline constexpr std::string_view kTensorMagic = "CRSAE1\n";
inline constexpr std::uint8_t kDtypeFloat64 = 1;

struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    std::size_t element_count() const;
};

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);  // throws std::runtime_error on malformed input

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const Matrix& m);
Matrix to_matrix(const Tensor& t);  // rank 2 only

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);  // inverse of format_double; throws on junk

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace crsae::cli
