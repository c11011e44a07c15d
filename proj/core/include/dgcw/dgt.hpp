#pragma once

// DGT1 binary tensor files:
//   "DGT1" | u8 dtype (0 = f32, 1 = f64) | u8 rank | rank x u32 LE extents |
//   row-major LE payload

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcw/tensor.hpp"

namespace dgcw {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

const char* dtype_name(DType d);

struct DgtHeader {
  DType dtype = DType::F32;
  Shape shape;
};

// Encodes with the tensor's own precision unless `as` says otherwise.
template <typename T>
std::vector<std::uint8_t> encode_dgt(const Tensor<T>& t);
template <typename T>
std::vector<std::uint8_t> encode_dgt(const Tensor<T>& t, DType as);

DgtHeader decode_dgt_header(const std::vector<std::uint8_t>& bytes);

// Converts the payload to T when the stored dtype differs.
template <typename T>
Tensor<T> decode_dgt(const std::vector<std::uint8_t>& bytes);

template <typename T>
void write_dgt(const std::filesystem::path& path, const Tensor<T>& t);
template <typename T>
void write_dgt(const std::filesystem::path& path, const Tensor<T>& t, DType as);
template <typename T>
Tensor<T> read_dgt(const std::filesystem::path& path);

DgtHeader read_dgt_header(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace dgcw
