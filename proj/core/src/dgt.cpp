#include "dgcw/dgt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dgcw {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

template <typename U, typename Bits>
void put_le(std::vector<std::uint8_t>& out, U value) {
  Bits bits = std::bit_cast<Bits>(value);
  for (std::size_t i = 0; i < sizeof(Bits); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename U, typename Bits>
U get_le(const std::uint8_t* p) {
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(Bits); ++i) bits |= static_cast<Bits>(p[i]) << (8 * i);
  return std::bit_cast<U>(bits);
}

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

DgtHeader parse_header(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a DGT1 file");
  DgtHeader h;
  if (bytes[4] > 1) throw FormatError("unknown DGT1 dtype " + std::to_string(bytes[4]));
  h.dtype = static_cast<DType>(bytes[4]);
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("DGT1 rank must be positive");
  offset = 6;
  if (bytes.size() < offset + 4 * rank) throw FormatError("truncated DGT1 header");
  for (std::size_t i = 0; i < rank; ++i) {
    auto e = get_u32(bytes.data() + offset);
    if (e == 0) throw FormatError("DGT1 extent of zero");
    h.shape.push_back(e);
    offset += 4;
  }
  if (bytes.size() != offset + shape_numel(h.shape) * dtype_size(h.dtype))
    throw FormatError("DGT1 payload size does not match header " + shape_str(h.shape));
  return h;
}

}  // namespace

const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

template <typename T>
std::vector<std::uint8_t> encode_dgt(const Tensor<T>& t, DType as) {
  const auto& shape = t.shape();
  if (shape.size() > 255) throw FormatError("rank too large for DGT1");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(6 + 4 * shape.size() + t.numel() * dtype_size(as));
  out.push_back(static_cast<std::uint8_t>(as));
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (auto e : shape) {
    if (e > 0xffffffffu) throw FormatError("extent too large for DGT1");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (auto v : t.data()) {
    if (as == DType::F32)
      put_le<float, std::uint32_t>(out, static_cast<float>(v));
    else
      put_le<double, std::uint64_t>(out, static_cast<double>(v));
  }
  return out;
}

template <typename T>
std::vector<std::uint8_t> encode_dgt(const Tensor<T>& t) {
  return encode_dgt(t, dtype_of<T>());
}

DgtHeader decode_dgt_header(const std::vector<std::uint8_t>& bytes) {
  std::size_t offset = 0;
  return parse_header(bytes, offset);
}

template <typename T>
Tensor<T> decode_dgt(const std::vector<std::uint8_t>& bytes) {
  std::size_t offset = 0;
  auto h = parse_header(bytes, offset);
  const std::size_t n = shape_numel(h.shape);
  Buffer<T> values(n);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < n; ++i) {
    if (h.dtype == DType::F32)
      values[i] = static_cast<T>(get_le<float, std::uint32_t>(p + 4 * i));
    else
      values[i] = static_cast<T>(get_le<double, std::uint64_t>(p + 8 * i));
  }
  return Tensor<T>::from(h.shape, std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename T>
void write_dgt(const std::filesystem::path& path, const Tensor<T>& t, DType as) {
  write_file_bytes(path, encode_dgt(t, as));
}

template <typename T>
void write_dgt(const std::filesystem::path& path, const Tensor<T>& t) {
  write_file_bytes(path, encode_dgt(t));
}

template <typename T>
Tensor<T> read_dgt(const std::filesystem::path& path) {
  return decode_dgt<T>(read_file_bytes(path));
}

DgtHeader read_dgt_header(const std::filesystem::path& path) { return decode_dgt_header(read_file_bytes(path)); }

#define DGCW_INSTANTIATE_DGT(T)                                                        \
  template std::vector<std::uint8_t> encode_dgt(const Tensor<T>&);                     \
  template std::vector<std::uint8_t> encode_dgt(const Tensor<T>&, DType);              \
  template Tensor<T> decode_dgt<T>(const std::vector<std::uint8_t>&);                  \
  template void write_dgt(const std::filesystem::path&, const Tensor<T>&);             \
  template void write_dgt(const std::filesystem::path&, const Tensor<T>&, DType);      \
  template Tensor<T> read_dgt<T>(const std::filesystem::path&);

DGCW_INSTANTIATE_DGT(float)
DGCW_INSTANTIATE_DGT(double)

}  // namespace dgcw
