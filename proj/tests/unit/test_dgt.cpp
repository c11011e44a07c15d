#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>

#include "dgcw/dgt.hpp"
#include "dgcw/params.hpp"
#include "test_util.hpp"

using namespace dgcw;
using dgcw::test::random_tensor;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dgcw_test_dgt_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Dgt, HeaderLayoutByHand) {
  auto t = Tensor<float>::from({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  auto bytes = encode_dgt(t);
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 2 * 4 + 6 * 4);
  EXPECT_EQ(bytes[0], 'D');
  EXPECT_EQ(bytes[1], 'G');
  EXPECT_EQ(bytes[2], 'T');
  EXPECT_EQ(bytes[3], '1');
  EXPECT_EQ(bytes[4], 0);  // f32
  EXPECT_EQ(bytes[5], 2);  // rank
  EXPECT_EQ(bytes[6], 2);
  EXPECT_EQ(bytes[7], 0);
  EXPECT_EQ(bytes[10], 3);
  // 1.0f = 0x3f800000, little-endian
  EXPECT_EQ(bytes[14], 0x00);
  EXPECT_EQ(bytes[15], 0x00);
  EXPECT_EQ(bytes[16], 0x80);
  EXPECT_EQ(bytes[17], 0x3f);
}

TEST(Dgt, RoundTripIsBitIdentical) {
  auto dir = scratch("roundtrip");
  auto d = random_tensor<double>({3, 4, 5}, 1, -1e6, 1e6);
  auto f = random_tensor<float>({7}, 2);
  write_dgt(dir / "d.dgt", d);
  write_dgt(dir / "f.dgt", f);
  auto d2 = read_dgt<double>(dir / "d.dgt");
  auto f2 = read_dgt<float>(dir / "f.dgt");
  EXPECT_TRUE(dgcw::test::bit_equal(d, d2));
  EXPECT_TRUE(dgcw::test::bit_equal(f, f2));
  EXPECT_EQ(read_dgt_header(dir / "d.dgt").dtype, DType::F64);
  EXPECT_EQ(read_dgt_header(dir / "f.dgt").shape, (Shape{7}));
}

TEST(Dgt, SpecialValuesSurvive) {
  auto t = Tensor<double>::from({4}, std::vector<double>{-0.0, 1e-310, std::numeric_limits<double>::max(), -3.5});
  auto back = decode_dgt<double>(encode_dgt(t));
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data()[i]), std::bit_cast<std::uint64_t>(t.data()[i]));
}

TEST(Dgt, ConvertsBetweenPrecisions) {
  auto t = Tensor<double>::from({2}, std::vector<double>{0.5, -2.25});
  auto bytes = encode_dgt(t, DType::F32);
  EXPECT_EQ(decode_dgt_header(bytes).dtype, DType::F32);
  auto back = decode_dgt<double>(bytes);
  EXPECT_EQ(back.data()[0], 0.5);
  EXPECT_EQ(back.data()[1], -2.25);
}

TEST(Dgt, RejectsMalformedInput) {
  auto bytes = encode_dgt(Tensor<float>::from({2}, std::vector<float>{1, 2}));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_dgt<float>(bad_magic), FormatError);
  auto bad_dtype = bytes;
  bad_dtype[4] = 7;
  EXPECT_THROW(decode_dgt<float>(bad_dtype), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_dgt<float>(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_dgt<float>(trailing), FormatError);
  EXPECT_THROW(decode_dgt<float>(std::vector<std::uint8_t>{'D', 'G'}), FormatError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  auto dir = scratch("ckpt");
  ParamSet<double> a, b;
  a.add("layer.weight", random_tensor({3, 2}, 3), ParamRole::Weight);
  a.add("layer.bias", random_tensor({3}, 4), ParamRole::Bias);
  b.add("layer.weight", Tensor<double>::zeros({3, 2}), ParamRole::Weight);
  b.add("layer.bias", Tensor<double>::zeros({3}), ParamRole::Bias);
  save_checkpoint(dir, a);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.csv"));
  load_checkpoint(dir, b);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_TRUE(dgcw::test::bit_equal(a.entries()[i].tensor, b.entries()[i].tensor));
}

TEST(Checkpoint, MismatchesAreReported) {
  auto dir = scratch("ckpt_bad");
  ParamSet<double> a;
  a.add("w", random_tensor({3, 2}, 5), ParamRole::Weight);
  save_checkpoint(dir, a);
  ParamSet<double> wrong_shape;
  wrong_shape.add("w", Tensor<double>::zeros({2, 3}), ParamRole::Weight);
  EXPECT_THROW(load_checkpoint(dir, wrong_shape), std::runtime_error);
  ParamSet<double> missing;
  missing.add("v", Tensor<double>::zeros({3, 2}), ParamRole::Weight);
  EXPECT_THROW(load_checkpoint(dir, missing), std::runtime_error);
  ParamSet<double> extra;
  extra.add("w", Tensor<double>::zeros({3, 2}), ParamRole::Weight);
  extra.add("v", Tensor<double>::zeros({1}), ParamRole::Weight);
  EXPECT_THROW(load_checkpoint(dir, extra), std::runtime_error);
}
