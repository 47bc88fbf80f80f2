#include <gtest/gtest.h>

#include <sstream>

#include "cimsim/tensor_io.hpp"

using namespace cimsim;

namespace {

Tensor roundtrip(const Tensor& t) {
  std::stringstream ss;
  write_tensor(ss, t);
  return read_tensor(ss);
}

}  // namespace

TEST(TensorIo, RoundTripEveryDtype) {
  const std::vector<std::pair<DType, std::vector<double>>> cases{
      {DType::u8, {0, 1, 255, 17}},      {DType::i8, {-128, 0, 127, -3}},   {DType::u16, {0, 65535, 9, 1}},
      {DType::i16, {-32768, 32767, 0, 5}}, {DType::f32, {0.5, -1.25, 3, 0}}, {DType::f64, {0.1, -2e10, 1e-300, 7}},
      {DType::i4, {-8, 7, 0, -1}}};
  for (const auto& [dt, vals] : cases) {
    Tensor t{dt, {2, 2}, vals};
    const Tensor back = roundtrip(t);
    EXPECT_EQ(back.dtype, dt);
    EXPECT_EQ(back.shape, t.shape);
    EXPECT_EQ(back.values, t.values);
  }
}

TEST(TensorIo, RejectsOutOfRangeValues) {
  std::stringstream ss;
  EXPECT_THROW(write_tensor(ss, Tensor{DType::u8, {1}, {256}}), SemanticError);
  EXPECT_THROW(write_tensor(ss, Tensor{DType::i4, {1}, {8}}), SemanticError);
  EXPECT_THROW(write_tensor(ss, Tensor{DType::i8, {1}, {0.5}}), SemanticError);
  EXPECT_THROW(write_tensor(ss, Tensor{DType::f32, {3}, {1, 2}}), SemanticError);
}

TEST(TensorIo, RejectsBadHeader) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_tensor(bad), SchemaError);
  std::stringstream ss;
  write_tensor(ss, Tensor{DType::u8, {4}, {1, 2, 3, 4}});
  std::string bytes = ss.str();
  bytes[4] = 9;  // version
  std::stringstream v(bytes);
  EXPECT_THROW(read_tensor(v), SchemaError);
  bytes = ss.str();
  bytes[5] = 42;  // dtype
  std::stringstream d(bytes);
  EXPECT_THROW(read_tensor(d), SchemaError);
}

TEST(TensorIo, TruncatedPayload) {
  std::stringstream ss;
  write_tensor(ss, Tensor{DType::u16, {4}, {1, 2, 3, 4}});
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream t(bytes);
  EXPECT_THROW(read_tensor(t), SchemaError);
}

TEST(TensorIo, WeightTensorCarriesBitwidth) {
  const auto w = to_weight_tensor("w", Tensor{DType::i4, {2}, {1, -1}});
  EXPECT_EQ(w.element_bitwidth, 4u);
  EXPECT_EQ(w.shape, (std::vector<std::size_t>{2}));
  EXPECT_EQ(to_weight_tensor("w", Tensor{DType::i16, {1}, {1}}).element_bitwidth, 16u);
}
