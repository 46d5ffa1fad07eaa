// Copyright 2026 The capa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "capa/error.hpp"
#include "capa/ops.hpp"
#include "capa/random.hpp"
#include "capa/tensor.hpp"
#include "support/gradcheck.hpp"

namespace capa {
namespace {

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = capa::testing::all_op_cases();
  const auto& c = cases.at(GetParam());
  Rng rng(1234 + GetParam());
  for (int instance = 0; instance < 60; ++instance) {
    const auto inst = c.make(rng);
    const auto outcome = capa::testing::grad_check(inst, rng);
    ASSERT_TRUE(outcome.ok) << c.name << " instance " << instance << ": " << outcome.detail;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Range<std::size_t>(0, capa::testing::all_op_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return capa::testing::all_op_cases()[info.param].name;
                         });

TEST(Ops, MatmulSmallExample) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {5, 6});
  const Tensor c = ops::matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_FLOAT_EQ(c(0, 0), 17.0F);
  EXPECT_FLOAT_EQ(c(1, 0), 39.0F);
}

TEST(Ops, MatmulRejectsMismatchedInnerDimension) {
  EXPECT_THROW(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Ops, NoTapeRecordsNothing) {
  Tensor a({2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  const Tensor frozen({2, 2}, {1, 0, 0, 1});
  ops::matmul(frozen, frozen);
  EXPECT_EQ(tape.size(), 0U);
  ops::matmul(a, frozen);
  EXPECT_EQ(tape.size(), 1U);
}

TEST(Ops, GradientOfSharedInputAccumulates) {
  Tensor x({1, 1}, {3.0F}, true);
  Tape tape;
  const Tensor y = ops::sum(ops::mul(x, x));
  tape.backward(y);
  ASSERT_EQ(tape.grad(x).size(), 1U);
  EXPECT_FLOAT_EQ(tape.grad(x)[0], 6.0F);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(7);
  Tensor x({3, 5});
  for (float& v : x.mutable_values()) v = static_cast<float>(uniform(rng, -50.0, 50.0));
  const Tensor y = ops::softmax_rows(x);
  for (std::size_t r = 0; r < 3; ++r) {
    float s = 0.0F;
    for (std::size_t c = 0; c < 5; ++c) s += y(r, c);
    EXPECT_NEAR(s, 1.0F, 1e-6F);
  }
}

TEST(Ops, SoftplusIsFiniteForLargeInputs) {
  const Tensor y = ops::softplus(Tensor({1, 2}, {100.0F, -100.0F}));
  EXPECT_FLOAT_EQ(y(0, 0), 100.0F);
  EXPECT_GT(y(0, 1), 0.0F);
}

TEST(Ops, L1LossWithEmptyMaskIsZero) {
  const Tensor p({1, 2}, {1.0F, 2.0F});
  const Tensor t({1, 2}, {0.0F, 0.0F});
  const Tensor m({1, 2}, {0.0F, 0.0F});
  EXPECT_FLOAT_EQ(ops::l1_loss_masked(p, t, m).item(), 0.0F);
}

}  // namespace
}  // namespace capa
