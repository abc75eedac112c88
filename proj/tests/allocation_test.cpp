// Copyright 2026 The sparsetune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "sparsetune/allocation.hpp"

using namespace sparsetune;

namespace {

MatrixD random_scores(std::size_t r, std::size_t c, Rng& rng, bool coarse = false) {
  MatrixD m(r, c);
  for (auto& v : m.data()) v = coarse ? static_cast<double>(rng.below(4)) : rng.uniform(0.0, 1.0);
  return m;
}

// Per-row reference: stable sort of column indices by score descending.
std::vector<std::size_t> reference_row_top(std::span<const double> row, std::size_t k) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return row[a] > row[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Maximum achievable sum over every subset of size k (exhaustive, width <= 16).
double brute_force_best(std::span<const double> row, std::size_t k) {
  const std::size_t w = row.size();
  double best = -1.0;
  for (std::uint32_t bits = 0; bits < (1u << w); ++bits) {
    if (static_cast<std::size_t>(std::popcount(bits)) != k) continue;
    double s = 0;
    for (std::size_t i = 0; i < w; ++i)
      if (bits & (1u << i)) s += row[i];
    best = std::max(best, s);
  }
  return best;
}

double selected_sum(std::span<const double> row, const Mask& m, std::size_t r, std::size_t begin,
                    std::size_t width) {
  double s = 0;
  for (std::size_t c = begin; c < begin + width; ++c)
    if (m.test(r, c)) s += row[c];
  return s;
}

}  // namespace

TEST(MaskType, CardinalityTracksPopcount) {
  Mask m(3, 5);
  m.set(0, 1, true);
  m.set(2, 4, true);
  m.set(2, 4, true);
  m.set(1, 0, true);
  m.set(1, 0, false);
  EXPECT_EQ(m.cardinality(), 2u);
  EXPECT_EQ(m.popcount(), 2u);
  EXPECT_EQ(m.selected(), (std::vector<std::size_t>{1, 14}));
}

TEST(MaskType, BytesAreMsbFirstRowMajor) {
  Mask m(2, 5);
  m.set(0, 0, true);  // bit 0 -> 0x80 of byte 0
  m.set(1, 3, true);  // flat 8 -> 0x80 of byte 1
  m.set(1, 4, true);  // flat 9 -> 0x40 of byte 1
  EXPECT_EQ(m.to_bytes(), (std::vector<std::uint8_t>{0x80, 0xC0}));
  EXPECT_TRUE(Mask::from_bytes(2, 5, m.to_bytes()).same_bits(m));
  EXPECT_THROW(Mask::from_bytes(2, 5, std::vector<std::uint8_t>{0}), IoError);
}

TEST(PerNeuron, FullAndEmptyBudgets) {
  Rng rng(1);
  const auto s = random_scores(4, 6, rng);
  const auto all = allocate_per_neuron(s, 6);
  const auto none = allocate_per_neuron(s, 0);
  EXPECT_EQ(all.cardinality(), 24u);
  EXPECT_EQ(none.cardinality(), 0u);
}

TEST(PerNeuron, KTooLargeThrows) {
  EXPECT_THROW(allocate_per_neuron(MatrixD(2, 3), 4), ValueError);
}

TEST(PerNeuron, MatchesPerRowSortOracle) {
  Rng rng(2);
  for (bool coarse : {false, true}) {
    const auto s = random_scores(8, 16, rng, coarse);
    const auto m = allocate_per_neuron(s, 3);
    for (std::size_t r = 0; r < 8; ++r) {
      std::vector<std::size_t> got;
      for (std::size_t c = 0; c < 16; ++c)
        if (m.test(r, c)) got.push_back(c);
      EXPECT_EQ(got, reference_row_top(s.row(r), 3));
    }
  }
}

TEST(PerNeuron, OptimalAgainstBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t width = 1 + rng.below(16);
    const auto s = random_scores(3, width, rng, trial % 2 == 0);
    const std::size_t k = rng.below(width + 1);
    const auto m = allocate_per_neuron(s, k);
    for (std::size_t r = 0; r < 3; ++r) {
      EXPECT_EQ(m.row_popcount(r), k);
      EXPECT_DOUBLE_EQ(selected_sum(s.row(r), m, r, 0, width), brute_force_best(s.row(r), k));
    }
  }
}

TEST(PerNeuron, MonotoneInK) {
  Rng rng(4);
  const auto s = random_scores(5, 12, rng, true);
  for (std::size_t k = 0; k < 12; ++k) {
    const auto small = allocate_per_neuron(s, k);
    const auto big = allocate_per_neuron(s, k + 1);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE(small.test(i), big.test(i));
  }
}

TEST(PerNeuron, ScaleInvariant) {
  Rng rng(5);
  const auto s = random_scores(6, 10, rng);
  MatrixD scaled = s;
  for (auto& v : scaled.data()) v *= 7.3;
  EXPECT_TRUE(allocate_per_neuron(s, 4).same_bits(allocate_per_neuron(scaled, 4)));
}

TEST(PerNeuronRatio, BudgetAndSpread) {
  Rng rng(6);
  const auto s = random_scores(10, 20, rng);
  // 0.135 * 200 = 27 -> 2 per row, 7 rows get a third entry
  const auto m = allocate_per_neuron_ratio(s, 0.135);
  EXPECT_EQ(m.cardinality(), 27u);
  std::size_t threes = 0;
  for (std::size_t r = 0; r < 10; ++r) {
    const auto pc = m.row_popcount(r);
    EXPECT_TRUE(pc == 2 || pc == 3);
    threes += pc == 3;
    // each row holds its own top entries
    EXPECT_EQ(m.row_popcount(r), pc);
    for (std::size_t c : reference_row_top(s.row(r), pc)) EXPECT_TRUE(m.test(r, c));
  }
  EXPECT_EQ(threes, 7u);
}

TEST(PerNeuronRatio, ExtrasGoToStrongestNextCandidates) {
  // Third-ranked candidates: row0 0.1, row1 0.9, row2 0.5
  const auto s = MatrixD::from_rows({{3, 2, 0.1}, {3, 2, 0.9}, {3, 2, 0.5}});
  const auto m = allocate_per_neuron_ratio(s, 8.0 / 9.0);  // 8 of 9 -> 2 each + 2 extras
  EXPECT_EQ(m.row_popcount(0), 2u);
  EXPECT_EQ(m.row_popcount(1), 3u);
  EXPECT_EQ(m.row_popcount(2), 3u);
}

TEST(PerNeuronRatio, SmallBudgetUsesFloor) {
  Rng rng(7);
  const auto s = random_scores(64, 32, rng);
  EXPECT_EQ(allocate_per_neuron_ratio(s, 1.0 - 0.999).cardinality(), 2u);   // 2.048
  EXPECT_EQ(allocate_per_neuron_ratio(s, 1.0 - 0.9998).cardinality(), 0u);  // 0.41
  EXPECT_EQ(allocate_per_neuron_ratio(s, 1.0).cardinality(), s.size());
  EXPECT_EQ(allocate_per_neuron_ratio(MatrixD(10, 1000), 1.0 - 0.999).cardinality(), 10u);
}

TEST(Structured, UnconstrainedWhenNEqualsM) {
  Rng rng(8);
  EXPECT_EQ(allocate_structured(random_scores(3, 8, rng), 4, 4).cardinality(), 24u);
}

TEST(Structured, TwoOfFourHandCase) {
  const auto s = MatrixD::from_rows({{4, 1, 3, 2}});
  const auto m = allocate_structured(s, 2, 4);
  EXPECT_EQ(m.to_bytes(), (std::vector<std::uint8_t>{0xA0}));  // 1 0 1 0
  EXPECT_DOUBLE_EQ(selected_sum(s.row(0), m, 0, 0, 4), brute_force_best(s.row(0), 2));
}

TEST(Structured, EveryAlignedWindowHasExactlyN) {
  Rng rng(9);
  const auto s = random_scores(4, 16, rng, true);
  const auto m = allocate_structured(s, 2, 4);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t g = 0; g < 16; g += 4) {
      std::size_t pc = 0;
      for (std::size_t c = g; c < g + 4; ++c) pc += m.test(r, c);
      EXPECT_EQ(pc, 2u);
      EXPECT_DOUBLE_EQ(selected_sum(s.row(r), m, r, g, 4), brute_force_best(s.row(r).subspan(g, 4), 2));
    }
  }
}

TEST(Structured, TrailingShortGroup) {
  // cols = 6, m = 4: groups [0,4) and a short [4,6) keeping min(3, 2) = 2
  Rng rng(10);
  const auto s = random_scores(2, 6, rng);
  const auto m = allocate_structured(s, 3, 4);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(m.row_popcount(r), 5u);
    EXPECT_TRUE(m.test(r, 4));
    EXPECT_TRUE(m.test(r, 5));
  }
}

TEST(Structured, InvalidPatternThrows) {
  EXPECT_THROW(allocate_structured(MatrixD(1, 4), 3, 2), ValueError);
  EXPECT_THROW(allocate_structured(MatrixD(1, 4), 0, 0), ValueError);
}

TEST(Global, FullAndEmpty) {
  Rng rng(11);
  ImportanceScores sc;
  sc.layers.push_back({0, "layer0", random_scores(3, 4, rng)});
  sc.layers.push_back({1, "layer1", random_scores(2, 3, rng)});
  EXPECT_EQ(allocate_global(sc, 1.0).cardinality(), 18u);
  EXPECT_EQ(allocate_global(sc, 0.0).cardinality(), 0u);
  EXPECT_EQ(allocate_global(sc, 0.5).cardinality(), 9u);
}

TEST(Global, ConcentratesInDominantLayer) {
  Rng rng(12);
  ImportanceScores sc;
  MatrixD low = random_scores(4, 4, rng);   // [0, 1)
  MatrixD high = random_scores(4, 4, rng);  // shifted to [10, 11)
  for (auto& v : high.data()) v += 10.0;
  sc.layers.push_back({0, "layer0", low});
  sc.layers.push_back({1, "layer1", high});
  const auto masks = allocate_global(sc, 0.25);  // 8 of 32
  EXPECT_EQ(masks.layers[0].cardinality(), 0u);
  EXPECT_EQ(masks.layers[1].cardinality(), 8u);
  const auto per_neuron = allocate(sc, PerNeuronK{1});
  for (const auto& m : per_neuron.layers)
    for (std::size_t r = 0; r < m.rows(); ++r) EXPECT_EQ(m.row_popcount(r), 1u);
}

TEST(Global, FlatIndexTieBreak) {
  ImportanceScores sc;
  sc.layers.push_back({0, "a", MatrixD(1, 2, 1.0)});
  sc.layers.push_back({1, "b", MatrixD(1, 2, 1.0)});
  const auto masks = allocate_global(sc, 0.75);  // 3 of 4, all tied
  EXPECT_EQ(masks.layers[0].cardinality(), 2u);
  EXPECT_TRUE(masks.layers[1].test(0));
  EXPECT_FALSE(masks.layers[1].test(1));
}

TEST(MaskRatioTest, Extremes) {
  MaskSet ones, zeros;
  ones.layers.push_back(Mask::filled(3, 3, true));
  zeros.layers.push_back(Mask::filled(3, 3, false));
  EXPECT_EQ(mask_ratio(ones), 0.0);
  EXPECT_EQ(mask_ratio(zeros), 1.0);
  EXPECT_EQ(mask_ratio(MaskSet{}), 1.0);
}

TEST(MaskRatioTest, OneWeightPerNeuronOnWideLayer) {
  ImportanceScores sc;
  Rng rng(13);
  sc.layers.push_back({0, "layer0", random_scores(10, 1000, rng)});
  EXPECT_NEAR(mask_ratio(allocate(sc, PerNeuronK{1})), 0.999, 1e-15);
}

TEST(RandomMask, CardinalitiesMatchReference) {
  Rng rng(14);
  MaskSet ref;
  ref.layers.push_back(allocate_per_neuron(random_scores(4, 6, rng), 2, 0, "layer0"));
  ref.layers.push_back(Mask::filled(3, 3, false, 1, "layer1"));
  ref.layers.push_back(Mask::filled(2, 2, true, 2, "layer2"));
  Rng r(7);
  const auto m = random_mask(ref, r);
  ASSERT_EQ(m.layers.size(), 3u);
  EXPECT_EQ(m.layers[0].cardinality(), 8u);
  EXPECT_EQ(m.layers[1].cardinality(), 0u);
  EXPECT_EQ(m.layers[2].cardinality(), 4u);
  EXPECT_EQ(m.layers[0].name(), "layer0");
}

TEST(RandomMask, GoldenPositionsForFixedSeed) {
  MaskSet ref;
  Mask layer(4, 8, 0, "layer0");
  for (std::size_t i = 0; i < 5; ++i) layer.set(i, true);
  ref.layers.push_back(layer);
  Rng r(123);
  const auto m = random_mask(ref, r);
  // Positions from an independent Python port of the generator and the partial Fisher-Yates draw.
  EXPECT_EQ(m.layers[0].selected(), (std::vector<std::size_t>{0, 6, 13, 16, 31}));
}

TEST(BudgetParse, AllForms) {
  EXPECT_EQ(std::get<PerNeuronK>(parse_budget("k3")).k, 3u);
  EXPECT_DOUBLE_EQ(std::get<GlobalFraction>(parse_budget("global:0.25")).fraction, 0.25);
  const auto s = std::get<Structured>(parse_budget("structured:2:4"));
  EXPECT_EQ(s.n, 2u);
  EXPECT_EQ(s.m, 4u);
  EXPECT_DOUBLE_EQ(std::get<MaskRatio>(parse_budget("ratio:0.999")).ratio, 0.999);
  for (const char* bad : {"", "k", "kx", "global:2", "structured:5:4", "structured:2", "foo"}) {
    EXPECT_THROW(parse_budget(bad), ConfigError) << bad;
  }
}

TEST(BudgetParse, IntegerKForRatio) {
  EXPECT_EQ(per_neuron_k_for_ratio(64, 0.999), 1u);
  EXPECT_EQ(per_neuron_k_for_ratio(64, 0.9106), 6u);
  EXPECT_EQ(per_neuron_k_for_ratio(64, 1.0), 0u);
  EXPECT_EQ(per_neuron_k_for_ratio(64, 0.0), 64u);
}
