// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "osd/record.hpp"
#include "osd/sparsify.hpp"

using namespace osd;

namespace {

std::vector<std::uint64_t> indices(const std::vector<SparseEntry>& entries) {
  std::vector<std::uint64_t> out;
  for (const auto& e : entries) out.push_back(e.index);
  return out;
}

SparseFactorPair random_pair(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> dim(1, 40), rank(1, 6);
  const std::uint32_t n = dim(rng), d = dim(rng), k = rank(rng);
  auto p = SparseFactorPair::empty(n, d, k, 1, k - 1);
  std::bernoulli_distribution keep(0.3);
  std::normal_distribution<float> g;
  for (std::uint64_t i = 0; i < std::uint64_t{n} * k; ++i)
    if (keep(rng)) p.entries_u.push_back({i, g(rng) + 10.0f});
  for (std::uint64_t i = 0; i < std::uint64_t{k} * d; ++i)
    if (keep(rng)) p.entries_v.push_back({i, g(rng) - 10.0f});
  return p;
}

}  // namespace

TEST(TopS, ZeroKeepsNothing) {
  std::mt19937_64 rng(1);
  EXPECT_TRUE(top_s(oracle::random_matrix(rng, 4, 4), 0).entries.empty());
}

TEST(TopS, ByInspection) {
  DenseMatrix m(2, 2);
  m << 1, -5, 3, 2;
  const auto sm = top_s(m, 2);
  ASSERT_EQ(sm.entries.size(), 2u);
  EXPECT_EQ(sm.entries[0], (SparseEntry{1, -5.0f}));
  EXPECT_EQ(sm.entries[1], (SparseEntry{2, 3.0f}));
}

TEST(TopS, MatchesFullSortOracle) {
  std::mt19937_64 rng(12);
  const DenseMatrix m = oracle::random_matrix(rng, 12, 9);
  EXPECT_EQ(indices(top_s(m, 20).entries), oracle::top_s_indices(m, 20));
}

TEST(TopS, TiesGoToLowerIndex) {
  DenseMatrix m(1, 5);
  m << 2, -3, 3, -3, 1;
  EXPECT_EQ(indices(top_s(m, 2).entries), (std::vector<std::uint64_t>{1, 2}));
}

TEST(TopS, NeverKeepsZeros) {
  DenseMatrix m = DenseMatrix::Zero(3, 3);
  m(1, 1) = 4.0f;
  EXPECT_EQ(top_s(m, 5).entries.size(), 1u);
}

TEST(TopS, SLargerThanSizeIsArgumentError) {
  EXPECT_THROW(top_s(DenseMatrix::Ones(2, 2), 5), ArgumentError);
}

TEST(TopS, NestedAndErrorNonIncreasing) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    DenseMatrix m = oracle::random_matrix(rng, 7, 6);
    // Coarse values force many magnitude ties.
    m = (m * 2.0f).array().round().matrix();
    std::set<std::uint64_t> previous;
    double previous_err = std::numeric_limits<double>::infinity();
    for (std::uint64_t s = 0; s <= 42; ++s) {
      const auto sm = top_s(m, s);
      const auto idx = indices(sm.entries);
      const std::set<std::uint64_t> now(idx.begin(), idx.end());
      EXPECT_TRUE(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
      const double err = (m - densify(sm)).norm();
      EXPECT_LE(err, previous_err);
      // Every kept magnitude dominates every dropped one.
      float min_kept = std::numeric_limits<float>::infinity(), max_dropped = 0.0f;
      for (Eigen::Index i = 0; i < m.size(); ++i)
        (now.count(i) ? min_kept = std::min(min_kept, std::abs(m.data()[i]))
                      : max_dropped = std::max(max_dropped, std::abs(m.data()[i])));
      if (!now.empty()) EXPECT_GE(min_kept, max_dropped);
      previous = now;
      previous_err = err;
    }
  }
}

TEST(Densify, EmptyIsZero) {
  EXPECT_TRUE(densify(SparseMatrix{3, 4, {}}).isZero(0.0f));
}

TEST(Densify, FullRetentionIsExact) {
  std::mt19937_64 rng(3);
  const DenseMatrix m = oracle::random_matrix(rng, 5, 6);
  EXPECT_EQ(densify(top_s(m, 30)), m);
}

TEST(Densify, OutOfRangeIsIntegrityError) {
  EXPECT_THROW(densify(SparseMatrix{2, 2, {{4, 1.0f}}}), IntegrityError);
}

TEST(Codec, EmptyPairIsHeaderOnly) {
  const auto p = SparseFactorPair::empty(10, 12, 3, 1, 2);
  const auto bytes = encode(p);
  EXPECT_EQ(bytes.size(), kFactorHeaderBytes);
  EXPECT_EQ(decode(bytes), p);
}

TEST(Codec, TenBitIndexStream) {
  // n * k = 256 * 4 = 1024 -> 10-bit indices; 8 entries -> 80 bits = 10 bytes.
  auto p = SparseFactorPair::empty(256, 3, 4, 1, 3);
  ASSERT_EQ(p.idx_bits_u, 10);
  for (std::uint64_t i = 0; i < 8; ++i) p.entries_u.push_back({i * 100 + 3, float(i + 1)});
  EXPECT_EQ(pack_indices(p.entries_u, p.idx_bits_u).size(), 10u);
  EXPECT_EQ(encode(p).size(), kFactorHeaderBytes + 10 + 8 * 4);
}

TEST(Codec, BitOrderIsMsbFirst) {
  // Two 3-bit indices 5 (101) and 3 (011) pack as 1010 11|00.
  const auto packed = pack_indices({{5, 1.0f}, {3, 1.0f}}, 3);
  ASSERT_EQ(packed.size(), 1u);
  EXPECT_EQ(packed[0], 0b10101100);
}

TEST(Codec, RandomRoundTripsAreByteExact) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = random_pair(rng);
    const auto bytes = encode(p);
    const auto back = decode(bytes);
    ASSERT_EQ(back, p);
    ASSERT_EQ(encode(back), bytes);
    ASSERT_EQ(reconstruct(back), reconstruct(p));
    const std::uint64_t stream_u = (p.entries_u.size() * p.idx_bits_u + 7) / 8;
    const std::uint64_t stream_v = (p.entries_v.size() * p.idx_bits_v + 7) / 8;
    ASSERT_EQ(bytes.size(), kFactorHeaderBytes + stream_u + stream_v + 4 * (p.entries_u.size() + p.entries_v.size()));
  }
}

TEST(Codec, TruncatedStreamIsIntegrityError) {
  std::mt19937_64 rng(5);
  auto p = random_pair(rng);
  p.entries_u.push_back({std::uint64_t{p.n} * p.k - 1, 1.0f});  // at least one entry
  std::sort(p.entries_u.begin(), p.entries_u.end(), [](auto a, auto b) { return a.index < b.index; });
  p.entries_u.erase(std::unique(p.entries_u.begin(), p.entries_u.end(),
                                [](auto a, auto b) { return a.index == b.index; }),
                    p.entries_u.end());
  auto bytes = encode(p);
  bytes.pop_back();
  EXPECT_THROW(decode(bytes), IntegrityError);
  bytes.resize(10);
  EXPECT_THROW(decode(bytes), IntegrityError);
}

TEST(Codec, NonCanonicalOrderIsFormatError) {
  auto p = SparseFactorPair::empty(8, 8, 2, 1, 1);
  p.entries_u = {{3, 1.0f}, {7, 2.0f}};
  auto bytes = encode(p);
  // Swap the two 4-bit indices in the stream: 0011 0111 -> 0111 0011.
  bytes[kFactorHeaderBytes] = 0x73;
  EXPECT_THROW(decode(bytes), FormatError);
}

TEST(Codec, WrongIndexWidthIsFormatError) {
  auto bytes = encode(SparseFactorPair::empty(8, 8, 2, 1, 1));
  bytes[kFactorHeaderBytes - 2] = 3;
  EXPECT_THROW(decode(bytes), FormatError);
}

TEST(Codec, EncodeRejectsZeroValues) {
  auto p = SparseFactorPair::empty(4, 4, 1, 1, 0);
  p.entries_v = {{1, 0.0f}};
  EXPECT_THROW(encode(p), FormatError);
}
