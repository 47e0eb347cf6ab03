// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <unistd.h>

#include <cstring>
#include <fstream>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "osd/error.hpp"
#include "osd/matio.hpp"

namespace fs = std::filesystem;
using namespace osd;

namespace {

// Builds an SDT1 byte stream field by field, independently of the writer.
struct RawContainer {
  std::vector<std::uint8_t> bytes{'S', 'D', 'T', '1'};
  void u16(std::uint16_t v) { for (int i = 0; i < 2; ++i) bytes.push_back(std::uint8_t(v >> (8 * i))); }
  void u32(std::uint32_t v) { for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i))); }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  void layer_header(const std::string& id, std::uint32_t rows, std::uint32_t cols) {
    u16(static_cast<std::uint16_t>(id.size()));
    bytes.insert(bytes.end(), id.begin(), id.end());
    u32(rows);
    u32(cols);
  }
};

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("osd_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Matio, ZeroLayerLoads) {
  RawContainer raw;
  raw.u32(1);
  raw.layer_header("w", 2, 3);
  for (int i = 0; i < 6; ++i) raw.f32(0.0f);
  const auto set = decode_layer_set(raw.bytes);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set[0].matrix.rows(), 2);
  EXPECT_EQ(set[0].matrix.cols(), 3);
  EXPECT_TRUE(set[0].matrix.isZero(0.0f));
}

TEST(Matio, PreservesLayerOrder) {
  RawContainer raw;
  raw.u32(2);
  raw.layer_header("a", 1, 1);
  raw.f32(1.0f);
  raw.layer_header("b", 1, 2);
  raw.f32(2.0f);
  raw.f32(3.0f);
  const auto set = decode_layer_set(raw.bytes);
  EXPECT_EQ(set.ids(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(set[1].matrix(0, 1), 3.0f);
}

TEST(Matio, PayloadOneFloatShortIsIntegrityErrorNamingLayer) {
  RawContainer raw;
  raw.u32(1);
  raw.layer_header("attn.q", 2, 2);
  for (int i = 0; i < 3; ++i) raw.f32(1.0f);
  try {
    decode_layer_set(raw.bytes);
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("attn.q"), std::string::npos);
  }
}

TEST(Matio, MalformedHeaderIsFormatError) {
  std::vector<std::uint8_t> bad{'S', 'D', 'T', '2', 0, 0, 0, 0};
  EXPECT_THROW(decode_layer_set(bad), FormatError);
  RawContainer dup;
  dup.u32(2);
  dup.layer_header("x", 1, 1);
  dup.f32(1.0f);
  dup.layer_header("x", 1, 1);
  dup.f32(1.0f);
  EXPECT_THROW(decode_layer_set(dup.bytes), FormatError);
}

TEST(Matio, NonFiniteValueIsDataErrorWithIndex) {
  RawContainer raw;
  raw.u32(1);
  raw.layer_header("mlp", 1, 3);
  raw.f32(1.0f);
  raw.f32(1.0f);
  raw.f32(std::numeric_limits<float>::quiet_NaN());
  try {
    decode_layer_set(raw.bytes);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("mlp"), std::string::npos);
    EXPECT_NE(what.find("index 2"), std::string::npos);
  }
}

TEST(Matio, WriterIsCanonical) {
  std::mt19937_64 rng(7);
  RawContainer raw;
  raw.u32(3);
  for (int l = 0; l < 3; ++l) {
    const std::uint32_t rows = 1 + l, cols = 4 - l;
    raw.layer_header("layer." + std::to_string(l), rows, cols);
    std::normal_distribution<float> g;
    for (std::uint32_t i = 0; i < rows * cols; ++i) raw.f32(g(rng));
  }
  const auto path = temp_path("canon.sdt");
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(raw.bytes.data()), std::streamsize(raw.bytes.size()));
  }
  const auto set = load_layer_set(path);
  const auto again = temp_path("canon2.sdt");
  save_layer_set(again, set);
  EXPECT_EQ(encode_layer_set(load_layer_set(again)), raw.bytes);
  fs::remove(path);
  fs::remove(again);
}

TEST(Matio, DeltaOfIdenticalSetsIsZero) {
  std::mt19937_64 rng(1);
  LayerSet a;
  a.add("x", oracle::random_matrix(rng, 4, 5));
  const auto d = delta(a, a);
  EXPECT_TRUE(d[0].matrix.isZero(0.0f));
}

TEST(Matio, DeltaIdentityArithmetic) {
  LayerSet fine, pre;
  DenseMatrix f(2, 2), p(2, 2);
  f << 2, 0, 0, 2;
  p << 1, 0, 0, 1;
  fine.add("w", f);
  pre.add("w", p);
  DenseMatrix want(2, 2);
  want << 1, 0, 0, 1;
  EXPECT_EQ(delta(fine, pre)[0].matrix, want);
}

TEST(Matio, DeltaMatchesElementwiseOracle) {
  std::mt19937_64 rng(11);
  LayerSet fine, pre;
  fine.add("w", oracle::random_matrix(rng, 8, 8));
  pre.add("w", oracle::random_matrix(rng, 8, 8));
  const auto d = delta(fine, pre);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_EQ(d[0].matrix(i, j), fine[0].matrix(i, j) - pre[0].matrix(i, j));
}

TEST(Matio, DeltaPlusBaseReconstructsExactly) {
  // Small integers and halves are exactly representable, so no rounding.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(-64, 64);
  DenseMatrix a(6, 7), b(6, 7);
  for (int i = 0; i < a.size(); ++i) {
    a.data()[i] = u(rng) * 0.5f;
    b.data()[i] = u(rng) * 0.25f;
  }
  LayerSet sa, sb;
  sa.add("w", a);
  sb.add("w", b);
  EXPECT_EQ(add(delta(sa, sb), sb)[0].matrix, a);
}

TEST(Matio, DeltaMismatchListsOffendingLayers) {
  LayerSet a, b;
  a.add("q", DenseMatrix::Zero(2, 2));
  a.add("k", DenseMatrix::Zero(2, 2));
  b.add("q", DenseMatrix::Zero(2, 3));
  b.add("v", DenseMatrix::Zero(2, 2));
  try {
    delta(a, b);
    FAIL();
  } catch (const StructuralError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("'q' shape"), std::string::npos);
    EXPECT_NE(what.find("'k' vs 'v'"), std::string::npos);
  }
}

TEST(Matio, ManifestResolvesRelativePaths) {
  const auto dir = temp_path("manifest_dir");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "m.json");
    out << R"({"pretrained": "pre.sdt", "delta": "/abs/dw.sdt"})";
  }
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.path("pretrained"), dir / "pre.sdt");
  EXPECT_EQ(m.path("delta"), fs::path("/abs/dw.sdt"));
  EXPECT_FALSE(m.has("gradient"));
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"weights": "w.sdt"})";
  }
  EXPECT_THROW(load_manifest(dir / "bad.json"), FormatError);
  fs::remove_all(dir);
}
