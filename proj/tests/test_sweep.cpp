// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "oracles.hpp"
#include "osd/compress.hpp"
#include "osd/sweep.hpp"
#include "osd/synth.hpp"

using namespace osd;
namespace fs = std::filesystem;

namespace {

// Fails on the calls listed in `failing`, scores 1 / call otherwise.
class FlakyHook : public EvaluationHook {
 public:
  explicit FlakyHook(std::set<int> failing) : failing_(std::move(failing)) {}
  double score(const LayerSet&) const override {
    const int call = ++calls_;
    if (failing_.count(call)) throw EvaluationError("flaky", call);
    return 1.0 / call;
  }
  mutable int calls_ = 0;

 private:
  std::set<int> failing_;
};

LayerSet single(const DenseMatrix& m) {
  LayerSet s;
  s.add("w", m);
  return s;
}

SynthModel small_suite(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.rows = 96;
  cfg.cols = 80;
  cfg.true_rank = 6;
  cfg.layers = 2;
  return synthesize(cfg);
}

}  // namespace

TEST(ProxyError, WeightedL1) {
  DenseMatrix a(1, 3), b(1, 3), z(1, 3);
  a << 1, 2, 3;
  b << 1, 0, 5;
  z << 4, 0.5, 2;
  const std::vector<ImportanceMap> maps{ImportanceMap(z)};
  EXPECT_DOUBLE_EQ(proxy_error(single(a), single(b), maps), 0.5 * 2 + 2 * 2);
  EXPECT_DOUBLE_EQ(proxy_error(single(a), single(b), {}), 4.0);
  EXPECT_DOUBLE_EQ(ProxyHook(single(a), maps).score(single(b)), -5.0);
}

TEST(ProxyError, ShapeMismatch) {
  EXPECT_THROW(proxy_error(single(DenseMatrix::Zero(2, 2)), single(DenseMatrix::Zero(2, 3)), {}), StructuralError);
}

TEST(ParseScore, AcceptsOneDecimal) {
  EXPECT_DOUBLE_EQ(parse_score("0.75\n"), 0.75);
  EXPECT_DOUBLE_EQ(parse_score("  -12.5e-1  "), -1.25);
  EXPECT_THROW(parse_score(""), EvaluationError);
  EXPECT_THROW(parse_score("accuracy 0.7"), EvaluationError);
  EXPECT_THROW(parse_score("0.7 0.8"), EvaluationError);
}

TEST(Sweep, SingleCandidate) {
  const auto model = small_suite(1);
  const auto z = model.importance_maps();
  const ProxyHook hook(model.delta, z);
  const auto res = sweep_c(model.delta, z, 1, 1, hook);
  ASSERT_EQ(res.per_c.size(), 1u);
  EXPECT_EQ(res.c_star, 1u);
  EXPECT_TRUE(res.best().ok);
}

TEST(Sweep, ScoresAreNegatedProxyOfEachCandidate) {
  const auto model = small_suite(2);
  const auto z = model.importance_maps();
  const ProxyHook hook(model.delta, z);
  const auto res = sweep_c(model.delta, z, 1, 4, hook);
  ASSERT_EQ(res.per_c.size(), 4u);
  double best = -std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (const auto& cand : res.per_c) {
    ASSERT_TRUE(cand.ok) << cand.error;
    const auto again = compress_layers(Method::Osd, model.delta, z, 1, cand.c);
    LayerSet recon;
    for (const auto& l : again) recon.add(l.id, l.reconstruct());
    EXPECT_EQ(cand.score, -proxy_error(model.delta, recon, z));
    std::uint64_t bits = 0;
    for (const auto& l : cand.layers) {
      EXPECT_TRUE(l.within_budget());
      bits += l.payload_bits().total_bits();
    }
    EXPECT_EQ(bits, cand.payload_bits);
    if (cand.score > best) {
      best = cand.score;
      arg = cand.c;
    }
  }
  EXPECT_EQ(res.c_star, arg);
}

TEST(Sweep, TiesGoToSmallerC) {
  class Constant : public EvaluationHook {
   public:
    double score(const LayerSet&) const override { return 3.0; }
  } hook;
  const auto model = small_suite(3);
  EXPECT_EQ(sweep_c(model.delta, {}, 1, 3, hook).c_star, 1u);
}

TEST(Sweep, ExactRankPlusTwoPrefersTwo) {
  // Three components with disjoint 4-entry supports: at c = 2 every
  // nonzero factor entry fits the rank-1 budget.
  const int n = 64;
  DenseMatrix delta = DenseMatrix::Zero(n, n);
  const float sigma[3] = {3.0f, 2.0f, 1.5f};
  for (int j = 0; j < 3; ++j)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) delta(8 * j + a, 5 + 9 * j + b) = sigma[j] * 0.25f * ((a + b) % 2 ? -1.0f : 1.0f);
  const LayerSet deltas = single(delta);
  const std::vector<ImportanceMap> ones{ones_importance(n, n)};
  const auto res = sweep_c(deltas, ones, 1, 3, ProxyHook(deltas, ones));
  const double e1 = -res.per_c[0].score, e2 = -res.per_c[1].score, e3 = -res.per_c[2].score;
  const double scale = delta.cwiseAbs().sum();
  EXPECT_LE(e2, 1e-5 * scale);
  EXPECT_GT(e1, 0.1 * scale);
  EXPECT_LE(e2, e3 + 1e-5 * scale);
}

TEST(Sweep, HookFailureIsRecordedPerCandidate) {
  const auto model = small_suite(4);
  FlakyHook hook({2});
  const auto res = sweep_c(model.delta, {}, 1, 3, hook);
  ASSERT_EQ(res.per_c.size(), 3u);
  EXPECT_TRUE(res.per_c[0].ok);
  EXPECT_FALSE(res.per_c[1].ok);
  EXPECT_NE(res.per_c[1].error.find("flaky"), std::string::npos);
  EXPECT_TRUE(res.per_c[2].ok);
  EXPECT_EQ(res.c_star, 1u);
}

TEST(Sweep, AllFailingRaisesWithPartialResult) {
  const auto model = small_suite(5);
  FlakyHook hook({1, 2, 3});
  try {
    sweep_c(model.delta, {}, 1, 3, hook);
    FAIL();
  } catch (const SweepFailed& e) {
    EXPECT_EQ(e.c, 1);
    EXPECT_EQ(e.partial.per_c.size(), 3u);
  }
}

TEST(Sweep, CompressionFailureIsRecorded) {
  // c = 3 would need rank 4 on a 3 x 3 layer.
  const LayerSet deltas = single(DenseMatrix::Identity(3, 3));
  const auto res = sweep_c(deltas, {}, 1, 3, ProxyHook(deltas, {}));
  EXPECT_TRUE(res.per_c[0].ok);
  EXPECT_TRUE(res.per_c[1].ok);
  EXPECT_FALSE(res.per_c[2].ok);
}

TEST(Sweep, ArgumentChecks) {
  const LayerSet deltas = single(DenseMatrix::Identity(3, 3));
  EXPECT_THROW(sweep_c(deltas, {}, 1, 0, ProxyHook(deltas, {})), ArgumentError);
  EXPECT_THROW(sweep_c(deltas, {}, 0, 2, ProxyHook(deltas, {})), ArgumentError);
}

TEST(Sweep, BellShapedCurveOnPlantedSuite) {
  int unimodal = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    SynthConfig cfg;
    cfg.seed = 500 + seed;
    cfg.rows = 128;
    cfg.cols = 128;
    const auto model = synthesize(cfg);
    const auto z = model.importance_maps();
    const auto res = sweep_c(model.delta, z, 1, 8, ProxyHook(model.delta, z));
    std::vector<double> s;
    for (const auto& cand : res.per_c) s.push_back(cand.score);
    const auto peak = std::max_element(s.begin(), s.end()) - s.begin();
    const double tol = 0.01 * (s[peak] - *std::min_element(s.begin(), s.end()));
    bool ok = peak > 0 && peak + 1 < static_cast<long>(s.size());
    for (long i = 1; i <= peak; ++i) ok = ok && s[i] >= s[i - 1] - tol;
    for (std::size_t i = peak + 1; i < s.size(); ++i) ok = ok && s[i] <= s[i - 1] + tol;
    unimodal += ok;
  }
  EXPECT_GE(unimodal, seeds * 6 / 10);
}

TEST(ExternalHook, SubstitutesQuotedPath) {
  const ExternalHook hook("score {} --again {}");
  EXPECT_EQ(hook.command_for("/tmp/a b.sdt"), "score '/tmp/a b.sdt' --again '/tmp/a b.sdt'");
  EXPECT_EQ(ExternalHook("score").command_for("/tmp/x"), "score '/tmp/x'");
}

TEST(ExternalHook, ReadsScoreAndSeesCandidateFile) {
  const LayerSet deltas = single(DenseMatrix::Ones(3, 4));
  const auto bytes = encode_layer_set(deltas).size();
  EXPECT_DOUBLE_EQ(ExternalHook("wc -c < {}").score(deltas), static_cast<double>(bytes));
  EXPECT_DOUBLE_EQ(ExternalHook("echo 0.5 #").score(deltas), 0.5);
}

TEST(ExternalHook, AddsPretrainedWeights) {
  const LayerSet deltas = single(DenseMatrix::Ones(2, 2));
  const LayerSet pre = single(DenseMatrix::Constant(2, 2, 2.0f));
  const fs::path dir = fs::temp_directory_path() / "osd_hook_test";
  fs::create_directories(dir);
  const fs::path copy = dir / "seen.sdt";
  ExternalHook hook("cp {} '" + copy.string() + "' && echo 1", pre, dir);
  EXPECT_EQ(hook.score(deltas), 1.0);
  const auto seen = load_layer_set(copy);
  EXPECT_TRUE((seen.at("w").matrix.array() == 3.0f).all());
  fs::remove_all(dir);
}

TEST(ExternalHook, NonzeroExitIsEvaluationError) {
  const LayerSet deltas = single(DenseMatrix::Ones(2, 2));
  EXPECT_THROW(ExternalHook("echo 1; exit 3 #").score(deltas), EvaluationError);
  EXPECT_THROW(ExternalHook("echo not-a-number #").score(deltas), EvaluationError);
}

TEST(ExternalHook, SweepWithFailingHookRecordsEveryC) {
  const auto model = small_suite(6);
  try {
    sweep_c(model.delta, {}, 1, 2, ExternalHook("false"));
    FAIL();
  } catch (const SweepFailed& e) {
    ASSERT_EQ(e.partial.per_c.size(), 2u);
    for (const auto& cand : e.partial.per_c) EXPECT_FALSE(cand.ok);
  }
}
