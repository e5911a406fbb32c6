#include <gtest/gtest.h>

#include "aqe/model.hpp"
#include "aqe/random.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace aqe;
using testing_support::ref_loss;

namespace {

struct Problem {
  MLPModel m;
  std::vector<double> x;
  std::vector<MaybeConcentrations> t;
};

Problem random_problem(Rng& rng) {
  const std::size_t in = 1 + rng.index(6), n1 = 1 + rng.index(6), n2 = 1 + rng.index(5), rows = 1 + rng.index(6);
  Problem p{MLPModel(in, n1, n2), {}, {}};
  for (auto& v : p.m.params()) v = rng.uniform(-1, 1);
  for (std::size_t o = 0; o < 4; ++o) p.m.b3(o) = rng.uniform(0.5, 3);
  for (std::size_t i = 0; i < rows * in; ++i) p.x.push_back(rng.normal());
  for (std::size_t r = 0; r < rows; ++r) {
    MaybeConcentrations c;
    for (auto& v : c)
      if (rng.uniform() < 0.7) v = rng.uniform(0, 60);
    if (!any_present(c)) c[0] = 5.0;
    p.t.push_back(c);
  }
  return p;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<DataRow> toy_rows(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DataRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    DataRow r;
    const double a = rng.uniform(0, 10), b = rng.uniform(-5, 5);
    r.features.values = {a, b, rng.uniform() < 0.1 ? kNaN : a * b};
    r.features.na = {0, 0, static_cast<std::uint8_t>(std::isnan(r.features.values[2]))};
    r.targets[0] = 5 + 3 * a;
    r.targets[1] = std::max(0.0, 60 - 4 * a + b);
    if (i % 3) r.targets[2] = 10 + std::abs(b);
    r.targets[3] = 20 + a;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST(Model, ParameterLayout) {
  MLPModel m(3, 4, 2);
  EXPECT_EQ(m.params().size(), 3u * 4 + 4 + 4 * 2 + 2 + 4 * 2 + 4);
  EXPECT_EQ(m.off_b3() + 4, m.params().size());
  EXPECT_THROW(MLPModel(0, 1, 1), InvalidParameter);
}

TEST(Model, ForwardMatchesHandComputation) {
  MLPModel m(2, 2, 1);
  m.w1(0, 0) = 1, m.w1(0, 1) = -1, m.b1(0) = 0.5;
  m.w1(1, 0) = -2, m.w1(1, 1) = 0, m.b1(1) = 0;
  m.w2(0, 0) = 2, m.w2(0, 1) = 3, m.b2(0) = -1;
  for (std::size_t o = 0; o < 4; ++o) m.w3(o, 0) = double(o) - 1, m.b3(o) = 10;
  m.norm_mean() = {1, 0};
  m.norm_std() = {2, 1};
  // x̂ = (1.5, 1); h1 = (1, 0); h2 = 1.
  const std::vector<double> raw{4, 1};
  const auto out = forward(m, raw);
  EXPECT_DOUBLE_EQ(out[0], 9);
  EXPECT_DOUBLE_EQ(out[3], 12);
  m.b3(0) = -20;
  EXPECT_DOUBLE_EQ(predict(m, raw)[0], 0.0);
  // NA normalizes to the mean.
  const std::vector<double> na{kNaN, 0};
  EXPECT_EQ(forward(m, na), forward(m, std::vector<double>{1, 0}));
  EXPECT_THROW(forward(m, std::vector<double>{1}), DimensionMismatch);
}

TEST(Loss, HandComputedMsle) {
  std::vector<RawOutputs> out{{std::exp(1.0) - 1, -5, 0, 0}};
  std::vector<MaybeConcentrations> t(1);
  t[0][0] = 0.0;
  t[0][1] = std::exp(2.0) - 1;
  // (1-0)² and (0-2)², mean 2.5.
  EXPECT_NEAR(msle_loss(out, t), 2.5, 1e-12);
  EXPECT_THROW(msle_loss(out, std::vector<MaybeConcentrations>(1)), UndefinedInput);
}

TEST(Gradient, MatchesCentralDifferencesOnRandomModels) {
  Rng rng(2024);
  int checked = 0;
  double worst = 0;
  for (int k = 0; k < 150; ++k) {
    auto p = random_problem(rng);
    std::vector<double> g(p.m.params().size());
    const double loss = loss_and_gradient(p.m, Batch{p.x, p.t}, g);
    EXPECT_NEAR(loss, ref_loss(p.m, p.x, p.t), 1e-12 * (1 + loss));
    std::vector<double> fd(g.size());
    const double h = 1e-6;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double keep = p.m.params()[i];
      p.m.params()[i] = keep + h;
      const double up = ref_loss(p.m, p.x, p.t);
      p.m.params()[i] = keep - h;
      const double down = ref_loss(p.m, p.x, p.t);
      p.m.params()[i] = keep;
      fd[i] = (up - down) / (2 * h);
    }
    std::vector<double> diff(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) diff[i] = g[i] - fd[i];
    const double scale = std::max(norm(g), norm(fd));
    if (scale < 1e-12) continue;
    const double rel = norm(diff) / scale;
    worst = std::max(worst, rel);
    ++checked;
  }
  EXPECT_GE(checked, 100);
  EXPECT_LE(worst, 1e-4);
}

TEST(Gradient, ClampedOutputsPassNoGradient) {
  MLPModel m(1, 1, 1);
  m.w1(0, 0) = 1;
  m.w2(0, 0) = 1;
  for (std::size_t o = 0; o < 4; ++o) m.w3(o, 0) = 1, m.b3(o) = -10;
  std::vector<double> x{1.0};
  std::vector<MaybeConcentrations> t(1);
  t[0][0] = 20;
  std::vector<double> g(m.params().size());
  const double loss = loss_and_gradient(m, Batch{x, t}, g);
  EXPECT_NEAR(loss, std::pow(std::log1p(20.0), 2), 1e-12);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, AllNaRowsChangeNothing) {
  Rng rng(77);
  for (int k = 0; k < 20; ++k) {
    auto p = random_problem(rng);
    std::vector<double> g(p.m.params().size());
    const double loss = loss_and_gradient(p.m, Batch{p.x, p.t}, g);
    auto x = p.x;
    auto t = p.t;
    for (int extra = 0; extra < 5; ++extra) {
      for (std::size_t i = 0; i < p.m.input_dim(); ++i) x.push_back(rng.normal(0, 3));
      t.emplace_back();
    }
    std::vector<double> g2(g.size());
    EXPECT_EQ(loss_and_gradient(p.m, Batch{x, t}, g2), loss);
    EXPECT_EQ(g2, g);
  }
}

TEST(Gradient, RejectsBadShapes) {
  MLPModel m(2, 2, 2);
  std::vector<double> x{1, 2};
  std::vector<MaybeConcentrations> t(1);
  std::vector<double> g(m.params().size());
  EXPECT_THROW(loss_and_gradient(m, Batch{x, t}, g), UndefinedInput);
  t[0][0] = 1;
  std::vector<double> small(3);
  EXPECT_THROW(loss_and_gradient(m, Batch{x, t}, small), DimensionMismatch);
  std::vector<double> x3{1, 2, 3};
  EXPECT_THROW(loss_and_gradient(m, Batch{x3, t}, g), DimensionMismatch);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0, 0.5};
  std::vector<double> g{0.3, -4.0, 0.0};
  AdamState s(3);
  adam_step(p, g, s, 0.01);
  // Bias-corrected first step: m̂ = g, v̂ = g², update = lr·g/(|g|+ε).
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(s.step, 1u);
  // Second step, by hand.
  std::vector<double> g2{0.1, 0, 0};
  adam_step(p, g2, s, 0.01);
  const double m = 0.9 * 0.03 + 0.1 * 0.1, v = 0.999 * 0.09 * 0.001 + 0.001 * 0.01;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-14);
  std::vector<double> bad(2);
  EXPECT_THROW(adam_step(p, bad, s, 0.01), DimensionMismatch);
}

TEST(Train, LowersLossAndIsDeterministic) {
  const auto rows = toy_rows(600, 3);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.01;
  cfg.n1 = 16;
  cfg.n2 = 8;
  const auto a = train(rows, cfg, {"a", "b", "ab"});
  ASSERT_EQ(a.loss_trace.size(), 40u);
  EXPECT_LT(a.loss_trace.back(), 0.5 * a.loss_trace.front());
  const auto b = train(rows, cfg, {"a", "b", "ab"});
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  cfg.seed = 8;
  EXPECT_NE(model_fingerprint(train(rows, cfg).model), model_fingerprint(a.model));
}

TEST(Train, InitialOutputBiasIsLogMean) {
  const auto rows = toy_rows(50, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto r = train(rows, cfg);
  double s = 0;
  int n = 0;
  for (const auto& row : rows)
    if (row.targets[2]) s += std::log1p(*row.targets[2]), ++n;
  EXPECT_NEAR(r.model.b3(2), std::expm1(s / n), 1e-12);
  for (std::size_t u = 0; u < r.model.n1(); ++u) EXPECT_EQ(r.model.b1(u), 0.0);
}

TEST(Train, NormalizationIgnoresNa) {
  auto rows = toy_rows(100, 5);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto m = train(rows, cfg).model;
  double s = 0;
  int n = 0;
  for (const auto& r : rows)
    if (!std::isnan(r.features.values[2])) s += r.features.values[2], ++n;
  EXPECT_NEAR(m.norm_mean()[2], s / n, 1e-9);
}

TEST(Train, RejectsBadInput) {
  TrainConfig cfg;
  EXPECT_THROW(train(std::vector<DataRow>{}, cfg), InvalidParameter);
  cfg.learning_rate = 0;
  EXPECT_THROW(train(toy_rows(10, 1), cfg), InvalidParameter);
  cfg = TrainConfig{};
  auto rows = toy_rows(10, 1);
  rows[3].features.values.pop_back();
  rows[3].features.na.pop_back();
  EXPECT_THROW(train(rows, cfg), DimensionMismatch);
}

TEST(Transfer, OnlyOutputLayerChanges) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 64;
  cfg.n1 = 8;
  cfg.n2 = 4;
  const auto global = train(toy_rows(300, 6), cfg).model;
  auto regional_rows = toy_rows(80, 9);
  for (auto& r : regional_rows) *r.targets[0] *= 1.5;
  cfg.epochs = 30;
  const auto t = transfer_fit(global, regional_rows, cfg).model;
  EXPECT_EQ(frozen_fingerprint(t), frozen_fingerprint(global));
  const auto gh = global.hidden_params(), th = t.hidden_params();
  EXPECT_TRUE(std::equal(gh.begin(), gh.end(), th.begin(), th.end()));
  EXPECT_EQ(t.norm_mean(), global.norm_mean());
  EXPECT_NE(model_fingerprint(t), model_fingerprint(global));

  // The output layer moves toward the regional data.
  std::vector<RawOutputs> before, after;
  std::vector<MaybeConcentrations> targets;
  for (const auto& r : regional_rows) {
    before.push_back(forward(global, r.features.values));
    after.push_back(forward(t, r.features.values));
    targets.push_back(r.targets);
  }
  EXPECT_LT(msle_loss(after, targets), msle_loss(before, targets));
}

TEST(Transfer, ZeroEpochsReturnsGlobal) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.n1 = 4;
  cfg.n2 = 4;
  const auto global = train(toy_rows(50, 1), cfg).model;
  cfg.epochs = 0;
  EXPECT_EQ(transfer_fit(global, toy_rows(20, 2), cfg).model, global);
}

TEST(Transfer, LayoutMismatchRejected) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.n1 = 4;
  cfg.n2 = 4;
  const auto global = train(toy_rows(50, 1), cfg, {"a", "b", "c"}).model;
  EXPECT_THROW(transfer_fit(global, toy_rows(20, 2), cfg, {"a", "b", "x"}), DimensionMismatch);
}

TEST(Persistence, RoundTripIsExact) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.n1 = 5;
  cfg.n2 = 3;
  auto m = train(toy_rows(40, 1), cfg, {"a", "b", "ab"}, FeaturePreset::Reduced).model;
  const auto bytes = serialize_model(m);
  EXPECT_EQ(bytes.substr(0, 8), std::string("AQEMLP\0\0", 8));
  const auto back = deserialize_model(bytes);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.preset, FeaturePreset::Reduced);
  testing_support::TempDir dir("model");
  save_model(dir / "m.bin", m);
  EXPECT_EQ(load_model(dir / "m.bin"), m);
  EXPECT_EQ(model_fingerprint(load_model(dir / "m.bin")), model_fingerprint(m));
  EXPECT_THROW(load_model(dir / "missing.bin"), NotFound);
}

TEST(Persistence, CorruptFilesRejected) {
  MLPModel m(2, 2, 2);
  const auto bytes = serialize_model(m);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_model(magic), FormatError);
  auto version = bytes;
  version[8] = 2;
  EXPECT_THROW(deserialize_model(version), FormatError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_model(bytes + "x"), FormatError);
  EXPECT_THROW(deserialize_model(""), FormatError);
}
