#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rnnif/evaluation.hpp"
#include "rnnif/training.hpp"

using namespace rnnif;

TEST(Metrics, PerfectPrediction) {
  MetricReport r = metrics({50, 70}, {50, 70});
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.mape, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.n, 2u);
}

TEST(Metrics, HandComputedPair) {
  MetricReport r = metrics({50, 70}, {55, 65});
  EXPECT_NEAR(r.mae, 5.0, 1e-12);
  EXPECT_NEAR(r.rmse, 5.0, 1e-12);
  EXPECT_NEAR(r.mape, 8.5714, 1e-4);
}

TEST(Metrics, HandComputedSingle) {
  MetricReport r = metrics({10}, {20});
  EXPECT_NEAR(r.mae, 10.0, 1e-12);
  EXPECT_NEAR(r.rmse, 10.0, 1e-12);
  EXPECT_NEAR(r.mape, 100.0, 1e-12);
}

TEST(Metrics, PermutationInvariant) {
  MetricReport a = metrics({50, 70, 30}, {55, 65, 33});
  MetricReport b = metrics({30, 50, 70}, {33, 55, 65});
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.rmse, b.rmse);
  EXPECT_NEAR(a.mape, b.mape, 1e-12);
}

TEST(Metrics, ScalingBehaviour) {
  const std::vector<double> truth{40, 55, 62}, pred{42, 50, 66};
  MetricReport base = metrics(truth, pred);
  std::vector<double> truth3, pred3;
  for (double v : truth) truth3.push_back(3.0 * v);
  for (double v : pred) pred3.push_back(3.0 * v);
  MetricReport scaled = metrics(truth3, pred3);
  EXPECT_NEAR(scaled.mae, 3.0 * base.mae, 1e-12);
  EXPECT_NEAR(scaled.rmse, 3.0 * base.rmse, 1e-12);
  EXPECT_NEAR(scaled.mape, base.mape, 1e-12);
}

TEST(Metrics, RmseDominatesMae) {
  Rng rng(4);
  std::vector<double> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(30 + 40 * rng.uniform01());
    pred.push_back(30 + 40 * rng.uniform01());
  }
  MetricReport r = metrics(truth, pred);
  EXPECT_GE(r.rmse, r.mae);
  EXPECT_GE(r.mae, 0.0);
}

TEST(Metrics, ScopeRestrictsAndNeverGrows) {
  const std::vector<double> truth{50, 70, 90}, pred{55, 65, 80};
  std::vector<std::uint8_t> scope{1, 0, 1};
  MetricReport scoped = metrics(truth, pred, &scope);
  EXPECT_EQ(scoped.n, 2u);
  EXPECT_NEAR(scoped.mae, 7.5, 1e-12);
  std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_THROW(metrics(truth, pred, &none), ValueError);
}

TEST(Metrics, ZeroTruthFlagsMape) {
  MetricReport r = metrics({0, 50}, {5, 55});
  EXPECT_FALSE(r.mape_defined);
  EXPECT_TRUE(std::isnan(r.mape));
  EXPECT_NEAR(r.mae, 5.0, 1e-12);  // MAE and RMSE still computed
  EXPECT_NEAR(r.rmse, 5.0, 1e-12);
}

TEST(Persistence, RepeatsLastObservedValue) {
  WindowedDataset ds;
  ds.window = 3;
  ds.stations = 1;
  SequenceSample s;
  s.input = Matrix::from_rows({{0.2}, {0.4}, {0.6}});
  s.mask = Matrix::from_rows({{1}, {1}, {0}});
  s.target = Matrix(1, 1, 0.7);
  ds.samples.push_back(s);
  MetricReport r = persistence_metrics(ds, Normalizer{100.0});
  // Last observed value is 0.4 (the final row is masked out).
  EXPECT_NEAR(r.mae, (0.7 - 0.4) * 100.0, 1e-12);
}

namespace {

struct ImputationFixture {
  WindowedDataset pristine, corrupted;
  Normalizer norm;
};

ImputationFixture make_fixture(std::uint64_t seed) {
  SynthProfile profile;
  SpeedMatrix sm = synth(4, 8, seed, profile);
  ImputationFixture fx;
  fx.norm = fit_normalizer(sm);
  normalize(sm, fx.norm);
  fx.pristine = make_windows(sm, 8);
  fx.corrupted = corrupt_random(fx.pristine, 0.1, seed + 1);
  return fx;
}

}  // namespace

TEST(ImputationMetrics, RequiresImputingModelAndNonEmptyScope) {
  ImputationFixture fx = make_fixture(5);
  Rng rng(5);
  Model plain = Model::init(make_model_spec("lstm", 4, 4), rng);
  EXPECT_THROW(imputation_metrics(plain, fx.corrupted, fx.pristine, fx.norm), ConfigError);

  Model imputing = Model::init(make_model_spec("bdlstmi", 4, 4), rng);
  EXPECT_THROW(imputation_metrics(imputing, fx.pristine, fx.pristine, fx.norm), ValueError);
}

TEST(ImputationMetrics, UntrainedModelScoresFiniteAndReproducible) {
  ImputationFixture fx = make_fixture(6);
  Rng rng(6);
  Model model = Model::init(make_model_spec("bdlstmi", 4, 4), rng);
  MetricReport a = imputation_metrics(model, fx.corrupted, fx.pristine, fx.norm);
  MetricReport b = imputation_metrics(model, fx.corrupted, fx.pristine, fx.norm);
  EXPECT_TRUE(std::isfinite(a.mae));
  EXPECT_GT(a.n, 0u);
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.rmse, b.rmse);
}

TEST(ImputationMetrics, TrainingImprovesImputation) {
  ImputationFixture fx = make_fixture(7);
  Rng rng(7);
  Model model = Model::init(make_model_spec("bdlstmi", 4, 4, Combine::average, 0.05), rng);
  MetricReport untrained = imputation_metrics(model, fx.corrupted, fx.pristine, fx.norm);

  DatasetSplits splits = split_dataset(fx.corrupted, 7);
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.seed = 7;
  TrainResult trained = train(std::move(model), splits.train, splits.val, cfg);
  MetricReport after = imputation_metrics(trained.model, fx.corrupted, fx.pristine, fx.norm);
  EXPECT_LT(after.mae, untrained.mae);
}
