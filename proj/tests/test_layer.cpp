#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rnnif/layer.hpp"

using namespace rnnif;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 0.6) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform_sym(scale);
  return m;
}

std::vector<Matrix> random_sequence(std::size_t T, std::size_t b, std::size_t d, Rng& rng,
                                    double scale = 0.6) {
  std::vector<Matrix> seq(T);
  for (auto& m : seq) m = random_matrix(b, d, rng, scale);
  return seq;
}

LayerDescriptor uni_lstm(std::size_t in, std::size_t hidden) {
  return LayerDescriptor{CellKind::lstm, Direction::uni, in, hidden, Combine::average};
}

LayerDescriptor bi_lstm(std::size_t in, std::size_t hidden, Combine c = Combine::average) {
  return LayerDescriptor{CellKind::lstm, Direction::bi, in, hidden, c};
}

}  // namespace

TEST(RunUni, SingleStepReducesToCellStep) {
  Rng rng(1);
  LayerDescriptor desc = uni_lstm(3, 2);
  LstmIParams p = LstmIParams::init(3, 2, false, rng);
  std::vector<Matrix> inputs = random_sequence(1, 2, 3, rng);
  LayerOutput out = run_uni(desc, p, inputs, nullptr, false);
  ASSERT_EQ(out.sequence.size(), 1u);
  CellState step = lstm_step(p.base, inputs[0], CellState::zeros(2, 2));
  EXPECT_EQ(out.sequence[0], step.h);
}

TEST(RunUni, ZeroParamsZeroOutputs) {
  Rng rng(2);
  LayerDescriptor desc = uni_lstm(2, 3);
  LstmIParams p = LstmIParams::zeros(2, 3, false);
  std::vector<Matrix> inputs = random_sequence(4, 2, 2, rng);
  LayerOutput out = run_uni(desc, p, inputs, nullptr, false);
  ASSERT_EQ(out.sequence.size(), 4u);
  for (const Matrix& h : out.sequence)
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h.data()[i], 0.0);
}

TEST(RunUni, ThreeStepsMatchManualUnroll) {
  Rng rng(3);
  LayerDescriptor desc = uni_lstm(1, 1);
  LstmIParams p = LstmIParams::init(1, 1, false, rng);
  std::vector<Matrix> inputs = random_sequence(3, 1, 1, rng);
  LayerOutput out = run_uni(desc, p, inputs, nullptr, false);

  CellState st = CellState::zeros(1, 1);
  for (int t = 0; t < 3; ++t) {
    st = lstm_step(p.base, inputs[t], st);
    EXPECT_EQ(out.sequence[t], st.h);
  }
}

TEST(RunUni, MaskConfigurationErrors) {
  Rng rng(4);
  LstmIParams plain = LstmIParams::init(2, 2, false, rng);
  LstmIParams imputing = LstmIParams::init(2, 2, true, rng);
  std::vector<Matrix> inputs = random_sequence(2, 1, 2, rng);
  std::vector<Matrix> masks(2, Matrix(1, 2, 1.0));
  EXPECT_THROW(run_uni(uni_lstm(2, 2), plain, inputs, &masks, false), ConfigError);
  LayerDescriptor dimp{CellKind::lstm_i, Direction::uni, 2, 2, Combine::average};
  EXPECT_THROW(run_uni(dimp, imputing, inputs, nullptr, false), ConfigError);
}

TEST(Combine, AverageSumConcatFixtures) {
  Matrix f(1, 2, 0.2), b(1, 2, 0.4);
  Matrix avg = combine_outputs(f, b, Combine::average);
  EXPECT_EQ(avg(0, 0), (0.2 + 0.4) * 0.5);  // exactly (fwd + bwd) / 2
  EXPECT_DOUBLE_EQ(avg(0, 1), 0.3);
  Matrix sum = combine_outputs(f, b, Combine::sum);
  EXPECT_EQ(sum(0, 0), 0.2 + 0.4);
  Matrix cat = combine_outputs(f, b, Combine::concat);
  ASSERT_EQ(cat.cols(), 4u);
  EXPECT_EQ(cat(0, 0), 0.2);
  EXPECT_EQ(cat(0, 2), 0.4);
}

TEST(RunBi, ZeroBackwardBranchHalvesForwardOutput) {
  Rng rng(5);
  LayerDescriptor desc = bi_lstm(2, 3);
  LstmIParams fwd = LstmIParams::init(2, 3, false, rng);
  LstmIParams bwd = LstmIParams::zeros(2, 3, false);
  std::vector<Matrix> inputs = random_sequence(4, 2, 2, rng);
  LayerOutput bi = run_bi(desc, fwd, bwd, inputs, nullptr, false);
  LayerOutput uni = run_uni(uni_lstm(2, 3), fwd, inputs, nullptr, false);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < bi.sequence[t].size(); ++i)
      EXPECT_DOUBLE_EQ(bi.sequence[t].data()[i], 0.5 * uni.sequence[t].data()[i]);
  }
}

TEST(RunBi, PalindromeSymmetryWithSharedParams) {
  Rng rng(6);
  const std::size_t T = 5;
  LayerDescriptor desc = bi_lstm(2, 3);
  LstmIParams shared = LstmIParams::init(2, 3, false, rng);
  std::vector<Matrix> inputs(T);
  for (std::size_t t = 0; t <= T / 2; ++t) {
    inputs[t] = random_matrix(2, 2, rng);
    inputs[T - 1 - t] = inputs[t];
  }
  LayerOutput out = run_bi(desc, shared, shared, inputs, nullptr, false);
  for (std::size_t t = 0; t < T; ++t) EXPECT_EQ(out.sequence[t], out.sequence[T - 1 - t]);
}

TEST(RunBi, SequenceLengthAlwaysT) {
  Rng rng(7);
  LayerDescriptor desc = bi_lstm(2, 2, Combine::concat);
  LstmIParams fwd = LstmIParams::init(2, 2, false, rng);
  LstmIParams bwd = LstmIParams::init(2, 2, false, rng);
  std::vector<Matrix> inputs = random_sequence(7, 3, 2, rng);
  LayerOutput out = run_bi(desc, fwd, bwd, inputs, nullptr, false);
  EXPECT_EQ(out.sequence.size(), 7u);
  EXPECT_EQ(out.sequence[0].cols(), desc.output_dim());
  EXPECT_EQ(desc.output_dim(), 4u);
}

TEST(RunBi, ImputingLayerExposesBothInferredSlabs) {
  Rng rng(8);
  LayerDescriptor desc{CellKind::lstm_i, Direction::bi, 2, 3, Combine::average};
  LstmIParams fwd = LstmIParams::init(2, 3, true, rng);
  LstmIParams bwd = LstmIParams::init(2, 3, true, rng);
  std::vector<Matrix> inputs = random_sequence(4, 2, 2, rng, 0.4);
  for (auto& x : inputs)
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = std::abs(x.data()[i]);
  std::vector<Matrix> masks(4, Matrix(2, 2, 1.0));
  masks[1](0, 0) = 0.0;
  inputs[1](0, 0) = 0.0;
  LayerOutput out = run_bi(desc, fwd, bwd, inputs, &masks, false);
  ASSERT_EQ(out.fwd_inferred.size(), 4u);
  ASSERT_EQ(out.bwd_inferred.size(), 4u);
  // Each missing slot is imputed twice, once per direction, and the two
  // inferred values come from different parameter sets.
  EXPECT_NE(out.fwd_inferred[1](0, 0), out.bwd_inferred[1](0, 0));
}

TEST(LayerBackward, RequiresTrainingTapes) {
  Rng rng(9);
  LayerDescriptor desc = uni_lstm(2, 2);
  LstmIParams p = LstmIParams::init(2, 2, false, rng);
  std::vector<Matrix> inputs = random_sequence(3, 1, 2, rng);
  LayerOutput out = run_uni(desc, p, inputs, nullptr, /*training=*/false);
  LstmIParams grads = LstmIParams::zeros(2, 2, false);
  std::vector<Matrix> grad_seq(3, Matrix(1, 2));
  EXPECT_THROW(run_uni_backward(desc, p, out, grad_seq, nullptr, grads), StateError);
}

TEST(LayerBackward, ZeroGradSequenceZeroGrads) {
  Rng rng(10);
  LayerDescriptor desc = uni_lstm(2, 2);
  LstmIParams p = LstmIParams::init(2, 2, false, rng);
  std::vector<Matrix> inputs = random_sequence(3, 2, 2, rng);
  LayerOutput out = run_uni(desc, p, inputs, nullptr, true);
  LstmIParams grads = LstmIParams::zeros(2, 2, false);
  std::vector<Matrix> grad_seq(3, Matrix(2, 2));
  std::vector<Matrix> dx = run_uni_backward(desc, p, out, grad_seq, nullptr, grads);
  for_each_tensor(grads, [](const char*, const Matrix& g) {
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.data()[i], 0.0);
  });
  for (const Matrix& d : dx)
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.data()[i], 0.0);
}

namespace {

// Scalar functional of a layer's output sequence under fixed random weights.
double weighted_sum(const std::vector<Matrix>& seq, const std::vector<Matrix>& weights) {
  double acc = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t)
    for (std::size_t i = 0; i < seq[t].size(); ++i)
      acc += seq[t].data()[i] * weights[t].data()[i];
  return acc;
}

}  // namespace

TEST(LayerBackward, UniFiniteDifferences) {
  Rng rng(11);
  const std::size_t T = 4, b = 2, D = 2, H = 2;
  LayerDescriptor desc = uni_lstm(D, H);
  LstmIParams p = LstmIParams::init(D, H, false, rng);
  std::vector<Matrix> inputs = random_sequence(T, b, D, rng);
  std::vector<Matrix> weights = random_sequence(T, b, H, rng, 1.0);

  LayerOutput out = run_uni(desc, p, inputs, nullptr, true);
  LstmIParams grads = LstmIParams::zeros(D, H, false);
  run_uni_backward(desc, p, out, weights, nullptr, grads);

  auto value = [&]() {
    return weighted_sum(run_uni(desc, p, inputs, nullptr, false).sequence, weights);
  };
  const double eps = 1e-5;
  std::vector<Matrix*> gptrs;
  for_each_tensor(grads, [&](const char*, Matrix& g) { gptrs.push_back(&g); });
  std::size_t gi = 0;
  for_each_tensor(p, [&](const char* name, Matrix& tensor) {
    const Matrix& g = *gptrs[gi++];
    for (std::size_t k = 0; k < tensor.size(); ++k) {
      const double saved = tensor.data()[k];
      tensor.data()[k] = saved + eps;
      const double up = value();
      tensor.data()[k] = saved - eps;
      const double down = value();
      tensor.data()[k] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = g.data()[k];
      EXPECT_LT(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}), 1e-5)
          << name << "[" << k << "]";
    }
  });
}

TEST(LayerBackward, BiFiniteDifferencesAllCombines) {
  Rng rng(12);
  const std::size_t T = 3, b = 2, D = 2, H = 2;
  for (Combine mode : {Combine::average, Combine::sum, Combine::concat}) {
    LayerDescriptor desc = bi_lstm(D, H, mode);
    LstmIParams fwd = LstmIParams::init(D, H, false, rng);
    LstmIParams bwd = LstmIParams::init(D, H, false, rng);
    std::vector<Matrix> inputs = random_sequence(T, b, D, rng);
    std::vector<Matrix> weights = random_sequence(T, b, desc.output_dim(), rng, 1.0);

    LayerOutput out = run_bi(desc, fwd, bwd, inputs, nullptr, true);
    LstmIParams gf = LstmIParams::zeros(D, H, false);
    LstmIParams gb = LstmIParams::zeros(D, H, false);
    run_bi_backward(desc, fwd, bwd, out, weights, nullptr, nullptr, gf, gb);

    auto value = [&]() {
      return weighted_sum(run_bi(desc, fwd, bwd, inputs, nullptr, false).sequence, weights);
    };
    const double eps = 1e-5;
    for (auto [params, grads] : {std::pair{&fwd, &gf}, std::pair{&bwd, &gb}}) {
      std::vector<Matrix*> gptrs;
      for_each_tensor(*grads, [&](const char*, Matrix& g) { gptrs.push_back(&g); });
      std::size_t gi = 0;
      for_each_tensor(*params, [&](const char* name, Matrix& tensor) {
        const Matrix& g = *gptrs[gi++];
        for (std::size_t k = 0; k < tensor.size(); ++k) {
          const double saved = tensor.data()[k];
          tensor.data()[k] = saved + eps;
          const double up = value();
          tensor.data()[k] = saved - eps;
          const double down = value();
          tensor.data()[k] = saved;
          const double numeric = (up - down) / (2 * eps);
          const double a = g.data()[k];
          EXPECT_LT(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}),
                    1e-5)
              << to_string(mode) << " " << name << "[" << k << "]";
        }
      });
    }
  }
}

TEST(LayerBackward, BiInputGradsFollowSymmetryOracle) {
  // Shared branch parameters, palindromic inputs, time-symmetric upstream
  // gradients: under the average combine the layer's input gradient is the
  // half-sum of the unidirectional gradient and its time reverse.
  Rng rng(13);
  const std::size_t T = 5, b = 1, D = 2, H = 2;
  LayerDescriptor desc = bi_lstm(D, H);
  LstmIParams shared = LstmIParams::init(D, H, false, rng);
  std::vector<Matrix> inputs(T);
  std::vector<Matrix> weights(T);
  for (std::size_t t = 0; t <= T / 2; ++t) {
    inputs[t] = random_matrix(b, D, rng);
    inputs[T - 1 - t] = inputs[t];
    weights[t] = random_matrix(b, H, rng, 1.0);
    weights[T - 1 - t] = weights[t];
  }

  LayerOutput out = run_bi(desc, shared, shared, inputs, nullptr, true);
  LstmIParams gf = LstmIParams::zeros(D, H, false);
  LstmIParams gb = LstmIParams::zeros(D, H, false);
  std::vector<Matrix> dx_bi =
      run_bi_backward(desc, shared, shared, out, weights, nullptr, nullptr, gf, gb);

  LayerOutput uni = run_uni(uni_lstm(D, H), shared, inputs, nullptr, true);
  LstmIParams gu = LstmIParams::zeros(D, H, false);
  std::vector<Matrix> dx_uni = run_uni_backward(uni_lstm(D, H), shared, uni, weights, nullptr, gu);

  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < dx_bi[t].size(); ++i)
      EXPECT_NEAR(dx_bi[t].data()[i],
                  0.5 * (dx_uni[t].data()[i] + dx_uni[T - 1 - t].data()[i]), 1e-12);
}
