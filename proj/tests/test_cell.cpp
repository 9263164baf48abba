#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "rnnif/cell.hpp"

using namespace rnnif;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 0.8) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform_sym(scale);
  return m;
}

LstmParams random_lstm(std::size_t in, std::size_t hidden, Rng& rng) {
  LstmParams p = LstmParams::init(in, hidden, rng);
  p.b_f = random_matrix(1, hidden, rng, 0.2);
  p.b_i = random_matrix(1, hidden, rng, 0.2);
  p.b_o = random_matrix(1, hidden, rng, 0.2);
  p.b_c = random_matrix(1, hidden, rng, 0.2);
  return p;
}

LstmIParams random_lstmi(std::size_t in, std::size_t hidden, Rng& rng) {
  LstmIParams p = LstmIParams::init(in, hidden, true, rng);
  p.base = random_lstm(in, hidden, rng);
  p.b_imp = random_matrix(1, in, rng, 0.2);
  return p;
}

// Independent scalar-loop evaluation of one plain step (j-k accumulation
// order, unlike the library's i-k-j matmul).
CellState naive_lstm_step(const LstmParams& p, const Matrix& x, const CellState& prev) {
  const std::size_t b = x.rows(), H = p.hidden(), D = p.input_dim();
  auto gate = [&](const Matrix& W, const Matrix& U, const Matrix& bias, std::size_t r,
                  std::size_t j) {
    double a = bias(0, j);
    for (std::size_t k = 0; k < D; ++k) a += x(r, k) * W(k, j);
    for (std::size_t k = 0; k < H; ++k) a += prev.h(r, k) * U(k, j);
    return a;
  };
  CellState out = CellState::zeros(b, H);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < H; ++j) {
      const double f = 1.0 / (1.0 + std::exp(-gate(p.W_f, p.U_f, p.b_f, r, j)));
      const double i = 1.0 / (1.0 + std::exp(-gate(p.W_i, p.U_i, p.b_i, r, j)));
      const double o = 1.0 / (1.0 + std::exp(-gate(p.W_o, p.U_o, p.b_o, r, j)));
      const double cb = std::tanh(gate(p.W_c, p.U_c, p.b_c, r, j));
      out.C(r, j) = f * prev.C(r, j) + i * cb;
      out.h(r, j) = o * std::tanh(out.C(r, j));
    }
  return out;
}

}  // namespace

TEST(LstmStep, ZeroParamsZeroState) {
  LstmParams p = LstmParams::zeros(3, 2);
  Rng rng(1);
  Matrix x = random_matrix(4, 3, rng);
  CellState out = lstm_step(p, x, CellState::zeros(4, 2));
  for (std::size_t i = 0; i < out.h.size(); ++i) {
    EXPECT_EQ(out.h.data()[i], 0.0);
    EXPECT_EQ(out.C.data()[i], 0.0);
  }
}

TEST(LstmStep, ZeroParamsNonzeroCell) {
  // Gates sit at 0.5 and the candidate at 0, so C halves and h follows.
  LstmParams p = LstmParams::zeros(1, 1);
  CellState prev = CellState::zeros(1, 1);
  const double c = 0.8;
  prev.C(0, 0) = c;
  Matrix x(1, 1);
  CellState out = lstm_step(p, x, prev);
  EXPECT_DOUBLE_EQ(out.C(0, 0), 0.5 * c);
  EXPECT_DOUBLE_EQ(out.h(0, 0), 0.5 * std::tanh(0.5 * c));
}

TEST(LstmStep, MatchesScalarLoopOracle) {
  Rng rng(7);
  LstmParams p = random_lstm(3, 4, rng);
  Matrix x = random_matrix(5, 3, rng);
  CellState prev{random_matrix(5, 4, rng, 0.5), random_matrix(5, 4, rng, 0.5)};
  CellState fast = lstm_step(p, x, prev);
  CellState slow = naive_lstm_step(p, x, prev);
  for (std::size_t i = 0; i < fast.h.size(); ++i) {
    EXPECT_NEAR(fast.h.data()[i], slow.h.data()[i], 1e-12);
    EXPECT_NEAR(fast.C.data()[i], slow.C.data()[i], 1e-12);
  }
}

TEST(LstmStep, OutputsBoundedAndDeterministic) {
  Rng rng(8);
  LstmParams p = random_lstm(2, 3, rng);
  Matrix x = random_matrix(4, 2, rng);
  CellState prev{random_matrix(4, 3, rng), random_matrix(4, 3, rng)};
  CellState a = lstm_step(p, x, prev);
  CellState b = lstm_step(p, x, prev);
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.C, b.C);
  for (std::size_t i = 0; i < a.h.size(); ++i) EXPECT_LT(std::abs(a.h.data()[i]), 1.0);
}

TEST(LstmStep, RejectsBadShapesAndNonFinite) {
  LstmParams p = LstmParams::zeros(3, 2);
  EXPECT_THROW(lstm_step(p, Matrix(2, 4), CellState::zeros(2, 2)), ShapeError);
  Matrix x(2, 3);
  x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(lstm_step(p, x, CellState::zeros(2, 2)), NumericError);
}

TEST(LstmiStep, FullObservationReducesToPlainStep) {
  // With every input observed and V pinned at zero the mask paths vanish, so
  // the step must equal the plain one bitwise even with a live imputation
  // unit.
  Rng rng(9);
  LstmIParams p = random_lstmi(3, 2, rng);
  p.V_f.fill(0.0);
  p.V_i.fill(0.0);
  p.V_o.fill(0.0);
  p.V_c.fill(0.0);
  Matrix x = random_matrix(4, 3, rng, 0.4);
  Matrix m(4, 3, 1.0);
  CellState prev{random_matrix(4, 2, rng), random_matrix(4, 2, rng)};
  LstmIStepResult r = lstmi_step(p, x, m, prev);
  CellState plain = lstm_step(p.base, x, prev);
  EXPECT_EQ(r.state.h, plain.h);
  EXPECT_EQ(r.state.C, plain.C);
  EXPECT_EQ(r.x_sub, x);
}

TEST(LstmiStep, SubstitutionFillsOnlyMissingSlots) {
  Rng rng(10);
  LstmIParams p = random_lstmi(2, 2, rng);
  Matrix x = Matrix::from_rows({{0.3, 0.0}});
  Matrix m = Matrix::from_rows({{1.0, 0.0}});
  CellState prev{random_matrix(1, 2, rng), random_matrix(1, 2, rng)};
  LstmIStepResult r = lstmi_step(p, x, m, prev);
  EXPECT_EQ(r.x_sub(0, 0), 0.3);
  EXPECT_EQ(r.x_sub(0, 1), r.x_inf(0, 1));
}

TEST(LstmiStep, ZeroParamsInferHalf) {
  LstmIParams p = LstmIParams::zeros(2, 2, true);
  Matrix x = Matrix::from_rows({{0.9, 0.0}});
  Matrix m = Matrix::from_rows({{1.0, 0.0}});
  LstmIStepResult r = lstmi_step(p, x, m, CellState::zeros(1, 2));
  EXPECT_DOUBLE_EQ(r.x_inf(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.x_inf(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(r.x_sub(0, 0), 0.9);
  EXPECT_DOUBLE_EQ(r.x_sub(0, 1), 0.5);
}

TEST(LstmiStep, MaskMustBeBinary) {
  Rng rng(11);
  LstmIParams p = random_lstmi(2, 2, rng);
  Matrix x(1, 2);
  Matrix m = Matrix::from_rows({{0.5, 1.0}});
  EXPECT_THROW(lstmi_step(p, x, m, CellState::zeros(1, 2)), ValueError);
}

TEST(LstmStepBackward, ZeroUpstreamZeroGrads) {
  Rng rng(12);
  LstmParams p = random_lstm(2, 3, rng);
  Matrix x = random_matrix(2, 2, rng);
  CellState prev{random_matrix(2, 3, rng), random_matrix(2, 3, rng)};
  CellTape tape;
  lstm_step(p, x, prev, &tape);
  LstmParams grads = LstmParams::zeros(2, 3);
  lstm_step_backward(p, tape, Matrix(2, 3), Matrix(2, 3), grads);
  LstmIParams wrap = LstmIParams::plain(grads);
  for_each_tensor(wrap, [](const char*, const Matrix& g) {
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.data()[i], 0.0);
  });
}

namespace {

// Central finite difference of scalar -> scalar through a closure.
template <typename F>
double fd(F&& f, double& slot, double eps = 1e-5) {
  const double saved = slot;
  slot = saved + eps;
  const double up = f();
  slot = saved - eps;
  const double down = f();
  slot = saved;
  return (up - down) / (2 * eps);
}

}  // namespace

TEST(LstmStepBackward, ScalarCellMatchesFiniteDifferences) {
  Rng rng(13);
  LstmParams p = random_lstm(1, 1, rng);
  Matrix x = random_matrix(1, 1, rng);
  CellState prev{random_matrix(1, 1, rng), random_matrix(1, 1, rng)};

  // Scalar functional of the step outputs.
  const double wh = 1.0, wc = 0.7;
  auto value = [&]() {
    CellState out = lstm_step(p, x, prev);
    return wh * out.h(0, 0) + wc * out.C(0, 0);
  };

  CellTape tape;
  lstm_step(p, x, prev, &tape);
  LstmParams grads = LstmParams::zeros(1, 1);
  Matrix dh(1, 1, wh), dC(1, 1, wc);
  CellStepInputGrads in_grads = lstm_step_backward(p, tape, dh, dC, grads);

  const std::pair<Matrix*, Matrix*> tensors[] = {
      {&p.W_f, &grads.W_f}, {&p.W_i, &grads.W_i}, {&p.W_o, &grads.W_o}, {&p.W_c, &grads.W_c},
      {&p.U_f, &grads.U_f}, {&p.U_i, &grads.U_i}, {&p.U_o, &grads.U_o}, {&p.U_c, &grads.U_c},
      {&p.b_f, &grads.b_f}, {&p.b_i, &grads.b_i}, {&p.b_o, &grads.b_o}, {&p.b_c, &grads.b_c}};
  for (const auto& [param, grad] : tensors) {
    const double numeric = fd(value, (*param)(0, 0));
    const double a = (*grad)(0, 0);
    EXPECT_LT(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}), 1e-6);
  }

  // Input and previous-state gradients.
  EXPECT_LT(std::abs(in_grads.dx(0, 0) - fd(value, x(0, 0))), 1e-6);
  EXPECT_LT(std::abs(in_grads.dh_prev(0, 0) - fd(value, prev.h(0, 0))), 1e-6);
  EXPECT_LT(std::abs(in_grads.dC_prev(0, 0) - fd(value, prev.C(0, 0))), 1e-6);
}

TEST(LstmiStepBackward, ReductionMatchesPlainGradients) {
  // Masks all one, V and imputation unit zero: gradients of the shared
  // parameters must equal the plain step's bitwise.
  Rng rng(14);
  LstmParams base = random_lstm(2, 2, rng);
  LstmIParams p = LstmIParams::zeros(2, 2, true);
  p.base = base;

  Matrix x = random_matrix(3, 2, rng, 0.4);
  Matrix m(3, 2, 1.0);
  CellState prev{random_matrix(3, 2, rng), random_matrix(3, 2, rng)};
  Matrix dh = random_matrix(3, 2, rng);
  Matrix dC = random_matrix(3, 2, rng);

  CellTape tape_i;
  lstmi_step(p, x, m, prev, &tape_i);
  LstmIParams grads_i = LstmIParams::zeros(2, 2, true);
  CellStepInputGrads gi = lstmi_step_backward(p, tape_i, dh, dC, nullptr, grads_i);

  CellTape tape_p;
  lstm_step(base, x, prev, &tape_p);
  LstmParams grads_p = LstmParams::zeros(2, 2);
  CellStepInputGrads gp = lstm_step_backward(base, tape_p, dh, dC, grads_p);

  EXPECT_EQ(grads_i.base.W_f, grads_p.W_f);
  EXPECT_EQ(grads_i.base.U_c, grads_p.U_c);
  EXPECT_EQ(grads_i.base.b_o, grads_p.b_o);
  EXPECT_EQ(gi.dh_prev, gp.dh_prev);
  EXPECT_EQ(gi.dC_prev, gp.dC_prev);
  // dx through the substitution at m=1 equals the plain input gradient.
  EXPECT_EQ(gi.dx, gp.dx);
}

TEST(LstmiStepBackward, ThreeStepUnrollFullJacobian) {
  // Unroll three imputing steps with a mixed mask pattern and check every
  // parameter, including the mask paths and the imputation unit, against
  // central differences of a scalar functional that also reads the inferred
  // values.
  Rng rng(15);
  LstmIParams p = random_lstmi(1, 1, rng);
  std::vector<Matrix> xs = {Matrix::from_rows({{0.4}}), Matrix::from_rows({{0.0}}),
                            Matrix::from_rows({{0.7}})};
  std::vector<Matrix> ms = {Matrix::from_rows({{1.0}}), Matrix::from_rows({{0.0}}),
                            Matrix::from_rows({{1.0}})};
  const double w_inf = 0.7;

  auto value = [&]() {
    CellState st = CellState::zeros(1, 1);
    double acc = 0.0;
    for (int t = 0; t < 3; ++t) {
      LstmIStepResult r = lstmi_step(p, xs[t], ms[t], st);
      st = r.state;
      acc += st.h(0, 0) + 0.3 * st.C(0, 0) + w_inf * r.x_inf(0, 0);
    }
    return acc;
  };

  // Analytic pass: forward with tapes, then reverse through the unroll.
  std::vector<CellTape> tapes(3);
  CellState st = CellState::zeros(1, 1);
  for (int t = 0; t < 3; ++t) {
    LstmIStepResult r = lstmi_step(p, xs[t], ms[t], st, &tapes[t]);
    st = r.state;
  }
  LstmIParams grads = LstmIParams::zeros(1, 1, true);
  Matrix dh_carry(1, 1), dC_carry(1, 1);
  Matrix dinf(1, 1, w_inf);
  for (int t = 2; t >= 0; --t) {
    Matrix dh = dh_carry;
    dh(0, 0) += 1.0;
    Matrix dC = dC_carry;
    dC(0, 0) += 0.3;
    CellStepInputGrads g = lstmi_step_backward(p, tapes[t], dh, dC, &dinf, grads);
    dh_carry = g.dh_prev;
    dC_carry = g.dC_prev;
  }

  std::vector<double> analytic;
  for_each_tensor(grads, [&](const char*, const Matrix& g) { analytic.push_back(g(0, 0)); });
  std::size_t idx = 0;
  for_each_tensor(p, [&](const char* name, Matrix& slot) {
    const double numeric = fd(value, slot(0, 0));
    const double a = analytic[idx++];
    EXPECT_LT(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}), 1e-5)
        << name;
  });
}

TEST(LstmiStepBackward, RequiresImputingTape) {
  Rng rng(16);
  LstmIParams p = random_lstmi(1, 1, rng);
  CellTape tape;  // never filled by an imputing step
  LstmIParams grads = LstmIParams::zeros(1, 1, true);
  EXPECT_THROW(lstmi_step_backward(p, tape, Matrix(1, 1), Matrix(1, 1), nullptr, grads),
               StateError);
}
