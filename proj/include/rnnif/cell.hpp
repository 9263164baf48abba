#pragma once

#include <functional>
#include <string>

#include "rnnif/matrix.hpp"

namespace rnnif {

/// Weights of one plain recurrent cell. W_* map the layer input (input_dim x
/// hidden), U_* map the preceding output (hidden x hidden), b_* are 1 x hidden
/// bias rows; one of each per gate f/i/o plus the candidate c.
struct LstmParams {
  Matrix W_f, W_i, W_o, W_c;
  Matrix U_f, U_i, U_o, U_c;
  Matrix b_f, b_i, b_o, b_c;

  std::size_t input_dim() const { return W_f.rows(); }
  std::size_t hidden() const { return W_f.cols(); }

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden) {
    LstmParams p;
    p.W_f = p.W_i = p.W_o = p.W_c = Matrix(input_dim, hidden);
    p.U_f = p.U_i = p.U_o = p.U_c = Matrix(hidden, hidden);
    p.b_f = p.b_i = p.b_o = p.b_c = Matrix(1, hidden);
    return p;
  }

  // Weight matrices uniform +-1/sqrt(fan_in); biases zero except the forget
  // gate, which starts open at 1 so early gradients reach distant steps.
  static LstmParams init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
    LstmParams p = zeros(input_dim, hidden);
    p.W_f = init_uniform(input_dim, hidden, rng);
    p.W_i = init_uniform(input_dim, hidden, rng);
    p.W_o = init_uniform(input_dim, hidden, rng);
    p.W_c = init_uniform(input_dim, hidden, rng);
    p.U_f = init_uniform(hidden, hidden, rng);
    p.U_i = init_uniform(hidden, hidden, rng);
    p.U_o = init_uniform(hidden, hidden, rng);
    p.U_c = init_uniform(hidden, hidden, rng);
    p.b_f.fill(1.0);
    return p;
  }

  void validate() const {
    auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
      if (m.rows() != r || m.cols() != c)
        throw ShapeError(std::string("LstmParams::") + name + " is " + m.shape_str() +
                         ", expected " + std::to_string(r) + "x" + std::to_string(c));
    };
    const std::size_t in = input_dim(), h = hidden();
    expect(W_i, in, h, "W_i");
    expect(W_o, in, h, "W_o");
    expect(W_c, in, h, "W_c");
    expect(U_f, h, h, "U_f");
    expect(U_i, h, h, "U_i");
    expect(U_o, h, h, "U_o");
    expect(U_c, h, h, "U_c");
    expect(b_f, 1, h, "b_f");
    expect(b_i, 1, h, "b_i");
    expect(b_o, 1, h, "b_o");
    expect(b_c, 1, h, "b_c");
  }
};

/// Weights of an imputation-capable cell: the plain set plus mask paths V_*
/// (input_dim x hidden, one per gate) and the imputation unit that infers the
/// next observation from the preceding cell state and output
/// (W_imp, U_imp: hidden x input_dim; b_imp: 1 x input_dim).
///
/// The imputation tensors may be empty (0x0), in which case the struct holds a
/// plain cell; layers use this so one storage type covers both kinds.
struct LstmIParams {
  LstmParams base;
  Matrix V_f, V_i, V_o, V_c;
  Matrix W_imp, U_imp, b_imp;

  bool imputing() const { return !V_f.empty(); }
  std::size_t input_dim() const { return base.input_dim(); }
  std::size_t hidden() const { return base.hidden(); }

  static LstmIParams plain(LstmParams p) {
    LstmIParams out;
    out.base = std::move(p);
    return out;
  }

  static LstmIParams zeros(std::size_t input_dim, std::size_t hidden, bool with_imputation) {
    LstmIParams p;
    p.base = LstmParams::zeros(input_dim, hidden);
    if (with_imputation) {
      p.V_f = p.V_i = p.V_o = p.V_c = Matrix(input_dim, hidden);
      p.W_imp = p.U_imp = Matrix(hidden, input_dim);
      p.b_imp = Matrix(1, input_dim);
    }
    return p;
  }

  static LstmIParams init(std::size_t input_dim, std::size_t hidden, bool with_imputation,
                          Rng& rng) {
    LstmIParams p = zeros(input_dim, hidden, with_imputation);
    p.base = LstmParams::init(input_dim, hidden, rng);
    if (with_imputation) {
      p.V_f = init_uniform(input_dim, hidden, rng);
      p.V_i = init_uniform(input_dim, hidden, rng);
      p.V_o = init_uniform(input_dim, hidden, rng);
      p.V_c = init_uniform(input_dim, hidden, rng);
      p.W_imp = init_uniform(hidden, input_dim, rng);
      p.U_imp = init_uniform(hidden, input_dim, rng);
    }
    return p;
  }

  void validate() const {
    base.validate();
    if (!imputing()) {
      if (!V_i.empty() || !V_o.empty() || !V_c.empty() || !W_imp.empty() || !U_imp.empty() ||
          !b_imp.empty())
        throw ShapeError("LstmIParams: partially populated imputation tensors");
      return;
    }
    const std::size_t in = input_dim(), h = hidden();
    auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
      if (m.rows() != r || m.cols() != c)
        throw ShapeError(std::string("LstmIParams::") + name + " is " + m.shape_str() +
                         ", expected " + std::to_string(r) + "x" + std::to_string(c));
    };
    expect(V_f, in, h, "V_f");
    expect(V_i, in, h, "V_i");
    expect(V_o, in, h, "V_o");
    expect(V_c, in, h, "V_c");
    expect(W_imp, h, in, "W_imp");
    expect(U_imp, h, in, "U_imp");
    expect(b_imp, 1, in, "b_imp");
  }
};

/// Visits every populated tensor in a fixed order. Gradient and optimizer
/// containers mirror parameter containers, so zipping two structs through this
/// order keeps tensors aligned.
template <typename Fn>
void for_each_tensor(LstmIParams& p, Fn&& fn) {
  fn("W_f", p.base.W_f);
  fn("W_i", p.base.W_i);
  fn("W_o", p.base.W_o);
  fn("W_c", p.base.W_c);
  fn("U_f", p.base.U_f);
  fn("U_i", p.base.U_i);
  fn("U_o", p.base.U_o);
  fn("U_c", p.base.U_c);
  fn("b_f", p.base.b_f);
  fn("b_i", p.base.b_i);
  fn("b_o", p.base.b_o);
  fn("b_c", p.base.b_c);
  if (p.imputing()) {
    fn("V_f", p.V_f);
    fn("V_i", p.V_i);
    fn("V_o", p.V_o);
    fn("V_c", p.V_c);
    fn("W_imp", p.W_imp);
    fn("U_imp", p.U_imp);
    fn("b_imp", p.b_imp);
  }
}

template <typename Fn>
void for_each_tensor(const LstmIParams& p, Fn&& fn) {
  for_each_tensor(const_cast<LstmIParams&>(p),
                  [&](const char* name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

/// Recurrent state carried between steps: output h and cell state C, both
/// batch x hidden.
struct CellState {
  Matrix h;
  Matrix C;

  static CellState zeros(std::size_t batch, std::size_t hidden) {
    return CellState{Matrix(batch, hidden), Matrix(batch, hidden)};
  }
};

/// Forward intermediates cached by a training-mode step for the reverse pass.
struct CellTape {
  Matrix x_sub;             // input actually fed to the gates (post-substitution)
  Matrix h_prev, C_prev;
  Matrix f, i, o, c_bar;
  Matrix C, tanh_C;
  // Imputation-capable steps only:
  Matrix m;                 // mask
  Matrix x_raw;             // input before substitution
  Matrix x_inf;             // inferred observation from the imputation unit
};

namespace detail {

inline void check_step_shapes(const LstmParams& p, const Matrix& x, const CellState& prev) {
  if (x.cols() != p.input_dim())
    throw ShapeError("cell step: input " + x.shape_str() + " does not match weights " +
                     p.W_f.shape_str());
  if (prev.h.rows() != x.rows() || prev.h.cols() != p.hidden())
    throw ShapeError("cell step: previous output " + prev.h.shape_str() + " for batch " +
                     std::to_string(x.rows()) + ", hidden " + std::to_string(p.hidden()));
  check_same_shape(prev.h, prev.C, "cell step: previous state");
}

// Gate pre-activation: x*W + h_prev*U + b (+ m*V when given).
inline Matrix gate_preact(const Matrix& x, const Matrix& W, const Matrix& h_prev,
                          const Matrix& U, const Matrix& b, const Matrix* m, const Matrix* V) {
  Matrix a = matmul(x, W);
  add_inplace(a, matmul(h_prev, U));
  if (m != nullptr) add_inplace(a, matmul(*m, *V));
  add_row_inplace(a, b);
  return a;
}

inline CellState gates_to_state(const Matrix& f, const Matrix& i, const Matrix& o,
                                const Matrix& c_bar, const Matrix& C_prev, CellTape* tape) {
  Matrix C = add(hadamard(f, C_prev), hadamard(i, c_bar));
  Matrix tC = tanh_map(C);
  Matrix h = hadamard(o, tC);
  if (tape != nullptr) {
    tape->f = f;
    tape->i = i;
    tape->o = o;
    tape->c_bar = c_bar;
    tape->C = C;
    tape->tanh_C = tC;
  }
  return CellState{std::move(h), std::move(C)};
}

}  // namespace detail

/// One plain cell step. Pass a tape to run in training mode; inference passes
/// nullptr and caches nothing.
inline CellState lstm_step(const LstmParams& p, const Matrix& x, const CellState& prev,
                           CellTape* tape = nullptr) {
  detail::check_step_shapes(p, x, prev);
  if (!x.all_finite()) throw NumericError("lstm_step: non-finite input");
  const Matrix f = sigmoid(detail::gate_preact(x, p.W_f, prev.h, p.U_f, p.b_f, nullptr, nullptr));
  const Matrix i = sigmoid(detail::gate_preact(x, p.W_i, prev.h, p.U_i, p.b_i, nullptr, nullptr));
  const Matrix o = sigmoid(detail::gate_preact(x, p.W_o, prev.h, p.U_o, p.b_o, nullptr, nullptr));
  const Matrix c_bar =
      tanh_map(detail::gate_preact(x, p.W_c, prev.h, p.U_c, p.b_c, nullptr, nullptr));
  if (tape != nullptr) {
    tape->x_sub = x;
    tape->h_prev = prev.h;
    tape->C_prev = prev.C;
  }
  return detail::gates_to_state(f, i, o, c_bar, prev.C, tape);
}

struct LstmIStepResult {
  CellState state;
  Matrix x_sub;  // input after missing elements were replaced by inferred ones
  Matrix x_inf;  // raw inferred observation (feeds the imputation regularizer)
};

/// One imputation-capable cell step. The imputation unit infers the current
/// observation from the preceding state, missing elements of x (mask 0) are
/// replaced by the inferred ones, and the mask itself feeds the gates through
/// the V_* paths. The mask is data: it is never differentiated.
inline LstmIStepResult lstmi_step(const LstmIParams& p, const Matrix& x, const Matrix& m,
                                  const CellState& prev, CellTape* tape = nullptr) {
  if (!p.imputing()) throw StateError("lstmi_step: parameters lack imputation tensors");
  detail::check_step_shapes(p.base, x, prev);
  check_same_shape(x, m, "lstmi_step: input vs mask");
  if (!x.all_finite()) throw NumericError("lstmi_step: non-finite input");
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m.data()[k] != 0.0 && m.data()[k] != 1.0)
      throw ValueError("lstmi_step: mask entries must be 0 or 1");

  // Inferred observation from the preceding cell state and output.
  Matrix a_inf = matmul(prev.C, p.W_imp);
  add_inplace(a_inf, matmul(prev.h, p.U_imp));
  add_row_inplace(a_inf, p.b_imp);
  Matrix x_inf = sigmoid(a_inf);

  // x <- m.x + (1-m).x_inf
  Matrix x_sub(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double mk = m.data()[k];
    x_sub.data()[k] = mk * x.data()[k] + (1.0 - mk) * x_inf.data()[k];
  }

  const Matrix f =
      sigmoid(detail::gate_preact(x_sub, p.base.W_f, prev.h, p.base.U_f, p.base.b_f, &m, &p.V_f));
  const Matrix i =
      sigmoid(detail::gate_preact(x_sub, p.base.W_i, prev.h, p.base.U_i, p.base.b_i, &m, &p.V_i));
  const Matrix o =
      sigmoid(detail::gate_preact(x_sub, p.base.W_o, prev.h, p.base.U_o, p.base.b_o, &m, &p.V_o));
  const Matrix c_bar =
      tanh_map(detail::gate_preact(x_sub, p.base.W_c, prev.h, p.base.U_c, p.base.b_c, &m, &p.V_c));

  if (tape != nullptr) {
    tape->x_sub = x_sub;
    tape->h_prev = prev.h;
    tape->C_prev = prev.C;
    tape->m = m;
    tape->x_raw = x;
    tape->x_inf = x_inf;
  }
  CellState st = detail::gates_to_state(f, i, o, c_bar, prev.C, tape);
  return LstmIStepResult{std::move(st), std::move(x_sub), std::move(x_inf)};
}

/// Gradients flowing out of one reversed step, with respect to the step's
/// inputs. dx is the gradient at the raw input (pre-substitution for
/// imputation cells).
struct CellStepInputGrads {
  Matrix dx;
  Matrix dh_prev;
  Matrix dC_prev;
};

namespace detail {

struct GateGrads {
  Matrix da_f, da_i, da_o, da_c;
  Matrix dC_prev;
};

// Shared reverse arithmetic from (dh, dC_in) down to gate pre-activations.
inline GateGrads backprop_gates(const CellTape& t, const Matrix& dh, const Matrix& dC_in) {
  GateGrads g;
  Matrix d_o = hadamard(dh, t.tanh_C);
  Matrix dC = dC_in;
  add_inplace(dC, hadamard(hadamard(dh, t.o), tanh_grad_from_output(t.tanh_C)));
  g.da_o = hadamard(d_o, sigmoid_grad_from_output(t.o));
  g.da_f = hadamard(hadamard(dC, t.C_prev), sigmoid_grad_from_output(t.f));
  g.da_i = hadamard(hadamard(dC, t.c_bar), sigmoid_grad_from_output(t.i));
  g.da_c = hadamard(hadamard(dC, t.i), tanh_grad_from_output(t.c_bar));
  g.dC_prev = hadamard(dC, t.f);
  return g;
}

}  // namespace detail

/// Exact reverse-mode step for the plain cell. Parameter gradients accumulate
/// into grads; input gradients are returned.
inline CellStepInputGrads lstm_step_backward(const LstmParams& p, const CellTape& t,
                                             const Matrix& dh, const Matrix& dC_in,
                                             LstmParams& grads) {
  detail::GateGrads g = detail::backprop_gates(t, dh, dC_in);

  add_inplace(grads.W_f, matmul_tn(t.x_sub, g.da_f));
  add_inplace(grads.W_i, matmul_tn(t.x_sub, g.da_i));
  add_inplace(grads.W_o, matmul_tn(t.x_sub, g.da_o));
  add_inplace(grads.W_c, matmul_tn(t.x_sub, g.da_c));
  add_inplace(grads.U_f, matmul_tn(t.h_prev, g.da_f));
  add_inplace(grads.U_i, matmul_tn(t.h_prev, g.da_i));
  add_inplace(grads.U_o, matmul_tn(t.h_prev, g.da_o));
  add_inplace(grads.U_c, matmul_tn(t.h_prev, g.da_c));
  add_inplace(grads.b_f, col_sums(g.da_f));
  add_inplace(grads.b_i, col_sums(g.da_i));
  add_inplace(grads.b_o, col_sums(g.da_o));
  add_inplace(grads.b_c, col_sums(g.da_c));

  CellStepInputGrads out;
  out.dx = matmul_nt(g.da_f, p.W_f);
  add_inplace(out.dx, matmul_nt(g.da_i, p.W_i));
  add_inplace(out.dx, matmul_nt(g.da_o, p.W_o));
  add_inplace(out.dx, matmul_nt(g.da_c, p.W_c));
  out.dh_prev = matmul_nt(g.da_f, p.U_f);
  add_inplace(out.dh_prev, matmul_nt(g.da_i, p.U_i));
  add_inplace(out.dh_prev, matmul_nt(g.da_o, p.U_o));
  add_inplace(out.dh_prev, matmul_nt(g.da_c, p.U_c));
  out.dC_prev = std::move(g.dC_prev);
  return out;
}

/// Reverse-mode step for the imputation-capable cell. dx_inf_extra, when
/// given, is an externally injected gradient on the inferred observation (the
/// regularizer hook); the substitution path adds its own contribution at
/// missing positions. Gradients flow through the imputation unit into the
/// preceding state.
inline CellStepInputGrads lstmi_step_backward(const LstmIParams& p, const CellTape& t,
                                              const Matrix& dh, const Matrix& dC_in,
                                              const Matrix* dx_inf_extra, LstmIParams& grads) {
  if (t.m.empty()) throw StateError("lstmi_step_backward: tape is not from an imputing step");
  detail::GateGrads g = detail::backprop_gates(t, dh, dC_in);

  add_inplace(grads.base.W_f, matmul_tn(t.x_sub, g.da_f));
  add_inplace(grads.base.W_i, matmul_tn(t.x_sub, g.da_i));
  add_inplace(grads.base.W_o, matmul_tn(t.x_sub, g.da_o));
  add_inplace(grads.base.W_c, matmul_tn(t.x_sub, g.da_c));
  add_inplace(grads.base.U_f, matmul_tn(t.h_prev, g.da_f));
  add_inplace(grads.base.U_i, matmul_tn(t.h_prev, g.da_i));
  add_inplace(grads.base.U_o, matmul_tn(t.h_prev, g.da_o));
  add_inplace(grads.base.U_c, matmul_tn(t.h_prev, g.da_c));
  add_inplace(grads.base.b_f, col_sums(g.da_f));
  add_inplace(grads.base.b_i, col_sums(g.da_i));
  add_inplace(grads.base.b_o, col_sums(g.da_o));
  add_inplace(grads.base.b_c, col_sums(g.da_c));
  add_inplace(grads.V_f, matmul_tn(t.m, g.da_f));
  add_inplace(grads.V_i, matmul_tn(t.m, g.da_i));
  add_inplace(grads.V_o, matmul_tn(t.m, g.da_o));
  add_inplace(grads.V_c, matmul_tn(t.m, g.da_c));

  Matrix dx_sub = matmul_nt(g.da_f, p.base.W_f);
  add_inplace(dx_sub, matmul_nt(g.da_i, p.base.W_i));
  add_inplace(dx_sub, matmul_nt(g.da_o, p.base.W_o));
  add_inplace(dx_sub, matmul_nt(g.da_c, p.base.W_c));
  Matrix dh_prev = matmul_nt(g.da_f, p.base.U_f);
  add_inplace(dh_prev, matmul_nt(g.da_i, p.base.U_i));
  add_inplace(dh_prev, matmul_nt(g.da_o, p.base.U_o));
  add_inplace(dh_prev, matmul_nt(g.da_c, p.base.U_c));

  // Split the substitution x_sub = m.x_raw + (1-m).x_inf.
  Matrix dx_raw(dx_sub.rows(), dx_sub.cols());
  Matrix dx_inf(dx_sub.rows(), dx_sub.cols());
  for (std::size_t k = 0; k < dx_sub.size(); ++k) {
    const double mk = t.m.data()[k];
    dx_raw.data()[k] = mk * dx_sub.data()[k];
    dx_inf.data()[k] = (1.0 - mk) * dx_sub.data()[k];
  }
  if (dx_inf_extra != nullptr) add_inplace(dx_inf, *dx_inf_extra);

  // Through the imputation unit into its weights and the preceding state.
  Matrix da_inf = hadamard(dx_inf, sigmoid_grad_from_output(t.x_inf));
  add_inplace(grads.W_imp, matmul_tn(t.C_prev, da_inf));
  add_inplace(grads.U_imp, matmul_tn(t.h_prev, da_inf));
  add_inplace(grads.b_imp, col_sums(da_inf));
  add_inplace(g.dC_prev, matmul_nt(da_inf, p.W_imp));
  add_inplace(dh_prev, matmul_nt(da_inf, p.U_imp));

  return CellStepInputGrads{std::move(dx_raw), std::move(dh_prev), std::move(g.dC_prev)};
}

}  // namespace rnnif
