#pragma once

#include <cstdlib>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "rnnif/cell.hpp"

namespace rnnif {

enum class CellKind { lstm, lstm_i };
enum class Direction { uni, bi };
enum class Combine { average, sum, concat };

inline const char* to_string(CellKind k) { return k == CellKind::lstm ? "lstm" : "lstm_i"; }
inline const char* to_string(Direction d) { return d == Direction::uni ? "uni" : "bi"; }
inline const char* to_string(Combine c) {
  switch (c) {
    case Combine::average: return "average";
    case Combine::sum: return "sum";
    default: return "concat";
  }
}

struct LayerDescriptor {
  CellKind kind = CellKind::lstm;
  Direction direction = Direction::uni;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  Combine combine = Combine::average;

  bool imputing() const { return kind == CellKind::lstm_i; }
  std::size_t output_dim() const {
    return (direction == Direction::bi && combine == Combine::concat) ? 2 * hidden : hidden;
  }
};

/// Unrolled result of one layer over a T-step window. sequence[t] is the
/// layer's emitted output at step t (combined across directions for
/// bidirectional layers). Inferred slabs are indexed by original time and
/// present only for imputation-capable layers; tapes only in training mode.
struct LayerOutput {
  std::vector<Matrix> sequence;
  std::vector<Matrix> fwd_inferred;
  std::vector<Matrix> bwd_inferred;
  bool training = false;
  std::vector<CellTape> fwd_tapes;  // processing order
  std::vector<CellTape> bwd_tapes;  // processing order (reversed time)
};

/// Number of worker threads the library may use; RNNIF_THREADS, default 1.
inline unsigned thread_cap() {
  const char* env = std::getenv("RNNIF_THREADS");
  if (env == nullptr) return 1;
  const long v = std::atol(env);
  return v < 1 ? 1u : static_cast<unsigned>(v);
}

inline Matrix combine_outputs(const Matrix& fwd, const Matrix& bwd, Combine mode) {
  switch (mode) {
    case Combine::average:
      return scale(add(fwd, bwd), 0.5);
    case Combine::sum:
      return add(fwd, bwd);
    case Combine::concat: {
      check_same_shape(fwd, bwd, "combine concat");
      Matrix out(fwd.rows(), 2 * fwd.cols());
      for (std::size_t r = 0; r < fwd.rows(); ++r) {
        for (std::size_t c = 0; c < fwd.cols(); ++c) {
          out(r, c) = fwd(r, c);
          out(r, c + fwd.cols()) = bwd(r, c);
        }
      }
      return out;
    }
  }
  throw ConfigError("combine_outputs: unknown mode");
}

/// Splits the gradient of a combined output across the two branches.
inline void split_combined_grad(const Matrix& dy, Combine mode, std::size_t hidden, Matrix& dfwd,
                                Matrix& dbwd) {
  switch (mode) {
    case Combine::average:
      dfwd = scale(dy, 0.5);
      dbwd = dfwd;
      return;
    case Combine::sum:
      dfwd = dy;
      dbwd = dy;
      return;
    case Combine::concat: {
      if (dy.cols() != 2 * hidden)
        throw ShapeError("split_combined_grad: " + dy.shape_str() + " for hidden " +
                         std::to_string(hidden));
      dfwd = Matrix(dy.rows(), hidden);
      dbwd = Matrix(dy.rows(), hidden);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < hidden; ++c) {
          dfwd(r, c) = dy(r, c);
          dbwd(r, c) = dy(r, c + hidden);
        }
      return;
    }
  }
  throw ConfigError("split_combined_grad: unknown mode");
}

namespace detail {

struct BranchRun {
  std::vector<Matrix> outputs;   // per processing step
  std::vector<Matrix> inferred;  // per processing step (imputing only)
  std::vector<CellTape> tapes;   // per processing step (training only)
};

// Runs one direction over the window. reversed selects processing order
// T-1..0; outputs/tapes stay in processing order.
inline BranchRun run_branch(const LayerDescriptor& desc, const LstmIParams& params,
                            const std::vector<Matrix>& inputs, const std::vector<Matrix>* masks,
                            bool reversed, bool training) {
  const std::size_t T = inputs.size();
  const std::size_t batch = T == 0 ? 0 : inputs[0].rows();
  BranchRun run;
  run.outputs.reserve(T);
  if (training) run.tapes.resize(T);
  if (desc.imputing()) run.inferred.reserve(T);

  CellState state = CellState::zeros(batch, desc.hidden);
  for (std::size_t j = 0; j < T; ++j) {
    const std::size_t t = reversed ? T - 1 - j : j;
    CellTape* tape = training ? &run.tapes[j] : nullptr;
    if (desc.imputing()) {
      LstmIStepResult r = lstmi_step(params, inputs[t], (*masks)[t], state, tape);
      state = std::move(r.state);
      run.inferred.push_back(std::move(r.x_inf));
    } else {
      state = lstm_step(params.base, inputs[t], state, tape);
    }
    run.outputs.push_back(state.h);
  }
  return run;
}

inline void check_layer_inputs(const LayerDescriptor& desc, const std::vector<Matrix>& inputs,
                               const std::vector<Matrix>* masks) {
  if (inputs.empty()) throw ShapeError("layer: empty input window");
  if (desc.imputing() && masks == nullptr)
    throw ConfigError("layer: imputation-capable layer requires masks");
  if (!desc.imputing() && masks != nullptr)
    throw ConfigError("layer: masks supplied to a plain layer");
  if (masks != nullptr && masks->size() != inputs.size())
    throw ShapeError("layer: " + std::to_string(inputs.size()) + " input steps vs " +
                     std::to_string(masks->size()) + " mask steps");
}

}  // namespace detail

/// Unidirectional layer: h_1..h_T in chronological order from zero initial
/// state.
inline LayerOutput run_uni(const LayerDescriptor& desc, const LstmIParams& params,
                           const std::vector<Matrix>& inputs, const std::vector<Matrix>* masks,
                           bool training) {
  detail::check_layer_inputs(desc, inputs, masks);
  detail::BranchRun run =
      detail::run_branch(desc, params, inputs, masks, /*reversed=*/false, training);
  LayerOutput out;
  out.training = training;
  out.sequence = std::move(run.outputs);
  out.fwd_inferred = std::move(run.inferred);
  out.fwd_tapes = std::move(run.tapes);
  return out;
}

/// Bidirectional layer: an independent forward pass over t=1..T and backward
/// pass over t=T..1; output index t pairs the forward output at t with the
/// backward output computed at the same time index.
inline LayerOutput run_bi(const LayerDescriptor& desc, const LstmIParams& fwd_params,
                          const LstmIParams& bwd_params, const std::vector<Matrix>& inputs,
                          const std::vector<Matrix>* masks, bool training) {
  detail::check_layer_inputs(desc, inputs, masks);
  const std::size_t T = inputs.size();

  detail::BranchRun fwd, bwd;
  if (thread_cap() >= 2) {
    auto bwd_future = std::async(std::launch::async, [&] {
      return detail::run_branch(desc, bwd_params, inputs, masks, /*reversed=*/true, training);
    });
    fwd = detail::run_branch(desc, fwd_params, inputs, masks, /*reversed=*/false, training);
    bwd = bwd_future.get();
  } else {
    fwd = detail::run_branch(desc, fwd_params, inputs, masks, /*reversed=*/false, training);
    bwd = detail::run_branch(desc, bwd_params, inputs, masks, /*reversed=*/true, training);
  }

  LayerOutput out;
  out.training = training;
  out.sequence.reserve(T);
  for (std::size_t t = 0; t < T; ++t)
    out.sequence.push_back(combine_outputs(fwd.outputs[t], bwd.outputs[T - 1 - t], desc.combine));
  if (desc.imputing()) {
    out.fwd_inferred = std::move(fwd.inferred);
    out.bwd_inferred.resize(T);
    for (std::size_t j = 0; j < T; ++j) out.bwd_inferred[T - 1 - j] = std::move(bwd.inferred[j]);
  }
  out.fwd_tapes = std::move(fwd.tapes);
  out.bwd_tapes = std::move(bwd.tapes);
  return out;
}

namespace detail {

// Reverse pass over one branch. dh_out and dx_inf are indexed by processing
// step; returns input gradients per processing step and accumulates parameter
// gradients.
inline std::vector<Matrix> branch_backward(const LayerDescriptor& desc, const LstmIParams& params,
                                           const std::vector<CellTape>& tapes,
                                           const std::vector<Matrix>& dh_out,
                                           const std::vector<Matrix>* dx_inf,
                                           LstmIParams& grads) {
  const std::size_t T = tapes.size();
  const std::size_t batch = T == 0 ? 0 : dh_out[0].rows();
  std::vector<Matrix> dx(T);
  Matrix dh_carry(batch, desc.hidden);
  Matrix dC_carry(batch, desc.hidden);
  for (std::size_t j = T; j-- > 0;) {
    Matrix dh = dh_out[j];
    add_inplace(dh, dh_carry);
    CellStepInputGrads g;
    if (desc.imputing()) {
      const Matrix* inj = dx_inf != nullptr ? &(*dx_inf)[j] : nullptr;
      g = lstmi_step_backward(params, tapes[j], dh, dC_carry, inj, grads);
    } else {
      g = lstm_step_backward(params.base, tapes[j], dh, dC_carry, grads.base);
    }
    dx[j] = std::move(g.dx);
    dh_carry = std::move(g.dh_prev);
    dC_carry = std::move(g.dC_prev);
  }
  return dx;
}

inline void require_tapes(const LayerOutput& out) {
  if (!out.training || out.fwd_tapes.empty())
    throw StateError("layer backward: no training-mode tapes");
}

}  // namespace detail

/// Reverse pass of a unidirectional layer. grad_seq[t] is the loss gradient on
/// sequence[t]; grad_fwd_inferred, when given, injects regularizer gradients
/// on the inferred slabs (original time order). Returns per-step input
/// gradients.
inline std::vector<Matrix> run_uni_backward(const LayerDescriptor& desc,
                                            const LstmIParams& params, const LayerOutput& out,
                                            const std::vector<Matrix>& grad_seq,
                                            const std::vector<Matrix>* grad_fwd_inferred,
                                            LstmIParams& grads) {
  detail::require_tapes(out);
  if (grad_seq.size() != out.sequence.size())
    throw ShapeError("run_uni_backward: gradient sequence length mismatch");
  return detail::branch_backward(desc, params, out.fwd_tapes, grad_seq, grad_fwd_inferred, grads);
}

/// Reverse pass of a bidirectional layer. The combined-output gradient is
/// split per the combine rule (average sends half to each branch), each branch
/// is reversed independently, and per-step input gradients are summed.
inline std::vector<Matrix> run_bi_backward(const LayerDescriptor& desc,
                                           const LstmIParams& fwd_params,
                                           const LstmIParams& bwd_params, const LayerOutput& out,
                                           const std::vector<Matrix>& grad_seq,
                                           const std::vector<Matrix>* grad_fwd_inferred,
                                           const std::vector<Matrix>* grad_bwd_inferred,
                                           LstmIParams& fwd_grads, LstmIParams& bwd_grads) {
  detail::require_tapes(out);
  const std::size_t T = out.sequence.size();
  if (grad_seq.size() != T) throw ShapeError("run_bi_backward: gradient sequence length mismatch");

  std::vector<Matrix> dh_fwd(T), dh_bwd(T);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix df, db;
    split_combined_grad(grad_seq[t], desc.combine, desc.hidden, df, db);
    dh_fwd[t] = std::move(df);
    dh_bwd[T - 1 - t] = std::move(db);  // to processing order
  }
  std::vector<Matrix> bwd_inj;
  const std::vector<Matrix>* bwd_inj_ptr = nullptr;
  if (grad_bwd_inferred != nullptr) {
    bwd_inj.resize(T);
    for (std::size_t t = 0; t < T; ++t) bwd_inj[T - 1 - t] = (*grad_bwd_inferred)[t];
    bwd_inj_ptr = &bwd_inj;
  }

  std::vector<Matrix> dx_fwd, dx_bwd;
  if (thread_cap() >= 2) {
    auto bwd_future = std::async(std::launch::async, [&] {
      return detail::branch_backward(desc, bwd_params, out.bwd_tapes, dh_bwd, bwd_inj_ptr,
                                     bwd_grads);
    });
    dx_fwd = detail::branch_backward(desc, fwd_params, out.fwd_tapes, dh_fwd, grad_fwd_inferred,
                                     fwd_grads);
    dx_bwd = bwd_future.get();
  } else {
    dx_fwd = detail::branch_backward(desc, fwd_params, out.fwd_tapes, dh_fwd, grad_fwd_inferred,
                                     fwd_grads);
    dx_bwd = detail::branch_backward(desc, bwd_params, out.bwd_tapes, dh_bwd, bwd_inj_ptr,
                                     bwd_grads);
  }

  std::vector<Matrix> dx(T);
  for (std::size_t t = 0; t < T; ++t) {
    dx[t] = std::move(dx_fwd[t]);
    add_inplace(dx[t], dx_bwd[T - 1 - t]);
  }
  return dx;
}

}  // namespace rnnif
