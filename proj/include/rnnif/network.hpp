#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rnnif/layer.hpp"

namespace rnnif {

/// Declarative description of a stacked network: ordered layer descriptors,
/// the sensor dimension D, and the imputation penalty lambda.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<LayerDescriptor> layers;
  double lambda = 0.01;

  void validate() const {
    if (input_dim == 0) throw ConfigError("model spec: input dimension must be positive");
    if (layers.empty()) throw ConfigError("model spec: at least one layer required");
    if (lambda < 0.0) throw ConfigError("model spec: lambda must be >= 0");
    if (layers.front().input_dim != input_dim)
      throw ConfigError("model spec: first layer input width " +
                        std::to_string(layers.front().input_dim) + " != D=" +
                        std::to_string(input_dim));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].hidden == 0)
        throw ConfigError("model spec: layer " + std::to_string(l) + " has zero hidden width");
      if (l > 0 && layers[l].kind == CellKind::lstm_i)
        throw ConfigError(
            "model spec: an imputation-capable layer must be the first layer of the stack "
            "(layer " + std::to_string(l) + " is " + to_string(layers[l].kind) + ")");
      if (l > 0 && layers[l].input_dim != layers[l - 1].output_dim())
        throw ConfigError("model spec: layer " + std::to_string(l) + " input width " +
                          std::to_string(layers[l].input_dim) + " != previous output width " +
                          std::to_string(layers[l - 1].output_dim()));
    }
    if (layers.back().output_dim() != input_dim)
      throw ConfigError("model spec: last layer output width " +
                        std::to_string(layers.back().output_dim()) +
                        " != D=" + std::to_string(input_dim) +
                        " (the prediction is a D-vector)");
  }

  bool imputing() const { return !layers.empty() && layers.front().imputing(); }
};

/// Stack grammar: '+'-separated units of {lstm, lstmi, bdlstm, bdlstmi}, each
/// optionally repeated with '*n'. E.g. "bdlstm*2", "bdlstmi+bdlstm".
inline std::vector<std::pair<CellKind, Direction>> parse_stack_grammar(const std::string& text) {
  std::vector<std::pair<CellKind, Direction>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t plus = text.find('+', pos);
    std::string unit = text.substr(pos, plus == std::string::npos ? plus : plus - pos);
    std::size_t reps = 1;
    if (std::size_t star = unit.find('*'); star != std::string::npos) {
      const std::string count = unit.substr(star + 1);
      unit = unit.substr(0, star);
      try {
        reps = std::stoul(count);
      } catch (const std::exception&) {
        throw ParseError("model spec grammar: bad repeat count '" + count + "'");
      }
      if (reps == 0) throw ParseError("model spec grammar: repeat count must be >= 1");
    }
    CellKind kind;
    Direction dir;
    if (unit == "lstm") {
      kind = CellKind::lstm;
      dir = Direction::uni;
    } else if (unit == "lstmi") {
      kind = CellKind::lstm_i;
      dir = Direction::uni;
    } else if (unit == "bdlstm") {
      kind = CellKind::lstm;
      dir = Direction::bi;
    } else if (unit == "bdlstmi") {
      kind = CellKind::lstm_i;
      dir = Direction::bi;
    } else {
      throw ParseError("model spec grammar: unknown unit '" + unit +
                       "' (valid: lstm, lstmi, bdlstm, bdlstmi)");
    }
    for (std::size_t r = 0; r < reps; ++r) out.emplace_back(kind, dir);
    if (plus == std::string::npos) break;
    pos = plus + 1;
  }
  if (out.empty()) throw ParseError("model spec grammar: empty spec");
  return out;
}

/// Builds a ModelSpec from the grammar. All layers use the requested hidden
/// width except the last, whose width is forced so the stack emits a D-vector.
inline ModelSpec make_model_spec(const std::string& grammar, std::size_t input_dim,
                                 std::size_t hidden, Combine combine = Combine::average,
                                 double lambda = 0.01) {
  const auto units = parse_stack_grammar(grammar);
  ModelSpec spec;
  spec.input_dim = input_dim;
  spec.lambda = lambda;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < units.size(); ++l) {
    LayerDescriptor d;
    d.kind = units[l].first;
    d.direction = units[l].second;
    d.combine = combine;
    d.input_dim = in;
    d.hidden = hidden == 0 ? input_dim : hidden;
    if (l + 1 == units.size()) {
      // Output layer must emit D values.
      if (d.direction == Direction::bi && d.combine == Combine::concat) {
        if (input_dim % 2 != 0)
          throw ConfigError("model spec: concat output layer needs an even D, got " +
                            std::to_string(input_dim));
        d.hidden = input_dim / 2;
      } else {
        d.hidden = input_dim;
      }
    }
    in = d.output_dim();
    spec.layers.push_back(d);
  }
  spec.validate();
  return spec;
}

/// A spec plus per-layer parameter sets: one set for unidirectional layers,
/// forward and backward sets for bidirectional ones.
struct Model {
  ModelSpec spec;
  std::vector<std::vector<LstmIParams>> params;  // [layer][direction]

  static Model init(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    Model m;
    m.spec = spec;
    for (const LayerDescriptor& d : spec.layers) {
      std::vector<LstmIParams> dirs;
      const std::size_t ndir = d.direction == Direction::bi ? 2 : 1;
      for (std::size_t k = 0; k < ndir; ++k)
        dirs.push_back(LstmIParams::init(d.input_dim, d.hidden, d.imputing(), rng));
      m.params.push_back(std::move(dirs));
    }
    return m;
  }

  void validate() const {
    spec.validate();
    if (params.size() != spec.layers.size())
      throw ConfigError("model: " + std::to_string(params.size()) + " parameter sets for " +
                        std::to_string(spec.layers.size()) + " layers");
    for (std::size_t l = 0; l < params.size(); ++l) {
      const LayerDescriptor& d = spec.layers[l];
      const std::size_t ndir = d.direction == Direction::bi ? 2 : 1;
      if (params[l].size() != ndir)
        throw ConfigError("model: layer " + std::to_string(l) + " has " +
                          std::to_string(params[l].size()) + " direction sets, expected " +
                          std::to_string(ndir));
      for (const LstmIParams& p : params[l]) {
        p.validate();
        if (p.input_dim() != d.input_dim || p.hidden() != d.hidden || p.imputing() != d.imputing())
          throw ConfigError("model: layer " + std::to_string(l) +
                            " parameter shapes do not match its descriptor");
      }
    }
  }
};

/// Gradient (or optimizer-moment) container mirroring Model::params.
using ModelGrads = std::vector<std::vector<LstmIParams>>;

inline ModelGrads make_grads_like(const Model& model) {
  ModelGrads g;
  for (std::size_t l = 0; l < model.spec.layers.size(); ++l) {
    const LayerDescriptor& d = model.spec.layers[l];
    std::vector<LstmIParams> dirs;
    for (std::size_t k = 0; k < model.params[l].size(); ++k)
      dirs.push_back(LstmIParams::zeros(d.input_dim, d.hidden, d.imputing()));
    g.push_back(std::move(dirs));
  }
  return g;
}

/// Flat view of every tensor in a parameter/gradient container, in a fixed
/// order with hierarchical names ("layer0.fwd.W_f"). Containers of identical
/// structure yield aligned views.
inline std::vector<std::pair<std::string, Matrix*>> named_tensors(
    std::vector<std::vector<LstmIParams>>& container) {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (std::size_t l = 0; l < container.size(); ++l) {
    for (std::size_t k = 0; k < container[l].size(); ++k) {
      const std::string prefix =
          "layer" + std::to_string(l) + (k == 0 ? ".fwd." : ".bwd.");
      for_each_tensor(container[l][k],
                      [&](const char* name, Matrix& m) { out.emplace_back(prefix + name, &m); });
    }
  }
  return out;
}

struct ForwardResult {
  Matrix prediction;                       // batch x D, last step of the last layer
  std::vector<LayerOutput> layer_outputs;  // one per layer; tapes inside when training
  bool training = false;
};

/// Runs the stack over a window. Each layer's full output sequence feeds the
/// next layer; the prediction is the final step of the last layer.
inline ForwardResult forward(const Model& model, const std::vector<Matrix>& inputs,
                             const std::vector<Matrix>* masks, bool training) {
  if (inputs.empty()) throw ShapeError("forward: empty input window");
  if (inputs[0].cols() != model.spec.input_dim)
    throw ConfigError("forward: input width " + std::to_string(inputs[0].cols()) +
                      " != model D=" + std::to_string(model.spec.input_dim));
  if (model.spec.imputing() && masks == nullptr)
    throw ConfigError("forward: model imputes missing values; masks are required");
  if (!model.spec.imputing() && masks != nullptr)
    throw ConfigError("forward: masks supplied to a model without an imputation layer");

  ForwardResult res;
  res.training = training;
  const std::vector<Matrix>* current = &inputs;
  for (std::size_t l = 0; l < model.spec.layers.size(); ++l) {
    const LayerDescriptor& d = model.spec.layers[l];
    const std::vector<Matrix>* layer_masks = (l == 0 && d.imputing()) ? masks : nullptr;
    LayerOutput out =
        d.direction == Direction::bi
            ? run_bi(d, model.params[l][0], model.params[l][1], *current, layer_masks, training)
            : run_uni(d, model.params[l][0], *current, layer_masks, training);
    res.layer_outputs.push_back(std::move(out));
    current = &res.layer_outputs.back().sequence;
  }
  res.prediction = res.layer_outputs.back().sequence.back();
  return res;
}

/// Loss decomposition for one batch: mean squared prediction error plus the
/// lambda-weighted absolute imputation error of the first layer, summed over
/// steps and observed entries and divided by the batch size.
struct LossReport {
  double prediction_mse = 0.0;
  double imputation_l1 = 0.0;
  double total = 0.0;
  Matrix predictions;
};

inline LossReport compute_loss(const Model& model, const ForwardResult& fwd, const Matrix& target,
                               const std::vector<Matrix>& inputs,
                               const std::vector<Matrix>* masks) {
  check_same_shape(fwd.prediction, target, "loss: prediction vs target");
  const double n = static_cast<double>(target.size());
  const double batch = static_cast<double>(target.rows());

  LossReport rep;
  rep.predictions = fwd.prediction;
  double se = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double e = fwd.prediction.data()[k] - target.data()[k];
    se += e * e;
  }
  rep.prediction_mse = se / n;

  if (model.spec.imputing()) {
    const LayerOutput& first = fwd.layer_outputs.front();
    const bool bi = model.spec.layers.front().direction == Direction::bi;
    double l1 = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const Matrix& x = inputs[t];
      const Matrix& m = (*masks)[t];
      const Matrix& inf_f = first.fwd_inferred[t];
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (m.data()[k] == 0.0) continue;  // only observed entries score the unit
        if (bi) {
          const Matrix& inf_b = first.bwd_inferred[t];
          l1 += 0.5 * (std::abs(x.data()[k] - inf_f.data()[k]) +
                       std::abs(x.data()[k] - inf_b.data()[k]));
        } else {
          l1 += std::abs(x.data()[k] - inf_f.data()[k]);
        }
      }
    }
    rep.imputation_l1 = l1 / batch;
  }
  rep.total = rep.prediction_mse + model.spec.lambda * rep.imputation_l1;
  return rep;
}

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// d(total)/d(inferred slab) for one direction of the first layer: the
// regularizer is (lambda/batch) * weight * |x - x_inf| at observed entries.
inline std::vector<Matrix> regularizer_inferred_grads(const std::vector<Matrix>& inputs,
                                                      const std::vector<Matrix>& masks,
                                                      const std::vector<Matrix>& inferred,
                                                      double lambda, double weight,
                                                      double batch) {
  const double c = lambda * weight / batch;
  std::vector<Matrix> out(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Matrix g(inputs[t].rows(), inputs[t].cols());
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (masks[t].data()[k] != 0.0)
        g.data()[k] = c * sign(inferred[t].data()[k] - inputs[t].data()[k]);
    }
    out[t] = std::move(g);
  }
  return out;
}

}  // namespace detail

/// Exact gradient of the total loss with respect to every parameter,
/// including the regularizer path into the imputation unit and, through it,
/// into earlier-step cell parameters.
inline ModelGrads backward(const Model& model, const ForwardResult& fwd, const Matrix& target,
                           const std::vector<Matrix>& inputs, const std::vector<Matrix>* masks) {
  if (!fwd.training) throw StateError("backward: forward pass was not run in training mode");
  const std::size_t T = inputs.size();
  const std::size_t batch = target.rows();
  ModelGrads grads = make_grads_like(model);

  // d(mse)/d(prediction), applied at the final step of the last layer.
  Matrix dpred = sub(fwd.prediction, target);
  const double c = 2.0 / static_cast<double>(target.size());
  for (std::size_t k = 0; k < dpred.size(); ++k) dpred.data()[k] *= c;

  std::vector<Matrix> grad_seq(T);
  const std::size_t last = model.spec.layers.size() - 1;
  for (std::size_t t = 0; t < T; ++t)
    grad_seq[t] = Matrix(batch, model.spec.layers[last].output_dim());
  grad_seq[T - 1] = std::move(dpred);

  for (std::size_t l = model.spec.layers.size(); l-- > 0;) {
    const LayerDescriptor& d = model.spec.layers[l];
    const LayerOutput& out = fwd.layer_outputs[l];

    std::vector<Matrix> inj_fwd, inj_bwd;
    const std::vector<Matrix>*inj_fwd_p = nullptr, *inj_bwd_p = nullptr;
    if (l == 0 && d.imputing() && model.spec.lambda != 0.0) {
      const double w = d.direction == Direction::bi ? 0.5 : 1.0;
      inj_fwd = detail::regularizer_inferred_grads(inputs, *masks, out.fwd_inferred,
                                                   model.spec.lambda, w,
                                                   static_cast<double>(batch));
      inj_fwd_p = &inj_fwd;
      if (d.direction == Direction::bi) {
        inj_bwd = detail::regularizer_inferred_grads(inputs, *masks, out.bwd_inferred,
                                                     model.spec.lambda, w,
                                                     static_cast<double>(batch));
        inj_bwd_p = &inj_bwd;
      }
    }

    std::vector<Matrix> grad_inputs =
        d.direction == Direction::bi
            ? run_bi_backward(d, model.params[l][0], model.params[l][1], out, grad_seq, inj_fwd_p,
                              inj_bwd_p, grads[l][0], grads[l][1])
            : run_uni_backward(d, model.params[l][0], out, grad_seq, inj_fwd_p, grads[l][0]);
    grad_seq = std::move(grad_inputs);
  }
  return grads;
}

/// Inference on a single window (T x D values, optional T x D mask). Returns
/// the 1 x D one-step-ahead prediction in model units.
inline Matrix predict(const Model& model, const Matrix& window, const Matrix* mask) {
  if (window.cols() != model.spec.input_dim)
    throw ShapeError("predict: window width " + std::to_string(window.cols()) + " != D=" +
                     std::to_string(model.spec.input_dim));
  if (mask != nullptr) check_same_shape(window, *mask, "predict: window vs mask");
  if (!model.spec.imputing() && mask != nullptr)
    throw ConfigError("predict: mask supplied to a model without an imputation layer");

  const std::size_t T = window.rows();
  std::vector<Matrix> inputs(T);
  std::vector<Matrix> masks(T);
  for (std::size_t t = 0; t < T; ++t) {
    inputs[t] = Matrix(1, window.cols());
    for (std::size_t d = 0; d < window.cols(); ++d) inputs[t](0, d) = window(t, d);
    if (model.spec.imputing()) {
      masks[t] = Matrix(1, window.cols(), 1.0);
      if (mask != nullptr)
        for (std::size_t d = 0; d < window.cols(); ++d) masks[t](0, d) = (*mask)(t, d);
    }
  }
  ForwardResult res =
      forward(model, inputs, model.spec.imputing() ? &masks : nullptr, /*training=*/false);
  return res.prediction;
}

}  // namespace rnnif
