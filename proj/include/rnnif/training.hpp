#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rnnif/data.hpp"
#include "rnnif/network.hpp"

namespace rnnif {

/// Adam optimizer state: first/second moment accumulators mirroring the
/// parameter tensors, plus the step counter.
struct AdamState {
  ModelGrads m, v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;

  static AdamState init(const Model& model, double lr) {
    AdamState s;
    s.m = make_grads_like(model);
    s.v = make_grads_like(model);
    s.lr = lr;
    return s;
  }
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(AdamState& opt, Model& model, const ModelGrads& grads) {
  auto params = named_tensors(model.params);
  auto g = named_tensors(const_cast<ModelGrads&>(grads));
  auto m = named_tensors(opt.m);
  auto v = named_tensors(opt.v);
  if (params.size() != g.size() || params.size() != m.size())
    throw ShapeError("adam_step: tensor count mismatch");

  opt.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].second;
    const Matrix& gi = *g[i].second;
    Matrix& mi = *m[i].second;
    Matrix& vi = *v[i].second;
    if (!p.same_shape(gi))
      throw ShapeError("adam_step: " + params[i].first + " is " + p.shape_str() +
                       " but gradient is " + gi.shape_str());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double grad = gi.data()[k];
      mi.data()[k] = opt.beta1 * mi.data()[k] + (1.0 - opt.beta1) * grad;
      vi.data()[k] = opt.beta2 * vi.data()[k] + (1.0 - opt.beta2) * grad * grad;
      const double mhat = mi.data()[k] / bc1;
      const double vhat = vi.data()[k] / bc2;
      p.data()[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

/// Learning-rate decay and early stopping driven by validation loss. An
/// epoch qualifies as an improvement when the loss drops below the running
/// best by at least improvement_threshold; the threshold and patience are
/// shared by decay and stopping. Five consecutive non-qualifying epochs
/// divide the rate by 10; once at the floor, the same condition stops
/// training. `stopped` is absorbing.
struct ScheduleState {
  double initial_lr = 1e-3;
  double current_lr = 1e-3;
  double improvement_threshold = 1e-5;
  double lr_floor = 1e-5;
  int patience = 5;
  int counter = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped = false;
};

inline ScheduleState schedule_update(ScheduleState s, double val_loss) {
  if (!std::isfinite(val_loss)) throw NumericError("schedule_update: non-finite validation loss");
  if (s.stopped) return s;
  const double improvement = s.best_val_loss - val_loss;
  if (val_loss < s.best_val_loss) s.best_val_loss = val_loss;
  if (improvement >= s.improvement_threshold) {
    s.counter = 0;
    return s;
  }
  s.counter += 1;
  if (s.counter >= s.patience) {
    s.counter = 0;
    if (s.current_lr <= s.lr_floor) {
      s.stopped = true;
    } else {
      s.current_lr /= 10.0;
      if (s.current_lr < s.lr_floor) s.current_lr = s.lr_floor;
    }
  }
  return s;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

inline void write_epoch_log_csv(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  for (const EpochRecord& r : log) {
    char secs[32];
    std::snprintf(secs, sizeof(secs), "%.3f", r.seconds);
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss)
        << ',' << format_double(r.lr) << ',' << secs << '\n';
  }
}

/// Mean squared prediction error over a dataset, in model units.
inline double validation_mse(const Model& model, const WindowedDataset& ds,
                             std::size_t batch_size = 256) {
  if (ds.samples.empty()) throw ConfigError("validation_mse: empty dataset");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    const std::size_t end = std::min(ds.size(), begin + batch_size);
    BatchView batch = assemble_batch(ds, idx, begin, end);
    ForwardResult fwd = forward(model, batch.inputs,
                                model.spec.imputing() ? &batch.masks : nullptr,
                                /*training=*/false);
    for (std::size_t k = 0; k < batch.targets.size(); ++k) {
      const double e = fwd.prediction.data()[k] - batch.targets.data()[k];
      se += e * e;
    }
    n += batch.targets.size();
  }
  return se / static_cast<double>(n);
}

struct TrainConfig {
  std::size_t batch_size = 64;
  int max_epochs = 200;
  double initial_lr = 1e-3;
  std::uint64_t seed = 1;
  // Zeroes the gradients of the mask paths and the imputation unit, keeping
  // those tensors at their initial values. Used to run an imputation-capable
  // stack as if it were plain.
  bool freeze_imputation = false;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> log;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void zero_imputation_grads(ModelGrads& grads) {
  for (auto& dirs : grads)
    for (LstmIParams& g : dirs) {
      if (!g.imputing()) continue;
      g.V_f.fill(0.0);
      g.V_i.fill(0.0);
      g.V_o.fill(0.0);
      g.V_c.fill(0.0);
      g.W_imp.fill(0.0);
      g.U_imp.fill(0.0);
      g.b_imp.fill(0.0);
    }
}

}  // namespace detail

/// Epoch loop: seeded reshuffle, forward/backward/Adam per batch of 64 (last
/// partial batch kept), validation MSE, schedule update. Returns the
/// parameter snapshot with the best validation loss.
inline TrainResult train(Model model, const WindowedDataset& train_set,
                         const WindowedDataset& val_set, const TrainConfig& cfg) {
  if (train_set.samples.empty() || val_set.samples.empty())
    throw ConfigError("train: empty dataset split");
  if (cfg.batch_size == 0) throw ConfigError("train: batch size must be positive");
  model.validate();
  const bool use_masks = model.spec.imputing();

  AdamState opt = AdamState::init(model, cfg.initial_lr);
  ScheduleState sched;
  sched.initial_lr = sched.current_lr = cfg.initial_lr;

  TrainResult result;
  ModelGrads best_params = model.params;
  std::vector<std::size_t> idx(train_set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(cfg.seed + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(idx);

    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    opt.lr = sched.current_lr;
    for (std::size_t begin = 0; begin < idx.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(idx.size(), begin + cfg.batch_size);
      BatchView batch = assemble_batch(train_set, idx, begin, end);
      const std::vector<Matrix>* masks = use_masks ? &batch.masks : nullptr;
      ForwardResult fwd = forward(model, batch.inputs, masks, /*training=*/true);
      LossReport rep = compute_loss(model, fwd, batch.targets, batch.inputs, masks);
      if (!std::isfinite(rep.total))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch starting at sample " + std::to_string(begin));
      ModelGrads grads = backward(model, fwd, batch.targets, batch.inputs, masks);
      if (cfg.freeze_imputation) detail::zero_imputation_grads(grads);
      adam_step(opt, model, grads);
      loss_sum += rep.total * static_cast<double>(end - begin);
      loss_rows += end - begin;
    }

    const double val_loss = validation_mse(model, val_set, cfg.batch_size);
    if (!std::isfinite(val_loss))
      throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      best_params = model.params;
    }
    sched = schedule_update(sched, val_loss);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_rows);
    rec.val_loss = val_loss;
    rec.lr = opt.lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);

    if (sched.stopped) break;
  }

  model.params = std::move(best_params);
  result.model = std::move(model);
  return result;
}

/// Per-tensor comparison of analytic gradients against central finite
/// differences of the total loss.
struct GradCheckReport {
  struct Entry {
    std::string tensor;
    double max_rel_err = 0.0;
  };
  std::vector<Entry> tensors;
  double max_rel_err = 0.0;
  std::string worst_tensor;
  bool pass = false;
};

/// Runs the oracle on a tiny model built from `spec`: a seeded random batch
/// (with a share of inputs hidden when missing_rate > 0) is pushed through
/// forward/loss/backward, then every parameter is perturbed by +-epsilon.
/// Passes when the max relative error is below 1e-4. `corrupt_tensor`, when
/// set, scales that analytic gradient tensor by 2 — a self-test hook proving
/// the checker localizes a wrong gradient.
inline GradCheckReport gradcheck(const ModelSpec& spec, std::uint64_t seed,
                                 double missing_rate = 0.0, double epsilon = 1e-5,
                                 std::size_t window = 3, std::size_t batch = 2,
                                 const std::string& corrupt_tensor = {}) {
  spec.validate();
  if (missing_rate < 0.0 || missing_rate >= 1.0)
    throw ValueError("gradcheck: missing_rate must be in [0,1)");
  if (missing_rate > 0.0 && !spec.imputing())
    throw ConfigError("gradcheck: missing_rate needs an imputation-capable first layer");

  Rng rng(seed);
  Model model = Model::init(spec, rng);
  {
    std::size_t total = 0;
    for (auto& [name, t] : named_tensors(model.params)) total += t->size();
    if (total >= 5000)
      throw ConfigError("gradcheck: spec has " + std::to_string(total) +
                        " parameters; keep it below 5000");
  }

  std::vector<Matrix> inputs(window), masks(window);
  for (std::size_t t = 0; t < window; ++t) {
    inputs[t] = Matrix(batch, spec.input_dim);
    masks[t] = Matrix(batch, spec.input_dim, 1.0);
    for (std::size_t k = 0; k < inputs[t].size(); ++k) inputs[t].data()[k] = rng.uniform01();
    if (missing_rate > 0.0)
      for (std::size_t k = 0; k < masks[t].size(); ++k)
        if (rng.uniform01() < missing_rate) {
          masks[t].data()[k] = 0.0;
          inputs[t].data()[k] = 0.0;  // missing sentinel
        }
  }
  Matrix target(batch, spec.input_dim);
  for (std::size_t k = 0; k < target.size(); ++k) target.data()[k] = rng.uniform01();
  const std::vector<Matrix>* mask_ptr = spec.imputing() ? &masks : nullptr;

  ForwardResult fwd = forward(model, inputs, mask_ptr, /*training=*/true);
  ModelGrads analytic = backward(model, fwd, target, inputs, mask_ptr);
  if (!corrupt_tensor.empty()) {
    bool found = false;
    for (auto& [name, t] : named_tensors(analytic))
      if (name == corrupt_tensor) {
        for (std::size_t k = 0; k < t->size(); ++k) t->data()[k] *= 2.0;
        found = true;
      }
    if (!found) throw ValueError("gradcheck: no tensor named '" + corrupt_tensor + "'");
  }

  auto loss_at = [&](const Model& m) {
    ForwardResult f = forward(m, inputs, mask_ptr, /*training=*/false);
    return compute_loss(m, f, target, inputs, mask_ptr).total;
  };

  GradCheckReport report;
  auto params = named_tensors(model.params);
  auto grads = named_tensors(analytic);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].second;
    const Matrix& g = *grads[i].second;
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + epsilon;
      const double up = loss_at(model);
      p.data()[k] = saved - epsilon;
      const double down = loss_at(model);
      p.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic_v = g.data()[k];
      const double denom =
          std::max({std::abs(analytic_v), std::abs(numeric), 1e-5});
      const double rel = std::abs(analytic_v - numeric) / denom;
      if (rel > worst) worst = rel;
    }
    report.tensors.push_back({params[i].first, worst});
    if (worst > report.max_rel_err) {
      report.max_rel_err = worst;
      report.worst_tensor = params[i].first;
    }
  }
  report.pass = report.max_rel_err < 1e-4;
  return report;
}

}  // namespace rnnif
