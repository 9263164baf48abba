#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rnnif/data.hpp"
#include "rnnif/network.hpp"

namespace rnnif {

/// Prediction scores over n truth/prediction pairs, in original units (mph).
/// MAPE is undefined (flagged) when any in-scope truth value is zero; MAE and
/// RMSE are always computed.
struct MetricReport {
  double mae = 0.0;
  double mape = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  bool mape_defined = true;

  std::string csv_line() const {
    return format_double(mae) + "," + (mape_defined ? format_double(mape) : "undefined") + "," +
           format_double(rmse) + "," + std::to_string(n);
  }
};

inline MetricReport metrics(const std::vector<double>& truth, const std::vector<double>& pred,
                            const std::vector<std::uint8_t>* scope = nullptr) {
  if (truth.size() != pred.size())
    throw ShapeError("metrics: " + std::to_string(truth.size()) + " truths vs " +
                     std::to_string(pred.size()) + " predictions");
  if (scope != nullptr && scope->size() != truth.size())
    throw ShapeError("metrics: scope mask length mismatch");

  MetricReport r;
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (scope != nullptr && (*scope)[i] == 0) continue;
    const double e = truth[i] - pred[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (truth[i] == 0.0)
      r.mape_defined = false;
    else
      pct_sum += std::abs(e / truth[i]);
    r.n += 1;
  }
  if (r.n == 0) throw ValueError("metrics: empty scope");
  const double n = static_cast<double>(r.n);
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.mape = r.mape_defined ? 100.0 * pct_sum / n : std::numeric_limits<double>::quiet_NaN();
  return r;
}

/// One-step-ahead scores of a model over a dataset, denormalized to mph.
inline MetricReport evaluate_predictions(const Model& model, const WindowedDataset& ds,
                                         const Normalizer& norm, std::size_t batch_size = 256) {
  if (ds.samples.empty()) throw ValueError("evaluate_predictions: empty dataset");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<double> truth, pred;
  truth.reserve(ds.size() * ds.stations);
  pred.reserve(ds.size() * ds.stations);
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    const std::size_t end = std::min(ds.size(), begin + batch_size);
    BatchView batch = assemble_batch(ds, idx, begin, end);
    ForwardResult fwd = forward(model, batch.inputs,
                                model.spec.imputing() ? &batch.masks : nullptr,
                                /*training=*/false);
    for (std::size_t k = 0; k < batch.targets.size(); ++k) {
      truth.push_back(norm.denormalize(batch.targets.data()[k]));
      pred.push_back(norm.denormalize(fwd.prediction.data()[k]));
    }
  }
  return metrics(truth, pred);
}

/// Sanity floor: repeat each window's last observed value per station (falls
/// back to 0 when a station has no observation in the window).
inline MetricReport persistence_metrics(const WindowedDataset& ds, const Normalizer& norm) {
  if (ds.samples.empty()) throw ValueError("persistence_metrics: empty dataset");
  std::vector<double> truth, pred;
  truth.reserve(ds.size() * ds.stations);
  pred.reserve(ds.size() * ds.stations);
  for (const SequenceSample& s : ds.samples) {
    for (std::size_t d = 0; d < ds.stations; ++d) {
      double last = 0.0;
      for (std::size_t t = ds.window; t-- > 0;) {
        if (s.mask(t, d) != 0.0) {
          last = s.input(t, d);
          break;
        }
      }
      truth.push_back(norm.denormalize(s.target(0, d)));
      pred.push_back(norm.denormalize(last));
    }
  }
  return metrics(truth, pred);
}

/// Imputation quality: runs the model over the corrupted dataset, collects
/// the inferred values at artificially corrupted positions (observed in the
/// pristine dataset, missing in the corrupted one; averaged across the two
/// directions for a bidirectional first layer), and scores them against the
/// pristine truth in mph.
inline MetricReport imputation_metrics(const Model& model, const WindowedDataset& corrupted,
                                       const WindowedDataset& pristine, const Normalizer& norm,
                                       std::size_t batch_size = 256) {
  if (!model.spec.imputing())
    throw ConfigError("imputation_metrics: model has no imputation layer");
  if (corrupted.size() != pristine.size() || corrupted.window != pristine.window ||
      corrupted.stations != pristine.stations)
    throw ShapeError("imputation_metrics: corrupted and pristine datasets are not aligned");
  const bool bi = model.spec.layers.front().direction == Direction::bi;

  std::vector<std::size_t> idx(corrupted.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<double> truth, pred;
  for (std::size_t begin = 0; begin < corrupted.size(); begin += batch_size) {
    const std::size_t end = std::min(corrupted.size(), begin + batch_size);
    BatchView batch = assemble_batch(corrupted, idx, begin, end);
    ForwardResult fwd = forward(model, batch.inputs, &batch.masks, /*training=*/false);
    const LayerOutput& first = fwd.layer_outputs.front();
    for (std::size_t r = 0; r < end - begin; ++r) {
      const SequenceSample& pris = pristine.samples[idx[begin + r]];
      const SequenceSample& corr = corrupted.samples[idx[begin + r]];
      for (std::size_t t = 0; t < corrupted.window; ++t)
        for (std::size_t d = 0; d < corrupted.stations; ++d) {
          if (corr.mask(t, d) != 0.0 || pris.mask(t, d) == 0.0) continue;
          double inferred = first.fwd_inferred[t](r, d);
          if (bi) inferred = 0.5 * (inferred + first.bwd_inferred[t](r, d));
          truth.push_back(norm.denormalize(pris.input(t, d)));
          pred.push_back(norm.denormalize(inferred));
        }
    }
  }
  if (truth.empty()) throw ValueError("imputation_metrics: empty scope (no corrupted positions)");
  return metrics(truth, pred);
}

}  // namespace rnnif
