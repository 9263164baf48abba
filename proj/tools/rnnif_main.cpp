// rnnif — command-line surface for reproducible traffic-forecasting
// experiments: synthetic data generation, missing-value scenarios, training,
// evaluation, prediction, and gradient checking.
//
// Exit codes: 0 success, 1 computational failure, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rnnif/rnnif.hpp"

namespace {

using namespace rnnif;

// Thrown during the configuration phase of a command; maps to exit code 2.
struct UsageFailure {
  std::string message;
};

// Flat key=value config support: keys are long option names without the
// leading dashes. Values given on the command line win over file values,
// file values win over defaults. The file is expanded into extra argv
// tokens for keys the command line does not mention.
void expand_config_args(std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      break;
    }
  }
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw UsageFailure{"--config: cannot open '" + path + "'"};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageFailure{"--config: " + path + " line " + std::to_string(lineno) +
                         ": expected key=value"};
    const std::string flag = "--" + line.substr(0, eq);
    bool given = false;
    for (const std::string& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (given) continue;
    args.push_back(flag);
    args.push_back(line.substr(eq + 1));
  }
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Every command echoes its effective configuration to a run.config artifact
// alongside its primary output (cwd when the command writes no files).
void write_run_config(const std::string& primary_output, const KeyValues& kv) {
  std::filesystem::path dir =
      primary_output.empty() ? std::filesystem::path(".")
                             : std::filesystem::path(primary_output).parent_path();
  if (dir.empty()) dir = ".";
  const std::filesystem::path path = dir / "run.config";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

std::size_t resolve_hidden(const std::string& text, std::size_t input_dim) {
  try {
    if (text == "D" || text == "d") return input_dim;
    if (!text.empty() && (text.back() == 'D' || text.back() == 'd')) {
      const double f = std::stod(text.substr(0, text.size() - 1));
      if (f <= 0.0) throw UsageFailure{"--hidden: multiplier must be positive"};
      return static_cast<std::size_t>(std::ceil(f * static_cast<double>(input_dim)));
    }
    const long v = std::stol(text);
    if (v <= 0) throw UsageFailure{"--hidden: width must be positive"};
    return static_cast<std::size_t>(v);
  } catch (const UsageFailure&) {
    throw;
  } catch (const std::exception&) {
    throw UsageFailure{"--hidden: cannot parse '" + text + "' (use e.g. 32, D, 0.5D, 2D)"};
  }
}

Combine resolve_combine(const std::string& text) {
  if (text == "average") return Combine::average;
  if (text == "sum") return Combine::sum;
  if (text == "concat") return Combine::concat;
  throw UsageFailure{"--combine: '" + text + "' is not one of average, sum, concat"};
}

ModelSpec build_spec_or_usage(const std::string& grammar, std::size_t input_dim,
                              const std::string& hidden, const std::string& combine,
                              double lambda) {
  try {
    return make_model_spec(grammar, input_dim, resolve_hidden(hidden, input_dim),
                           resolve_combine(combine), lambda);
  } catch (const ParseError& e) {
    throw UsageFailure{std::string("--model-spec: ") + e.what()};
  } catch (const ConfigError& e) {
    throw UsageFailure{std::string("--model-spec: ") + e.what()};
  }
}

// Merges an optional mask sidecar into the native mask; masked-out cells are
// zeroed so the missing sentinel stays consistent.
void apply_mask_sidecar(SpeedMatrix& sm, const std::string& mask_path) {
  if (mask_path.empty()) return;
  const Matrix mask = load_mask_csv(mask_path, sm.steps(), sm.stations());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] == 0.0) {
      sm.native_mask.data()[i] = 0.0;
      sm.values.data()[i] = 0.0;
    }
  }
}

void print_metric_report(std::ostream& os, const MetricReport& r) {
  os << "mae,mape,rmse,n\n" << r.csv_line() << "\n\n";
  char line[96];
  std::snprintf(line, sizeof(line), "%-5s %12.4f mph\n", "MAE", r.mae);
  os << line;
  if (r.mape_defined)
    std::snprintf(line, sizeof(line), "%-5s %12.4f %%\n", "MAPE", r.mape);
  else
    std::snprintf(line, sizeof(line), "%-5s %12s\n", "MAPE", "undefined");
  os << line;
  std::snprintf(line, sizeof(line), "%-5s %12.4f mph\n", "RMSE", r.rmse);
  os << line;
  std::snprintf(line, sizeof(line), "%-5s %12zu\n", "n", r.n);
  os << line;
}

void write_metric_csv(const std::string& path, const MetricReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "mae,mape,rmse,n\n" << r.csv_line() << '\n';
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::size_t stations = 0;
  std::size_t days = 0;
  std::uint64_t seed = 0;
  std::string profile_path;
  std::string out;
};

void run_synth(const SynthArgs& a, const CLI::App* sub) {
  SynthProfile profile;
  if (!a.profile_path.empty()) profile = parse_profile(a.profile_path);
  const std::size_t stations =
      sub->count("--stations") ? a.stations : profile.stations.value_or(10);
  const std::size_t days = sub->count("--days") ? a.days : profile.days.value_or(14);
  const std::uint64_t seed = sub->count("--seed") ? a.seed : profile.seed.value_or(1);

  const SpeedMatrix sm = synth(stations, days, seed, profile);
  save_speed_csv(a.out, sm);
  write_run_config(a.out, {{"command", "synth"},
                           {"stations", std::to_string(stations)},
                           {"days", std::to_string(days)},
                           {"seed", std::to_string(seed)},
                           {"profile", a.profile_path},
                           {"free_flow_mph", format_double(profile.free_flow_mph)},
                           {"peak_dip_mph", format_double(profile.peak_dip_mph)},
                           {"noise_sigma", format_double(profile.noise_sigma)},
                           {"weekend_factor", format_double(profile.weekend_factor)},
                           {"out", a.out}});
}

// ---------------------------------------------------------------------------
// corrupt

struct CorruptArgs {
  std::string in;
  std::string scenario = "random";
  double rate = 0.2;
  std::uint64_t seed = 1;
  std::size_t lags = 10;
  std::string out;
  std::string mask_out;
};

// Applies a missing scenario to consecutive disjoint T-step blocks of the
// series and writes the corrupted values plus the resulting mask sidecar.
void run_corrupt(const CorruptArgs& a) {
  SpeedMatrix sm = load_speed_csv(a.in);
  Matrix mask = sm.native_mask;
  Rng rng(a.seed);
  const std::size_t D = sm.stations();

  for (std::size_t block = 0; block < sm.steps(); block += a.lags) {
    const std::size_t len = std::min(a.lags, sm.steps() - block);
    if (a.scenario == "random") {
      const std::size_t count =
          static_cast<std::size_t>(std::floor(a.rate * static_cast<double>(len * D) + 0.5));
      std::vector<std::size_t> pool;
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t d = 0; d < D; ++d)
          if (mask(block + t, d) != 0.0) pool.push_back((block + t) * D + d);
      if (pool.size() < count)
        throw ValueError("corrupt: block at row " + std::to_string(block) + " has only " +
                         std::to_string(pool.size()) + " observed cells, need " +
                         std::to_string(count));
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        sm.values.data()[pool[i]] = 0.0;
        mask.data()[pool[i]] = 0.0;
      }
    } else {
      const std::size_t count =
          static_cast<std::size_t>(std::floor(a.rate * static_cast<double>(len) + 0.5));
      std::vector<std::size_t> pool;
      for (std::size_t t = 0; t < len; ++t) {
        bool any = false;
        for (std::size_t d = 0; d < D; ++d)
          if (mask(block + t, d) != 0.0) any = true;
        if (any) pool.push_back(block + t);
      }
      if (pool.size() < count)
        throw ValueError("corrupt: block at row " + std::to_string(block) + " has only " +
                         std::to_string(pool.size()) + " rows with observations, need " +
                         std::to_string(count));
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        for (std::size_t d = 0; d < D; ++d) {
          sm.values(pool[i], d) = 0.0;
          mask(pool[i], d) = 0.0;
        }
      }
    }
  }

  // Corrupted cells are written as literal zeros; only native gaps stay empty.
  save_speed_csv(a.out, sm);
  save_mask_csv(a.mask_out, sm.timestamps, sm.station_ids, mask);
  write_run_config(a.out, {{"command", "corrupt"},
                           {"in", a.in},
                           {"scenario", a.scenario},
                           {"rate", format_double(a.rate)},
                           {"seed", std::to_string(a.seed)},
                           {"lags", std::to_string(a.lags)},
                           {"out", a.out},
                           {"mask-out", a.mask_out}});
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string mask;
  std::string model_spec = "bdlstm*2";
  std::string hidden = "D";
  std::string combine = "average";
  double lambda = 0.01;
  std::uint64_t seed = 1;
  std::size_t lags = 10;
  double lr = 1e-3;
  std::size_t batch = 64;
  int max_epochs = 200;
  double missing_rate = 0.0;
  std::string missing_scenario = "random";
  std::uint64_t missing_seed = 1;
  std::string out_ckpt;
  std::string log_path;
};

void run_train(const TrainArgs& a) {
  if (a.missing_rate != 0.0 && !(a.missing_rate > 0.0 && a.missing_rate < 1.0))
    throw UsageFailure{"--missing-rate must be in (0,1)"};

  SpeedMatrix sm = load_speed_csv(a.data);
  apply_mask_sidecar(sm, a.mask);
  const ModelSpec spec =
      build_spec_or_usage(a.model_spec, sm.stations(), a.hidden, a.combine, a.lambda);

  const Normalizer norm = fit_normalizer(sm);
  normalize(sm, norm);
  WindowedDataset ds = make_windows(sm, a.lags);
  if (a.missing_rate > 0.0)
    ds = a.missing_scenario == "random" ? corrupt_random(ds, a.missing_rate, a.missing_seed)
                                        : corrupt_nonrandom(ds, a.missing_rate, a.missing_seed);
  DatasetSplits splits = split_dataset(ds, a.seed);

  Rng rng(a.seed);
  Model model = Model::init(spec, rng);
  TrainConfig cfg;
  cfg.batch_size = a.batch;
  cfg.max_epochs = a.max_epochs;
  cfg.initial_lr = a.lr;
  cfg.seed = a.seed;
  TrainResult result = train(std::move(model), splits.train, splits.val, cfg);

  save_checkpoint(a.out_ckpt, result.model, norm, a.lags);
  if (!a.log_path.empty()) write_epoch_log_csv(a.log_path, result.log);

  const MetricReport test_report = evaluate_predictions(result.model, splits.test, norm);
  std::cout << "epochs " << result.log.size() << ", best validation mse "
            << format_double(result.best_val_loss) << "\ntest-set scores:\n";
  print_metric_report(std::cout, test_report);

  write_run_config(a.out_ckpt, {{"command", "train"},
                                {"data", a.data},
                                {"mask", a.mask},
                                {"model-spec", a.model_spec},
                                {"hidden", a.hidden},
                                {"combine", a.combine},
                                {"lambda", format_double(a.lambda)},
                                {"seed", std::to_string(a.seed)},
                                {"lags", std::to_string(a.lags)},
                                {"lr", format_double(a.lr)},
                                {"batch", std::to_string(a.batch)},
                                {"max-epochs", std::to_string(a.max_epochs)},
                                {"missing-rate", format_double(a.missing_rate)},
                                {"missing-scenario", a.missing_scenario},
                                {"missing-seed", std::to_string(a.missing_seed)},
                                {"max_speed", format_double(norm.max_speed)},
                                {"out-ckpt", a.out_ckpt},
                                {"log", a.log_path}});
}

// ---------------------------------------------------------------------------
// eval / predict / impute-eval / gradcheck

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string mask;
  std::string out;
};

void run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  SpeedMatrix sm = load_speed_csv(a.data);
  apply_mask_sidecar(sm, a.mask);
  normalize(sm, ck.normalizer);
  const WindowedDataset ds = make_windows(sm, ck.window);
  const MetricReport report = evaluate_predictions(ck.model, ds, ck.normalizer);
  print_metric_report(std::cout, report);
  if (!a.out.empty()) write_metric_csv(a.out, report);
  write_run_config(a.out, {{"command", "eval"},
                           {"ckpt", a.ckpt},
                           {"data", a.data},
                           {"mask", a.mask},
                           {"out", a.out}});
}

struct PredictArgs {
  std::string ckpt;
  std::string window;
  std::string mask;
  std::string out;
};

void run_predict(const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  SpeedMatrix sm = load_speed_csv(a.window);
  apply_mask_sidecar(sm, a.mask);
  if (sm.steps() != ck.window)
    throw ValueError("predict: window file has " + std::to_string(sm.steps()) +
                     " rows; the model expects T=" + std::to_string(ck.window));
  normalize(sm, ck.normalizer);

  const Matrix* mask_ptr = ck.model.spec.imputing() ? &sm.native_mask : nullptr;
  Matrix pred = predict(ck.model, sm.values, mask_ptr);
  for (std::size_t d = 0; d < pred.size(); ++d)
    pred.data()[d] = ck.normalizer.denormalize(pred.data()[d]);

  std::ostringstream csv;
  for (std::size_t d = 0; d < sm.station_ids.size(); ++d)
    csv << (d ? "," : "") << sm.station_ids[d];
  csv << '\n';
  for (std::size_t d = 0; d < pred.size(); ++d)
    csv << (d ? "," : "") << format_double(pred.data()[d]);
  csv << '\n';
  std::cout << csv.str();
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    out << csv.str();
  }
  write_run_config(a.out, {{"command", "predict"},
                           {"ckpt", a.ckpt},
                           {"window", a.window},
                           {"mask", a.mask},
                           {"out", a.out}});
}

struct ImputeEvalArgs {
  std::string ckpt;
  std::string corrupted;
  std::string mask;
  std::string pristine;
  std::string out;
};

void run_impute_eval(const ImputeEvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  SpeedMatrix corrupted = load_speed_csv(a.corrupted);
  apply_mask_sidecar(corrupted, a.mask);
  SpeedMatrix pristine = load_speed_csv(a.pristine);
  normalize(corrupted, ck.normalizer);
  normalize(pristine, ck.normalizer);
  const WindowedDataset corrupted_ds = make_windows(corrupted, ck.window);
  const WindowedDataset pristine_ds = make_windows(pristine, ck.window);
  const MetricReport report =
      imputation_metrics(ck.model, corrupted_ds, pristine_ds, ck.normalizer);
  print_metric_report(std::cout, report);
  if (!a.out.empty()) write_metric_csv(a.out, report);
  write_run_config(a.out, {{"command", "impute-eval"},
                           {"ckpt", a.ckpt},
                           {"corrupted", a.corrupted},
                           {"mask", a.mask},
                           {"pristine", a.pristine},
                           {"out", a.out}});
}

struct GradcheckArgs {
  std::string spec = "bdlstmi+bdlstm";
  std::uint64_t seed = 1;
  std::size_t dim = 2;
  std::size_t hidden = 2;
  std::size_t lags = 3;
  std::size_t batch = 2;
  double missing_rate = -1.0;  // resolved by spec kind below
  double lambda = 0.5;
};

int run_gradcheck(const GradcheckArgs& a) {
  const ModelSpec spec = build_spec_or_usage(a.spec, a.dim, std::to_string(a.hidden), "average",
                                             a.lambda);
  const double missing = a.missing_rate >= 0.0 ? a.missing_rate : (spec.imputing() ? 0.3 : 0.0);
  const GradCheckReport report = gradcheck(spec, a.seed, missing, 1e-5, a.lags, a.batch);
  std::printf("%-18s %s\n", "tensor", "max_rel_err");
  for (const auto& e : report.tensors) std::printf("%-18s %.3e\n", e.tensor.c_str(), e.max_rel_err);
  std::printf("%s: max relative error %.3e in %s (threshold 1e-4)\n",
              report.pass ? "PASS" : "FAIL", report.max_rel_err, report.worst_tensor.c_str());
  write_run_config("", {{"command", "gradcheck"},
                        {"spec", a.spec},
                        {"seed", std::to_string(a.seed)},
                        {"dim", std::to_string(a.dim)},
                        {"hidden", std::to_string(a.hidden)},
                        {"lags", std::to_string(a.lags)},
                        {"batch", std::to_string(a.batch)},
                        {"missing-rate", format_double(missing)},
                        {"lambda", format_double(a.lambda)}});
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stacked bidirectional/unidirectional recurrent forecaster for network-wide "
               "traffic state with missing-value imputation"};
  app.require_subcommand(1);
  int exit_code = 0;

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic speed CSV");
  synth_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  synth_cmd->add_option("--stations", synth_args.stations, "number of stations");
  synth_cmd->add_option("--days", synth_args.days, "number of days (288 steps each)");
  synth_cmd->add_option("--seed", synth_args.seed, "noise seed");
  synth_cmd->add_option("--profile", synth_args.profile_path, "key=value profile file")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth_args.out, "output CSV path")->required();
  synth_cmd->callback([&] { run_synth(synth_args, synth_cmd); });

  CorruptArgs corrupt_args;
  CLI::App* corrupt_cmd =
      app.add_subcommand("corrupt", "apply a missing-value scenario to a speed CSV");
  corrupt_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  corrupt_cmd->add_option("--in", corrupt_args.in, "input speed CSV")
      ->required()
      ->check(CLI::ExistingFile);
  corrupt_cmd->add_option("--scenario", corrupt_args.scenario, "missing pattern")
      ->check(CLI::IsMember({"random", "nonrandom"}));
  corrupt_cmd->add_option("--rate", corrupt_args.rate, "missing rate in (0,1)")
      ->check(CLI::Range(0.0, 1.0).description("FLOAT in (0,1)"));
  corrupt_cmd->add_option("--seed", corrupt_args.seed, "corruption seed");
  corrupt_cmd->add_option("--lags", corrupt_args.lags, "window length of the block view");
  corrupt_cmd->add_option("--out", corrupt_args.out, "corrupted CSV path")->required();
  corrupt_cmd->add_option("--mask-out", corrupt_args.mask_out, "mask CSV path")->required();
  corrupt_cmd->callback([&] {
    if (!(corrupt_args.rate > 0.0 && corrupt_args.rate < 1.0))
      throw UsageFailure{"--rate must be in (0,1)"};
    run_corrupt(corrupt_args);
  });

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a speed CSV");
  train_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  train_cmd->add_option("--data", train_args.data, "speed CSV")->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--mask", train_args.mask, "mask CSV sidecar")->check(CLI::ExistingFile);
  train_cmd->add_option("--model-spec", train_args.model_spec,
                        "stack grammar, e.g. lstm, bdlstm*2, bdlstmi+bdlstm");
  train_cmd->add_option("--hidden", train_args.hidden, "hidden width: 32, D, 0.25D..4D");
  train_cmd->add_option("--combine", train_args.combine, "bidirectional combine")
      ->check(CLI::IsMember({"average", "sum", "concat"}));
  train_cmd->add_option("--lambda", train_args.lambda, "imputation penalty");
  train_cmd->add_option("--seed", train_args.seed, "seed for init/split/shuffle");
  train_cmd->add_option("--lags", train_args.lags, "input window length T");
  train_cmd->add_option("--lr", train_args.lr, "initial learning rate");
  train_cmd->add_option("--batch", train_args.batch, "batch size");
  train_cmd->add_option("--max-epochs", train_args.max_epochs, "epoch cap");
  train_cmd->add_option("--missing-rate", train_args.missing_rate,
                        "corrupt input windows at this rate before training");
  train_cmd->add_option("--missing-scenario", train_args.missing_scenario, "missing pattern")
      ->check(CLI::IsMember({"random", "nonrandom"}));
  train_cmd->add_option("--missing-seed", train_args.missing_seed, "corruption seed");
  train_cmd->add_option("--out-ckpt", train_args.out_ckpt, "checkpoint path")->required();
  train_cmd->add_option("--log", train_args.log_path, "epoch log CSV path");
  train_cmd->callback([&] { run_train(train_args); });

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a speed CSV");
  eval_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint path")->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data, "speed CSV")->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--mask", eval_args.mask, "mask CSV sidecar")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_args.out, "metric CSV path");
  eval_cmd->callback([&] { run_eval(eval_args); });

  PredictArgs predict_args;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "one-step-ahead prediction from a T-row window CSV");
  predict_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  predict_cmd->add_option("--ckpt", predict_args.ckpt, "checkpoint path")->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--window", predict_args.window, "window CSV with exactly T rows")
      ->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--mask", predict_args.mask, "mask CSV sidecar")
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", predict_args.out, "prediction CSV path");
  predict_cmd->callback([&] { run_predict(predict_args); });

  ImputeEvalArgs impute_args;
  CLI::App* impute_cmd = app.add_subcommand(
      "impute-eval", "score inferred values at corrupted positions against pristine truth");
  impute_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  impute_cmd->add_option("--ckpt", impute_args.ckpt, "checkpoint path")->required()
      ->check(CLI::ExistingFile);
  impute_cmd->add_option("--corrupted", impute_args.corrupted, "corrupted speed CSV")
      ->required()
      ->check(CLI::ExistingFile);
  impute_cmd->add_option("--mask", impute_args.mask, "mask CSV for the corrupted data")
      ->required()
      ->check(CLI::ExistingFile);
  impute_cmd->add_option("--pristine", impute_args.pristine, "pristine speed CSV")
      ->required()
      ->check(CLI::ExistingFile);
  impute_cmd->add_option("--out", impute_args.out, "metric CSV path");
  impute_cmd->callback([&] { run_impute_eval(impute_args); });

  GradcheckArgs gradcheck_args;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "compare analytic gradients against finite differences");
  gradcheck_cmd->add_option("--config")->description("flat key=value defaults file (flags win)");
  gradcheck_cmd->add_option("--spec", gradcheck_args.spec, "stack grammar");
  gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "seed");
  gradcheck_cmd->add_option("--dim", gradcheck_args.dim, "sensor dimension D");
  gradcheck_cmd->add_option("--hidden", gradcheck_args.hidden, "hidden width");
  gradcheck_cmd->add_option("--lags", gradcheck_args.lags, "window length T");
  gradcheck_cmd->add_option("--batch", gradcheck_args.batch, "batch size");
  gradcheck_cmd->add_option("--missing-rate", gradcheck_args.missing_rate,
                            "missing rate (default 0.3 for imputing specs)");
  gradcheck_cmd->add_option("--lambda", gradcheck_args.lambda, "imputation penalty");
  gradcheck_cmd->callback([&] { exit_code = run_gradcheck(gradcheck_args); });

  try {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    expand_config_args(args);
    std::reverse(args.begin(), args.end());  // CLI11's vector parse wants reverse order
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const UsageFailure& e) {
    std::cerr << "usage error: " << e.message << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
