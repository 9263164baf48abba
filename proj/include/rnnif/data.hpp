#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rnnif/matrix.hpp"

namespace rnnif {

/// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

// Civil <-> epoch-day conversions (proleptic Gregorian, no timezone).
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

}  // namespace detail

/// Parses "YYYY-MM-DD HH:MM:SS" (a 'T' separator is accepted) to seconds since
/// the epoch, timezone-free.
inline std::int64_t parse_timestamp(const std::string& s) {
  auto fail = [&]() -> std::int64_t {
    throw ParseError("bad timestamp '" + s + "' (expected YYYY-MM-DD HH:MM:SS)");
  };
  if (s.size() != 19) return fail();
  if (s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':' ||
      s[16] != ':')
    return fail();
  auto num = [&](int pos, int len) {
    long v = 0;
    for (int i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') fail();
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const long y = num(0, 4), mo = num(5, 2), d = num(8, 2);
  const long h = num(11, 2), mi = num(14, 2), sec = num(17, 2);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 59) fail();
  return detail::days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
         h * 3600 + mi * 60 + sec;
}

inline std::string format_timestamp(std::int64_t secs) {
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  std::int64_t y;
  unsigned mo, d;
  detail::civil_from_days(days, y, mo, d);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u %02d:%02d:%02d",
                static_cast<long long>(y), mo, d, static_cast<int>(rem / 3600),
                static_cast<int>((rem % 3600) / 60), static_cast<int>(rem % 60));
  return std::string(buf);
}

/// A loaded network-wide speed series: T_total x D values in mph plus the
/// native observation mask. Cells at native_mask = 0 hold 0.
struct SpeedMatrix {
  std::vector<std::string> timestamps;
  std::vector<std::string> station_ids;
  Matrix values;
  Matrix native_mask;

  std::size_t steps() const { return values.rows(); }
  std::size_t stations() const { return values.cols(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline bool is_nan_token(const std::string& s) {
  return s == "nan" || s == "NaN" || s == "NAN";
}

}  // namespace detail

/// Loads a speed CSV: header `timestamp,<id>,...`; rows of an ISO-8601
/// timestamp followed by D decimal speeds. Empty (or NaN) cells are native
/// gaps. Timestamps must be strictly increasing with uniform spacing;
/// expected_spacing_sec = 0 skips the spacing check.
inline SpeedMatrix load_speed_csv(const std::string& path,
                                  std::int64_t expected_spacing_sec = 300) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "timestamp")
    throw ParseError(path + ": header must start with 'timestamp' and list station ids");

  SpeedMatrix sm;
  sm.station_ids.assign(header.begin() + 1, header.end());
  const std::size_t D = sm.station_ids.size();

  std::vector<double> values, mask;
  std::vector<std::int64_t> ts;
  std::size_t row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != D + 1)
      throw ParseError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(D + 1));
    std::int64_t t;
    try {
      t = parse_timestamp(cells[0]);
    } catch (const ParseError& e) {
      throw ParseError(path + ": row " + std::to_string(row) + ": " + e.what());
    }
    if (!ts.empty()) {
      if (t <= ts.back())
        throw ParseError(path + ": row " + std::to_string(row) +
                         ": timestamps not strictly increasing");
      if (expected_spacing_sec > 0 && t - ts.back() != expected_spacing_sec)
        throw ParseError(path + ": row " + std::to_string(row) + ": spacing " +
                         std::to_string(t - ts.back()) + "s, expected " +
                         std::to_string(expected_spacing_sec) + "s");
    }
    ts.push_back(t);
    sm.timestamps.push_back(cells[0]);
    for (std::size_t d = 0; d < D; ++d) {
      const std::string& cell = cells[d + 1];
      if (cell.empty() || detail::is_nan_token(cell)) {
        values.push_back(0.0);
        mask.push_back(0.0);
        continue;
      }
      double v{};
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(path + ": row " + std::to_string(row) + ": unparsable value '" + cell +
                         "'");
      values.push_back(v);
      mask.push_back(1.0);
    }
  }
  if (ts.empty()) throw ParseError(path + ": no data rows");

  sm.values = Matrix(ts.size(), D);
  sm.native_mask = Matrix(ts.size(), D);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sm.values.data()[i] = values[i];
    sm.native_mask.data()[i] = mask[i];
  }
  return sm;
}

/// Writes the speed CSV contract; native gaps become empty cells.
inline void save_speed_csv(const std::string& path, const SpeedMatrix& sm) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "timestamp";
  for (const std::string& id : sm.station_ids) out << ',' << id;
  out << '\n';
  for (std::size_t r = 0; r < sm.steps(); ++r) {
    out << sm.timestamps[r];
    for (std::size_t d = 0; d < sm.stations(); ++d) {
      out << ',';
      if (sm.native_mask(r, d) != 0.0) out << format_double(sm.values(r, d));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Mask sidecar: same header/shape, cells in {0,1}.
inline void save_mask_csv(const std::string& path, const std::vector<std::string>& timestamps,
                          const std::vector<std::string>& station_ids, const Matrix& mask) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "timestamp";
  for (const std::string& id : station_ids) out << ',' << id;
  out << '\n';
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    out << timestamps[r];
    for (std::size_t d = 0; d < mask.cols(); ++d) out << ',' << (mask(r, d) != 0.0 ? 1 : 0);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Matrix load_mask_csv(const std::string& path, std::size_t expect_rows,
                            std::size_t expect_cols) {
  SpeedMatrix raw = load_speed_csv(path, 0);
  if (raw.steps() != expect_rows || raw.stations() != expect_cols)
    throw ShapeError(path + ": mask is " + raw.values.shape_str() + ", expected " +
                     std::to_string(expect_rows) + "x" + std::to_string(expect_cols));
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    const double v = raw.values.data()[i];
    if (v != 0.0 && v != 1.0) throw ValueError(path + ": mask cells must be 0 or 1");
  }
  return raw.values;
}

/// Min-max normalization to [0,1] with min pinned at 0; required because the
/// imputation unit emits sigmoid outputs.
struct Normalizer {
  double max_speed = 0.0;

  double normalize(double v) const { return v / max_speed; }
  double denormalize(double v) const { return v * max_speed; }
};

/// Dataset max plus 25% headroom, rounded up to the next multiple of 5 mph.
/// The headroom keeps typical speeds away from the top of the unit interval:
/// a bidirectional branch one step from its zero initial state cannot emit
/// more than tanh(1) of the scale, so an averaged prediction head with
/// speeds pushed against 1.0 could not represent free flow at all.
inline Normalizer fit_normalizer(const SpeedMatrix& sm) {
  double mx = 0.0;
  for (std::size_t i = 0; i < sm.values.size(); ++i)
    if (sm.native_mask.data()[i] != 0.0 && sm.values.data()[i] > mx) mx = sm.values.data()[i];
  double rounded = std::ceil(mx * 1.25 / 5.0) * 5.0;
  if (rounded <= 0.0) rounded = 5.0;
  return Normalizer{rounded};
}

inline void normalize(SpeedMatrix& sm, const Normalizer& norm) {
  if (norm.max_speed <= 0.0) throw ValueError("normalize: max_speed must be positive");
  for (std::size_t r = 0; r < sm.steps(); ++r)
    for (std::size_t d = 0; d < sm.stations(); ++d) {
      if (sm.values(r, d) > norm.max_speed)
        throw ValueError("normalize: value " + format_double(sm.values(r, d)) + " at row " +
                         std::to_string(r) + ", station " + std::to_string(d) +
                         " exceeds max_speed " + format_double(norm.max_speed));
      sm.values(r, d) = norm.normalize(sm.values(r, d));
    }
}

inline void denormalize(SpeedMatrix& sm, const Normalizer& norm) {
  if (norm.max_speed <= 0.0) throw ValueError("denormalize: max_speed must be positive");
  for (std::size_t i = 0; i < sm.values.size(); ++i)
    sm.values.data()[i] = norm.denormalize(sm.values.data()[i]);
}

/// One training example: a T x D input window, its mask, and the next step as
/// a 1 x D target.
struct SequenceSample {
  Matrix input;
  Matrix mask;
  Matrix target;
};

struct WindowedDataset {
  std::vector<SequenceSample> samples;
  std::size_t window = 0;  // T
  std::size_t stations = 0;

  std::size_t size() const { return samples.size(); }
};

/// Sliding stride-1 windows: window i covers steps [i, i+T), target = step
/// i+T. Targets are never touched by the corruption generators.
inline WindowedDataset make_windows(const SpeedMatrix& sm, std::size_t T) {
  if (T == 0) throw ValueError("make_windows: window length must be positive");
  if (sm.steps() <= T)
    throw ValueError("make_windows: series has " + std::to_string(sm.steps()) +
                     " steps, need more than T=" + std::to_string(T));
  WindowedDataset ds;
  ds.window = T;
  ds.stations = sm.stations();
  const std::size_t n = sm.steps() - T;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SequenceSample s;
    s.input = Matrix(T, sm.stations());
    s.mask = Matrix(T, sm.stations());
    s.target = Matrix(1, sm.stations());
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < sm.stations(); ++d) {
        s.input(t, d) = sm.values(i + t, d);
        s.mask(t, d) = sm.native_mask(i + t, d);
      }
    for (std::size_t d = 0; d < sm.stations(); ++d) s.target(0, d) = sm.values(i + T, d);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

struct DatasetSplits {
  WindowedDataset train, val, test;
};

/// Seeded shuffle then 6:2:2 partition (floor/floor/remainder).
inline DatasetSplits split_dataset(const WindowedDataset& ds, std::uint64_t seed,
                                   double train_frac = 0.6, double val_frac = 0.2) {
  if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0)
    throw ValueError("split_dataset: fractions must be positive and sum below 1");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  const std::size_t n_train = static_cast<std::size_t>(train_frac * ds.size());
  const std::size_t n_val = static_cast<std::size_t>(val_frac * ds.size());
  if (n_train == 0 || n_val == 0 || n_train + n_val >= ds.size())
    throw ValueError("split_dataset: a partition would be empty (n=" +
                     std::to_string(ds.size()) + ")");
  DatasetSplits out;
  out.train.window = out.val.window = out.test.window = ds.window;
  out.train.stations = out.val.stations = out.test.stations = ds.stations;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const SequenceSample& s = ds.samples[idx[i]];
    if (i < n_train)
      out.train.samples.push_back(s);
    else if (i < n_train + n_val)
      out.val.samples.push_back(s);
    else
      out.test.samples.push_back(s);
  }
  return out;
}

namespace detail {

inline std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace detail

/// Random missing scenario: exactly round(p*T*D) distinct observed input
/// positions per sample are zeroed (value 0, mask 0). Native gaps are already
/// missing and are excluded from the selection pool.
inline WindowedDataset corrupt_random(const WindowedDataset& ds, double rate,
                                      std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0))
    throw ValueError("corrupt_random: rate must be in (0,1), got " + format_double(rate));
  const std::size_t count =
      detail::round_half_up(rate * static_cast<double>(ds.window * ds.stations));
  Rng rng(seed);
  WindowedDataset out = ds;
  for (std::size_t s = 0; s < out.samples.size(); ++s) {
    SequenceSample& sample = out.samples[s];
    std::vector<std::size_t> pool;
    pool.reserve(sample.mask.size());
    for (std::size_t k = 0; k < sample.mask.size(); ++k)
      if (sample.mask.data()[k] != 0.0) pool.push_back(k);
    if (pool.size() < count)
      throw ValueError("corrupt_random: sample " + std::to_string(s) + " has only " +
                       std::to_string(pool.size()) + " observed positions, need " +
                       std::to_string(count));
    // Partial Fisher-Yates: the first `count` entries become the draw.
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      sample.input.data()[pool[i]] = 0.0;
      sample.mask.data()[pool[i]] = 0.0;
    }
  }
  return out;
}

/// Non-random missing scenario: exactly round(p*T) whole time-step rows per
/// sample are zeroed across all stations.
inline WindowedDataset corrupt_nonrandom(const WindowedDataset& ds, double rate,
                                         std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0))
    throw ValueError("corrupt_nonrandom: rate must be in (0,1), got " + format_double(rate));
  const std::size_t count = detail::round_half_up(rate * static_cast<double>(ds.window));
  Rng rng(seed);
  WindowedDataset out = ds;
  for (std::size_t s = 0; s < out.samples.size(); ++s) {
    SequenceSample& sample = out.samples[s];
    std::vector<std::size_t> pool;
    for (std::size_t t = 0; t < ds.window; ++t) {
      bool any_observed = false;
      for (std::size_t d = 0; d < ds.stations; ++d)
        if (sample.mask(t, d) != 0.0) any_observed = true;
      if (any_observed) pool.push_back(t);
    }
    if (pool.size() < count)
      throw ValueError("corrupt_nonrandom: sample " + std::to_string(s) + " has only " +
                       std::to_string(pool.size()) + " rows with observations, need " +
                       std::to_string(count));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      for (std::size_t d = 0; d < ds.stations; ++d) {
        sample.input(pool[i], d) = 0.0;
        sample.mask(pool[i], d) = 0.0;
      }
    }
  }
  return out;
}

/// Shape parameters of the synthetic traffic generator. The optional run
/// fields let a profile file carry the full experiment description; explicit
/// arguments take precedence.
struct SynthProfile {
  double free_flow_mph = 60.0;
  double peak_dip_mph = 32.0;
  double noise_sigma = 1.25;
  double weekend_factor = 0.25;  // 1.0 gives a weekday-only (purely daily) series
  std::optional<std::size_t> stations;
  std::optional<std::size_t> days;
  std::optional<std::uint64_t> seed;
};

/// Flat key=value profile file; '#' starts a comment line.
inline SynthProfile parse_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  SynthProfile p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ": line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "free_flow_mph")
        p.free_flow_mph = std::stod(val);
      else if (key == "peak_dip_mph")
        p.peak_dip_mph = std::stod(val);
      else if (key == "noise_sigma")
        p.noise_sigma = std::stod(val);
      else if (key == "weekend_factor")
        p.weekend_factor = std::stod(val);
      else if (key == "stations")
        p.stations = std::stoul(val);
      else if (key == "days")
        p.days = std::stoul(val);
      else if (key == "seed")
        p.seed = std::stoull(val);
      else
        throw ParseError(path + ": line " + std::to_string(lineno) + ": unknown key '" + key +
                         "'");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(path + ": line " + std::to_string(lineno) + ": bad value '" + val + "'");
    }
  }
  return p;
}

namespace detail {

// Deterministic per-station trait in [0,1): low-discrepancy fractions keyed
// by station index, so adjacent stations vary smoothly but not identically.
inline double station_trait(std::size_t d, unsigned which) {
  const double golden = 0.6180339887498949;
  return std::fmod(static_cast<double>(d + 1) * golden * static_cast<double>(which + 1), 1.0);
}

}  // namespace detail

/// Synthetic network-wide speeds at 5-minute resolution: weekday double-dip
/// congestion (AM/PM peaks) with per-station depths, widths and time shifts,
/// a midday dip on some stations, scaled-down weekend dips, and noise
/// correlated across adjacent stations. The series starts on a Monday.
inline SpeedMatrix synth(std::size_t stations, std::size_t days, std::uint64_t seed,
                         const SynthProfile& profile) {
  if (stations == 0 || days == 0)
    throw ValueError("synth: stations and days must be positive");
  const std::size_t steps = days * 288;
  const std::int64_t start = parse_timestamp("2015-01-05 00:00:00");  // a Monday

  SpeedMatrix sm;
  sm.values = Matrix(steps, stations);
  sm.native_mask = Matrix(steps, stations, 1.0);
  sm.timestamps.reserve(steps);
  sm.station_ids.reserve(stations);
  char idbuf[32];
  for (std::size_t d = 0; d < stations; ++d) {
    std::snprintf(idbuf, sizeof(idbuf), "st%03u", static_cast<unsigned>(d + 1));
    sm.station_ids.push_back(idbuf);
  }

  Rng rng(seed);
  const double rho = 0.5;  // cross-station correlation of the noise
  // Cruise a little below free flow so typical noise does not clip at the cap.
  const double cruise = profile.free_flow_mph - 2.0 * profile.noise_sigma;
  std::vector<double> noise(stations);
  for (std::size_t k = 0; k < steps; ++k) {
    sm.timestamps.push_back(format_timestamp(start + static_cast<std::int64_t>(k) * 300));
    const std::size_t day = k / 288;
    const double tod_min = static_cast<double>(k % 288) * 5.0;
    const double day_factor = (day % 7 < 5) ? 1.0 : profile.weekend_factor;
    for (std::size_t d = 0; d < stations; ++d) {
      const double g = rng.normal();
      noise[d] = (d == 0) ? g : rho * noise[d - 1] + std::sqrt(1.0 - rho * rho) * g;

      const double frac =
          stations == 1 ? 0.5 : static_cast<double>(d) / static_cast<double>(stations - 1);
      const double depth = profile.peak_dip_mph * (0.55 + 0.9 * frac);
      const double shift =
          (static_cast<double>(d) - static_cast<double>(stations - 1) / 2.0) * 8.0;
      const double w_am = 35.0 + 25.0 * detail::station_trait(d, 0);
      const double w_pm = 50.0 + 30.0 * detail::station_trait(d, 1);
      const double am =
          0.85 * std::exp(-0.5 * std::pow((tod_min - 480.0 - shift) / w_am, 2.0));
      const double pm = std::exp(-0.5 * std::pow((tod_min - 1020.0 - shift) / w_pm, 2.0));
      double dips = am + pm;
      if (detail::station_trait(d, 2) > 0.4)  // midday slowdown on some stations
        dips += 0.5 * std::exp(-0.5 * std::pow((tod_min - 750.0 - shift) / 80.0, 2.0));
      double v =
          cruise - depth * day_factor * dips + profile.noise_sigma * noise[d];
      if (v < 1.0) v = 1.0;
      if (v > profile.free_flow_mph) v = profile.free_flow_mph;
      sm.values(k, d) = v;
    }
  }
  return sm;
}

/// Batch slabs for the network: T matrices of (batch x D) inputs and masks
/// plus a (batch x D) target, assembled from samples idx[begin..end).
struct BatchView {
  std::vector<Matrix> inputs;
  std::vector<Matrix> masks;
  Matrix targets;
};

inline BatchView assemble_batch(const WindowedDataset& ds, const std::vector<std::size_t>& idx,
                                std::size_t begin, std::size_t end) {
  const std::size_t b = end - begin;
  BatchView batch;
  batch.inputs.assign(ds.window, Matrix(b, ds.stations));
  batch.masks.assign(ds.window, Matrix(b, ds.stations));
  batch.targets = Matrix(b, ds.stations);
  for (std::size_t r = 0; r < b; ++r) {
    const SequenceSample& s = ds.samples[idx[begin + r]];
    for (std::size_t t = 0; t < ds.window; ++t)
      for (std::size_t d = 0; d < ds.stations; ++d) {
        batch.inputs[t](r, d) = s.input(t, d);
        batch.masks[t](r, d) = s.mask(t, d);
      }
    for (std::size_t d = 0; d < ds.stations; ++d) batch.targets(r, d) = s.target(0, d);
  }
  return batch;
}

}  // namespace rnnif
