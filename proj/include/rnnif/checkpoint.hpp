#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "rnnif/data.hpp"
#include "rnnif/network.hpp"

namespace rnnif {

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

// Reals are stored as hex-float strings so the round trip is bit-exact.
inline std::string to_hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return std::string(buf);
}

inline double from_hex_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw ParseError("checkpoint: bad numeric literal '" + s + "'");
  return v;
}

inline nlohmann::json tensor_to_json(const Matrix& m) {
  nlohmann::json j;
  j["shape"] = {m.rows(), m.cols()};
  nlohmann::json vals = nlohmann::json::array();
  for (std::size_t i = 0; i < m.size(); ++i) vals.push_back(to_hex_double(m.data()[i]));
  j["values"] = std::move(vals);
  return j;
}

inline Matrix tensor_from_json(const nlohmann::json& j, const std::string& name) {
  const auto& shape = j.at("shape");
  const std::size_t rows = shape.at(0).get<std::size_t>();
  const std::size_t cols = shape.at(1).get<std::size_t>();
  const auto& vals = j.at("values");
  if (vals.size() != rows * cols)
    throw ConfigError("checkpoint: tensor " + name + " has " + std::to_string(vals.size()) +
                      " values for shape " + std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data()[i] = from_hex_double(vals.at(i).get<std::string>());
  return m;
}

inline CellKind kind_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::lstm;
  if (s == "lstm_i") return CellKind::lstm_i;
  throw ConfigError("checkpoint: unknown cell kind '" + s + "'");
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "uni") return Direction::uni;
  if (s == "bi") return Direction::bi;
  throw ConfigError("checkpoint: unknown direction '" + s + "'");
}

inline Combine combine_from_string(const std::string& s) {
  if (s == "average") return Combine::average;
  if (s == "sum") return Combine::sum;
  if (s == "concat") return Combine::concat;
  throw ConfigError("checkpoint: unknown combine mode '" + s + "'");
}

}  // namespace detail

struct Checkpoint {
  Model model;
  Normalizer normalizer;
  std::size_t window = 0;  // T the model was trained with
};

inline void save_checkpoint(const std::string& path, const Model& model,
                            const Normalizer& norm, std::size_t window) {
  model.validate();
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["window"] = window;
  j["normalizer"] = {{"max_speed", detail::to_hex_double(norm.max_speed)}};

  nlohmann::json spec;
  spec["input_dim"] = model.spec.input_dim;
  spec["lambda"] = detail::to_hex_double(model.spec.lambda);
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerDescriptor& d : model.spec.layers) {
    layers.push_back({{"kind", to_string(d.kind)},
                      {"direction", to_string(d.direction)},
                      {"input_dim", d.input_dim},
                      {"hidden", d.hidden},
                      {"combine", to_string(d.combine)}});
  }
  spec["layers"] = std::move(layers);
  j["model_spec"] = std::move(spec);

  nlohmann::json params = nlohmann::json::array();
  for (std::size_t l = 0; l < model.params.size(); ++l) {
    nlohmann::json dirs = nlohmann::json::array();
    for (const LstmIParams& p : model.params[l]) {
      nlohmann::json tensors;
      for_each_tensor(p, [&](const char* name, const Matrix& m) {
        tensors[name] = detail::tensor_to_json(m);
      });
      dirs.push_back(std::move(tensors));
    }
    params.push_back(std::move(dirs));
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }

  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw ConfigError(path + ": format_version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointFormatVersion));

    Checkpoint ck;
    ck.window = j.at("window").get<std::size_t>();
    ck.normalizer.max_speed =
        detail::from_hex_double(j.at("normalizer").at("max_speed").get<std::string>());

    const auto& spec_j = j.at("model_spec");
    ck.model.spec.input_dim = spec_j.at("input_dim").get<std::size_t>();
    ck.model.spec.lambda = detail::from_hex_double(spec_j.at("lambda").get<std::string>());
    for (const auto& lj : spec_j.at("layers")) {
      LayerDescriptor d;
      d.kind = detail::kind_from_string(lj.at("kind").get<std::string>());
      d.direction = detail::direction_from_string(lj.at("direction").get<std::string>());
      d.input_dim = lj.at("input_dim").get<std::size_t>();
      d.hidden = lj.at("hidden").get<std::size_t>();
      d.combine = detail::combine_from_string(lj.at("combine").get<std::string>());
      ck.model.spec.layers.push_back(d);
    }

    const auto& params_j = j.at("params");
    for (std::size_t l = 0; l < params_j.size(); ++l) {
      std::vector<LstmIParams> dirs;
      const LayerDescriptor& d = ck.model.spec.layers.at(l);
      for (const auto& dir_j : params_j[l]) {
        LstmIParams p = LstmIParams::zeros(d.input_dim, d.hidden, d.imputing());
        for_each_tensor(p, [&](const char* name, Matrix& m) {
          const Matrix loaded = detail::tensor_from_json(dir_j.at(name), name);
          if (!loaded.same_shape(m))
            throw ConfigError(path + ": tensor " + name + " is " + loaded.shape_str() +
                              ", spec expects " + m.shape_str());
          m = loaded;
        });
        dirs.push_back(std::move(p));
      }
      ck.model.params.push_back(std::move(dirs));
    }
    ck.model.validate();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace rnnif
