#pragma once

// Run configuration with one flat dotted-key namespace. The binding table
// below is the single source of truth: the config-file parser, the CLI
// flags, and the config snapshot all walk it.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "eaekit/backbone.hpp"
#include "eaekit/model.hpp"

namespace eaekit::config {

struct RunConfig {
  backbone::BackboneConfig backbone;
  int max_span_len = 10;

  double lr = 1e-3;  // suits the toy backbone; use 2e-5 for a pretrained drop-in
  int batch_size = 8;
  int epochs = 20;
  std::uint64_t seed = 17;
  double grad_clip = 1.0;

  bool ssp_enabled = true;
  bool ssp_tie_embeddings = false;

  bool vib_enabled = true;
  double vib_beta = 0.001;
  int vib_d_z = 0;  // 0 follows d_model
  bool vib_projection = true;
  bool vib_eval_use_mean = true;
};

inline model::ModelConfig to_model_config(const RunConfig& c) {
  model::ModelConfig m;
  m.backbone = c.backbone;
  m.ssp_enabled = c.ssp_enabled;
  m.tie_embeddings = c.ssp_tie_embeddings;
  m.vib_enabled = c.vib_enabled;
  m.vib_beta = c.vib_beta;
  m.vib_d_z = c.vib_d_z;
  m.vib_projection = c.vib_projection;
  m.vib_eval_use_mean = c.vib_eval_use_mean;
  m.max_span_len = c.max_span_len;
  return m;
}

struct Binding {
  std::string key;
  std::variant<int*, double*, bool*, std::uint64_t*> target;
  std::string help;
};

inline std::vector<Binding> bindings(RunConfig& c) {
  return {
      {"model.d_model", &c.backbone.d_model, "model width"},
      {"model.n_layers", &c.backbone.n_layers, "encoder/decoder layers per backbone"},
      {"model.n_heads", &c.backbone.n_heads, "attention heads"},
      {"model.ffn_mult", &c.backbone.ffn_mult, "feed-forward width multiplier"},
      {"model.max_encoder_len", &c.backbone.max_encoder_len, "max encoder sequence length"},
      {"model.max_decoder_len", &c.backbone.max_decoder_len, "max prompt length"},
      {"model.dropout", &c.backbone.dropout, "dropout probability"},
      {"model.init_std", &c.backbone.init_std, "weight init standard deviation"},
      {"model.max_span_len", &c.max_span_len, "longest decodable argument span"},
      {"train.lr", &c.lr, "Adam learning rate"},
      {"train.batch_size", &c.batch_size, "instances per dataset per step"},
      {"train.epochs", &c.epochs, "training epochs"},
      {"train.seed", &c.seed, "master RNG seed"},
      {"train.grad_clip", &c.grad_clip, "global gradient-norm clip (0 disables)"},
      {"ssp.enabled", &c.ssp_enabled, "shared-specific architecture on/off"},
      {"ssp.tie_embeddings", &c.ssp_tie_embeddings, "share embedding tables across backbones"},
      {"vib.enabled", &c.vib_enabled, "variational bottleneck on the shared extractor"},
      {"vib.beta", &c.vib_beta, "KL weight"},
      {"vib.d_z", &c.vib_d_z, "latent width (0 = d_model)"},
      {"vib.projection", &c.vib_projection, "project Z back to d_model when d_z differs"},
      {"vib.eval_use_mean", &c.vib_eval_use_mean, "evaluate with Z = mu instead of sampling"},
  };
}

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("expected a boolean, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void apply_kv(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& b : bindings(c)) {
    if (b.key != key) continue;
    try {
      std::visit(
          [&value](auto* ptr) {
            using T = std::remove_pointer_t<decltype(ptr)>;
            if constexpr (std::is_same_v<T, bool>) {
              *ptr = detail::parse_bool(value);
            } else if constexpr (std::is_same_v<T, int>) {
              *ptr = std::stoi(value);
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
              *ptr = std::stoull(value);
            } else {
              *ptr = std::stod(value);
            }
          },
          b.target);
    } catch (const std::exception& e) {
      throw std::runtime_error("config key '" + key + "': " + e.what());
    }
    return;
  }
  throw std::runtime_error("unknown config key '" + key + "'");
}

// Flat key-value file: one "key = value" per line, '#' starts a comment.
inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_kv(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline std::map<std::string, std::string> to_flat_map(const RunConfig& c) {
  std::map<std::string, std::string> out;
  RunConfig& mut = const_cast<RunConfig&>(c);
  for (const auto& b : bindings(mut)) {
    std::visit(
        [&out, &b](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, bool>) {
            out[b.key] = *ptr ? "true" : "false";
          } else if constexpr (std::is_same_v<T, double>) {
            std::ostringstream os;
            os.precision(17);
            os << *ptr;
            out[b.key] = os.str();
          } else {
            out[b.key] = std::to_string(*ptr);
          }
        },
        b.target);
  }
  return out;
}

inline RunConfig from_flat_map(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  for (const auto& [k, v] : kv) apply_kv(c, k, v);
  return c;
}

}  // namespace eaekit::config
