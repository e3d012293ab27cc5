#pragma once

// Sequence-to-sequence encoder-decoder contract plus the default trainable
// toy transformer. The decoder runs bidirectionally in a single pass: it is
// used purely as a representation function, never for generation. A
// pretrained drop-in can implement the same contract as long as it exposes
// word-level rows (subword alignment is the plug-in's concern).

#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "eaekit/corpus.hpp"
#include "eaekit/graph.hpp"

namespace eaekit::backbone {

struct BackboneConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_encoder_len = 500;
  int max_decoder_len = 80;
  double dropout = 0.1;
  double init_std = 0.08;

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_mult <= 0) {
      throw std::invalid_argument("backbone config: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw std::invalid_argument("backbone config: d_model must be divisible by n_heads");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw std::invalid_argument("backbone config: dropout must be in [0,1)");
    }
    if (max_encoder_len <= 0 || max_decoder_len <= 0) {
      throw std::invalid_argument("backbone config: max lengths must be positive");
    }
  }
};

class Vocab {
 public:
  static constexpr const char* kUnk = "<unk>";

  Vocab() { add(kUnk); }

  int add(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    index_[tok] = id;
    return id;
  }

  int id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? 0 : it->second;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  // Whole-token vocabulary over corpora, template tokens, and the trigger
  // markers. Insertion order is deterministic.
  static Vocab build(const std::vector<const std::vector<corpus::EventInstance>*>& corpora,
                     const std::map<std::string, std::string>& templates) {
    Vocab v;
    v.add(corpus::kTriggerOpen);
    v.add(corpus::kTriggerClose);
    for (const auto* data : corpora) {
      for (const auto& inst : *data) {
        for (const auto& t : inst.tokens) v.add(t);
      }
    }
    for (const auto& [event_type, text] : templates) {
      (void)event_type;
      std::istringstream ss(text);
      std::string tok;
      while (ss >> tok) {
        if (tok.size() >= 2 && tok.front() == '<' && tok.back() == '>') {
          v.add(tok.substr(1, tok.size() - 2));
        } else {
          v.add(tok);
        }
      }
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Contract shared by the toy transformer and any pretrained drop-in.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual Var encode(Graph& g, const std::vector<int>& ids) = 0;
  virtual Var decode_context(Graph& g, const std::vector<int>& ids, Var enc) = 0;
  virtual Var decode_prompt(Graph& g, const std::vector<int>& prompt_ids, Var enc) = 0;
  virtual ParamList params(bool include_embeddings) = 0;
  virtual const BackboneConfig& config() const = 0;
};

// Token plus learned positional tables; shareable across backbones when
// embeddings are tied.
struct EmbeddingTables {
  Param tok;
  Param pos_enc;
  Param pos_dec;

  EmbeddingTables(const std::string& prefix, const BackboneConfig& cfg, int vocab_size,
                  std::mt19937_64& rng)
      : tok(prefix + "/tok_emb", Mat::randn(vocab_size, cfg.d_model, cfg.init_std, rng)),
        pos_enc(prefix + "/pos_enc", Mat::randn(cfg.max_encoder_len, cfg.d_model, cfg.init_std, rng)),
        // the decoder also consumes full sentences when producing H
        pos_dec(prefix + "/pos_dec", Mat::randn(cfg.max_encoder_len, cfg.d_model, cfg.init_std, rng)) {}

  ParamList params() { return {&tok, &pos_enc, &pos_dec}; }
};

namespace detail {

struct LinearP {
  Param w;
  Param b;
  LinearP(const std::string& prefix, int d_in, int d_out, double std, std::mt19937_64& rng)
      : w(prefix + "/w", Mat::randn(d_in, d_out, std, rng)), b(prefix + "/b", Mat::zeros(1, d_out)) {}
};

struct LayerNormP {
  Param gain;
  Param bias;
  explicit LayerNormP(const std::string& prefix, int d)
      : gain(prefix + "/gain", Mat::constant(1, d, 1.0)), bias(prefix + "/bias", Mat::zeros(1, d)) {}
};

struct AttnP {
  LinearP q, k, v, o;
  AttnP(const std::string& prefix, int d, double std, std::mt19937_64& rng)
      : q(prefix + "/q", d, d, std, rng),
        k(prefix + "/k", d, d, std, rng),
        v(prefix + "/v", d, d, std, rng),
        o(prefix + "/o", d, d, std, rng) {}
};

struct EncLayerP {
  LayerNormP ln1, ln2;
  AttnP attn;
  LinearP ff1, ff2;
  EncLayerP(const std::string& prefix, const BackboneConfig& cfg, std::mt19937_64& rng)
      : ln1(prefix + "/ln1", cfg.d_model),
        ln2(prefix + "/ln2", cfg.d_model),
        attn(prefix + "/attn", cfg.d_model, cfg.init_std, rng),
        ff1(prefix + "/ff1", cfg.d_model, cfg.d_model * cfg.ffn_mult, cfg.init_std, rng),
        ff2(prefix + "/ff2", cfg.d_model * cfg.ffn_mult, cfg.d_model, cfg.init_std, rng) {}
};

struct DecLayerP {
  LayerNormP ln1, ln2, ln3;
  AttnP self_attn, cross_attn;
  LinearP ff1, ff2;
  DecLayerP(const std::string& prefix, const BackboneConfig& cfg, std::mt19937_64& rng)
      : ln1(prefix + "/ln1", cfg.d_model),
        ln2(prefix + "/ln2", cfg.d_model),
        ln3(prefix + "/ln3", cfg.d_model),
        self_attn(prefix + "/self", cfg.d_model, cfg.init_std, rng),
        cross_attn(prefix + "/cross", cfg.d_model, cfg.init_std, rng),
        ff1(prefix + "/ff1", cfg.d_model, cfg.d_model * cfg.ffn_mult, cfg.init_std, rng),
        ff2(prefix + "/ff2", cfg.d_model * cfg.ffn_mult, cfg.d_model, cfg.init_std, rng) {}
};

}  // namespace detail

class ToyTransformer final : public Backbone {
 public:
  // When `tied` is non-null the embedding tables are shared and not owned.
  ToyTransformer(const std::string& prefix, const BackboneConfig& cfg, int vocab_size,
                 std::mt19937_64& rng, EmbeddingTables* tied = nullptr)
      : cfg_(cfg), prefix_(prefix) {
    cfg_.validate();
    if (tied == nullptr) {
      owned_tables_ = std::make_unique<EmbeddingTables>(prefix, cfg_, vocab_size, rng);
      tables_ = owned_tables_.get();
    } else {
      tables_ = tied;
    }
    for (int l = 0; l < cfg_.n_layers; ++l) {
      enc_layers_.emplace_back(prefix + "/enc" + std::to_string(l), cfg_, rng);
      dec_layers_.emplace_back(prefix + "/dec" + std::to_string(l), cfg_, rng);
    }
    ln_f_enc_ = std::make_unique<detail::LayerNormP>(prefix + "/enc_ln_f", cfg_.d_model);
    ln_f_dec_ = std::make_unique<detail::LayerNormP>(prefix + "/dec_ln_f", cfg_.d_model);
  }

  Var encode(Graph& g, const std::vector<int>& ids) override {
    if (ids.empty()) throw std::invalid_argument(prefix_ + ": encode on empty input");
    if (static_cast<int>(ids.size()) > cfg_.max_encoder_len) {
      throw std::invalid_argument(prefix_ + ": input length " + std::to_string(ids.size()) +
                                  " exceeds max_encoder_len " + std::to_string(cfg_.max_encoder_len));
    }
    Var x = embed(g, ids, tables_->pos_enc);
    for (auto& layer : enc_layers_) {
      Var a = g.layer_norm(x, g.param(layer.ln1.gain), g.param(layer.ln1.bias));
      x = g.add(x, attention(g, a, a, layer.attn));
      Var b = g.layer_norm(x, g.param(layer.ln2.gain), g.param(layer.ln2.bias));
      x = g.add(x, ffn(g, b, layer.ff1, layer.ff2));
    }
    return g.layer_norm(x, g.param(ln_f_enc_->gain), g.param(ln_f_enc_->bias));
  }

  Var decode_context(Graph& g, const std::vector<int>& ids, Var enc) override {
    if (static_cast<int>(ids.size()) != g.val(enc).rows) {
      throw std::invalid_argument(prefix_ + ": decode_context length mismatch with encoder states");
    }
    return decode(g, ids, enc);
  }

  Var decode_prompt(Graph& g, const std::vector<int>& prompt_ids, Var enc) override {
    if (prompt_ids.empty()) throw std::invalid_argument(prefix_ + ": decode_prompt on empty prompt");
    if (static_cast<int>(prompt_ids.size()) > cfg_.max_decoder_len) {
      throw std::invalid_argument(prefix_ + ": prompt length " + std::to_string(prompt_ids.size()) +
                                  " exceeds max_decoder_len " + std::to_string(cfg_.max_decoder_len));
    }
    return decode(g, prompt_ids, enc);
  }

  ParamList params(bool include_embeddings) override {
    ParamList out;
    if (include_embeddings && owned_tables_) {
      for (Param* p : owned_tables_->params()) out.push_back(p);
    }
    auto add_linear = [&out](detail::LinearP& l) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    };
    auto add_ln = [&out](detail::LayerNormP& l) {
      out.push_back(&l.gain);
      out.push_back(&l.bias);
    };
    auto add_attn = [&](detail::AttnP& a) {
      add_linear(a.q);
      add_linear(a.k);
      add_linear(a.v);
      add_linear(a.o);
    };
    for (auto& layer : enc_layers_) {
      add_ln(layer.ln1);
      add_ln(layer.ln2);
      add_attn(layer.attn);
      add_linear(layer.ff1);
      add_linear(layer.ff2);
    }
    for (auto& layer : dec_layers_) {
      add_ln(layer.ln1);
      add_ln(layer.ln2);
      add_ln(layer.ln3);
      add_attn(layer.self_attn);
      add_attn(layer.cross_attn);
      add_linear(layer.ff1);
      add_linear(layer.ff2);
    }
    add_ln(*ln_f_enc_);
    add_ln(*ln_f_dec_);
    return out;
  }

  const BackboneConfig& config() const override { return cfg_; }
  EmbeddingTables* tables() { return tables_; }
  bool owns_tables() const { return owned_tables_ != nullptr; }

 private:
  Var embed(Graph& g, const std::vector<int>& ids, Param& pos_table) {
    Var x = g.gather_rows(tables_->tok, ids);
    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    x = g.add(x, g.gather_rows(pos_table, positions));
    return g.dropout(x, cfg_.dropout);
  }

  Var linear(Graph& g, Var x, detail::LinearP& p) {
    return g.add_rowvec(g.matmul(x, g.param(p.w)), g.param(p.b));
  }

  Var attention(Graph& g, Var q_in, Var kv_in, detail::AttnP& p) {
    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;
    Var q = linear(g, q_in, p.q);
    Var k = linear(g, kv_in, p.k);
    Var v = linear(g, kv_in, p.v);
    Var merged;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Var qh = g.slice_cols(q, h * dh, (h + 1) * dh);
      Var kh = g.slice_cols(k, h * dh, (h + 1) * dh);
      Var vh = g.slice_cols(v, h * dh, (h + 1) * dh);
      Var scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
      Var oh = g.matmul(g.softmax_rows(scores), vh);
      merged = (h == 0) ? oh : g.concat_cols(merged, oh);
    }
    return g.dropout(linear(g, merged, p.o), cfg_.dropout);
  }

  Var ffn(Graph& g, Var x, detail::LinearP& ff1, detail::LinearP& ff2) {
    return g.dropout(linear(g, g.gelu(linear(g, x, ff1)), ff2), cfg_.dropout);
  }

  // Bidirectional single-pass decoder: self-attention (no causal mask),
  // cross-attention to the encoder states, FFN.
  Var decode(Graph& g, const std::vector<int>& ids, Var enc) {
    Var x = embed(g, ids, tables_->pos_dec);
    for (auto& layer : dec_layers_) {
      Var a = g.layer_norm(x, g.param(layer.ln1.gain), g.param(layer.ln1.bias));
      x = g.add(x, attention(g, a, a, layer.self_attn));
      Var b = g.layer_norm(x, g.param(layer.ln2.gain), g.param(layer.ln2.bias));
      x = g.add(x, attention(g, b, enc, layer.cross_attn));
      Var c = g.layer_norm(x, g.param(layer.ln3.gain), g.param(layer.ln3.bias));
      x = g.add(x, ffn(g, c, layer.ff1, layer.ff2));
    }
    return g.layer_norm(x, g.param(ln_f_dec_->gain), g.param(ln_f_dec_->bias));
  }

  BackboneConfig cfg_;
  std::string prefix_;
  std::unique_ptr<EmbeddingTables> owned_tables_;
  EmbeddingTables* tables_ = nullptr;
  std::vector<detail::EncLayerP> enc_layers_;
  std::vector<detail::DecLayerP> dec_layers_;
  std::unique_ptr<detail::LayerNormP> ln_f_enc_;
  std::unique_ptr<detail::LayerNormP> ln_f_dec_;
};

}  // namespace eaekit::backbone
