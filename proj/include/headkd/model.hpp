#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "headkd/autodiff.hpp"
#include "headkd/optim.hpp"

namespace headkd {

struct EncodedExample;

enum class SiteKind { EncoderSelf = 0, DecoderSelf = 1, DecoderCross = 2 };
inline constexpr std::size_t kSiteKinds = 3;

std::string_view site_kind_name(SiteKind kind);
SiteKind parse_site_kind(std::string_view name);

// A place where multi-head attention happens. A model with N encoder and N
// decoder layers has 3N sites, ordered kind-major then by layer.
struct AttentionSite {
  SiteKind kind = SiteKind::EncoderSelf;
  std::size_t layer = 0;

  std::size_t index(std::size_t layers) const { return static_cast<std::size_t>(kind) * layers + layer; }
  std::string str() const;
  friend auto operator<=>(const AttentionSite&, const AttentionSite&) = default;
};

std::vector<AttentionSite> all_sites(std::size_t layers);

struct HeadRef {
  AttentionSite site;
  int head = 0;  // original head index
  friend auto operator<=>(const HeadRef&, const HeadRef&) = default;
};

struct ModelConfig {
  std::size_t layers = 2;  // N encoder and N decoder layers
  std::size_t d_model = 64;
  std::size_t heads = 4;  // per site, before pruning
  std::size_t ff_dim = 128;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 64;
  std::uint64_t seed = 1;

  std::size_t head_dim() const { return d_model / heads; }
  // Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Surviving original head indices per site, strictly increasing, indexed by
// AttentionSite::index.
struct HeadLayout {
  std::size_t layers = 0;
  std::vector<std::vector<int>> heads;

  const std::vector<int>& at(const AttentionSite& site) const { return heads.at(site.index(layers)); }
  std::size_t total_heads() const;
  friend bool operator==(const HeadLayout&, const HeadLayout&) = default;
};

struct AttentionWeights {
  std::vector<int> heads;  // original indices of surviving heads
  std::vector<Var> query;  // per head, d_model x d_k
  std::vector<Var> key;
  std::vector<Var> value;
  Var out_proj;  // (heads * d_k) x d_model, rows grouped by head
  Var out_bias;  // d_model
};

struct LayerNormWeights {
  Var gain;
  Var bias;
};

struct FeedForwardWeights {
  Var w1, b1, w2, b2;
};

struct EncoderBlock {
  LayerNormWeights norm1, norm2;
  AttentionWeights self_attn;
  FeedForwardWeights ff;
};

struct DecoderBlock {
  LayerNormWeights norm1, norm2, norm3;
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  FeedForwardWeights ff;
};

// Pre-norm encoder-decoder transformer with tied input/output embeddings and
// sinusoidal positions. Copying a Model shares parameter storage; use clone()
// for an independent copy.
class Model {
 public:
  // Scaled-uniform init in [-1/sqrt(d_model), 1/sqrt(d_model)], deterministic
  // in config.seed; norms start at gain 1 / bias 0, biases at 0.
  static Model init(const ModelConfig& config);
  // Zero-filled parameters shaped for `layout`; used by checkpoint loading.
  static Model with_layout(const ModelConfig& config, const HeadLayout& layout);

  const ModelConfig& config() const { return config_; }
  HeadLayout layout() const;

  AttentionWeights& attention(const AttentionSite& site);
  const AttentionWeights& attention(const AttentionSite& site) const;

  // Canonical order; the Vars alias this model's storage.
  std::vector<NamedParameter> parameters() const;
  Model clone() const;
  // Rounds every parameter to the nearest float, the checkpoint precision.
  void round_to_float32();

  Var embed;       // vocab x d_model
  Var logit_bias;  // vocab
  std::vector<EncoderBlock> encoder;
  std::vector<DecoderBlock> decoder;
  LayerNormWeights encoder_norm, decoder_norm;

 private:
  ModelConfig config_;
};

Model init_model(const ModelConfig& config);

struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::vector<int> source;      // size x src_len
  std::vector<int> target_in;   // BOS + expression, size x tgt_len
  std::vector<int> target_out;  // expression + EOS, size x tgt_len
  std::vector<std::uint8_t> source_valid;
  std::vector<std::uint8_t> target_valid;
};

// Pads to the longest member.
Batch make_batch(std::span<const EncodedExample> examples, std::span<const std::size_t> indices);
Batch make_batch(std::span<const EncodedExample> examples);

// Per-site multiplier on each surviving head's output; 0 silences a head.
struct HeadMask {
  std::vector<std::vector<double>> gates;  // indexed by site index, one per surviving head

  static HeadMask all_on(const Model& model);
  // Zeroes the listed heads; throws IndexError for heads not in the layout.
  static HeadMask silencing(const Model& model, std::span<const HeadRef> heads);
};

struct SiteAttention {
  AttentionSite site;
  std::vector<int> heads;
  Var probs;  // batch x heads x q_len x kv_len
};

struct ForwardOutput {
  Var logits;  // batch x tgt_len x vocab
  std::vector<SiteAttention> attention;  // all 3N sites when captured
};

// Teacher-forced forward pass. Throws LengthError when a sequence exceeds
// max_seq_len.
ForwardOutput forward(const Model& model, const Batch& batch, bool capture_attention = false,
                      const HeadMask* mask = nullptr);

// One multi-head attention site applied to explicit inputs.
struct AttentionResult {
  Var output;  // batch x q_len x d_model
  Var probs;   // batch x heads x q_len x kv_len
};
AttentionResult attention_forward(const AttentionWeights& weights, const Var& queries, const Var& keys_values,
                                  std::span<const std::uint8_t> key_valid, bool causal,
                                  std::span<const double> gates = {});

// Greedy decoding; each result excludes BOS/EOS. Stops at EOS or max_len.
std::vector<std::vector<int>> greedy_decode(const Model& model, const Batch& batch, std::size_t max_len);

// Deletes the listed heads: their Q/K/V matrices and their d_k-row block of
// the site's output projection. Every other parameter is copied bit-for-bit.
// Throws IndexError for unknown heads and ConstraintError if a site would be
// left without heads.
Model remove_heads(const Model& model, std::span<const HeadRef> heads);

std::size_t count_params(const Model& model);

// Multiply-accumulates counted as 2 FLOPs, for one sequence through a full
// forward pass: Q/K/V and output projections, QK^T, AV, feed-forward and
// logits. Norms, softmax, biases and embeddings lookups are not counted.
std::uint64_t count_flops(const Model& model, std::size_t src_len, std::size_t tgt_len);
// FLOPs of one attention site with the given head count.
std::uint64_t attention_site_flops(std::size_t d_model, std::size_t d_k, std::size_t heads, std::size_t q_len,
                                   std::size_t kv_len);

}  // namespace headkd
