#include "headkd/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "headkd/datagen.hpp"
#include "headkd/error.hpp"
#include "headkd/ops.hpp"
#include "headkd/random.hpp"

namespace headkd {

std::string_view site_kind_name(SiteKind kind) {
  switch (kind) {
    case SiteKind::EncoderSelf: return "encoder-self";
    case SiteKind::DecoderSelf: return "decoder-self";
    case SiteKind::DecoderCross: return "decoder-cross";
  }
  return "?";
}

SiteKind parse_site_kind(std::string_view name) {
  if (name == "encoder-self") return SiteKind::EncoderSelf;
  if (name == "decoder-self") return SiteKind::DecoderSelf;
  if (name == "decoder-cross") return SiteKind::DecoderCross;
  throw FormatError("unknown attention site kind '" + std::string(name) + "'");
}

std::string AttentionSite::str() const { return std::string(site_kind_name(kind)) + "[" + std::to_string(layer) + "]"; }

std::vector<AttentionSite> all_sites(std::size_t layers) {
  std::vector<AttentionSite> sites;
  for (std::size_t k = 0; k < kSiteKinds; ++k)
    for (std::size_t l = 0; l < layers; ++l) sites.push_back({static_cast<SiteKind>(k), l});
  return sites;
}

void ModelConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || ff_dim == 0 || vocab_size == 0 || max_seq_len == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"layers", layers},   {"d_model", d_model},         {"heads", heads}, {"ff_dim", ff_dim},
          {"vocab_size", vocab_size}, {"max_seq_len", max_seq_len}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"layers", "d_model", "heads", "ff_dim", "vocab_size", "max_seq_len", "seed"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown model config key '" + k + "'");
  }
  ModelConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::size_t HeadLayout::total_heads() const {
  std::size_t n = 0;
  for (const auto& h : heads) n += h.size();
  return n;
}

namespace {

Var zeros(Shape s) { return Var::parameter(Tensor(std::move(s), 0.0)); }

AttentionWeights make_attention(const ModelConfig& c, const std::vector<int>& heads) {
  const std::size_t dk = c.head_dim();
  AttentionWeights a;
  a.heads = heads;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    a.query.push_back(zeros({c.d_model, dk}));
    a.key.push_back(zeros({c.d_model, dk}));
    a.value.push_back(zeros({c.d_model, dk}));
  }
  a.out_proj = zeros({heads.size() * dk, c.d_model});
  a.out_bias = zeros({c.d_model});
  return a;
}

LayerNormWeights make_norm(const ModelConfig& c) {
  return {Var::parameter(Tensor({c.d_model}, 1.0)), zeros({c.d_model})};
}

FeedForwardWeights make_ff(const ModelConfig& c) {
  return {zeros({c.d_model, c.ff_dim}), zeros({c.ff_dim}), zeros({c.ff_dim, c.d_model}), zeros({c.d_model})};
}

void push_norm(std::vector<NamedParameter>& out, const std::string& prefix, const LayerNormWeights& n) {
  out.push_back({prefix + ".gain", n.gain});
  out.push_back({prefix + ".bias", n.bias});
}

void push_attention(std::vector<NamedParameter>& out, const std::string& prefix, const AttentionWeights& a) {
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    const std::string h = std::to_string(a.heads[i]);
    out.push_back({prefix + ".q." + h, a.query[i]});
    out.push_back({prefix + ".k." + h, a.key[i]});
    out.push_back({prefix + ".v." + h, a.value[i]});
  }
  out.push_back({prefix + ".out", a.out_proj});
  out.push_back({prefix + ".out_bias", a.out_bias});
}

void push_ff(std::vector<NamedParameter>& out, const std::string& prefix, const FeedForwardWeights& f) {
  out.push_back({prefix + ".w1", f.w1});
  out.push_back({prefix + ".b1", f.b1});
  out.push_back({prefix + ".w2", f.w2});
  out.push_back({prefix + ".b2", f.b2});
}

Var copy_var(const Var& v) { return Var::parameter(v.value()); }

AttentionWeights copy_attention(const AttentionWeights& a) {
  AttentionWeights r;
  r.heads = a.heads;
  for (const auto& v : a.query) r.query.push_back(copy_var(v));
  for (const auto& v : a.key) r.key.push_back(copy_var(v));
  for (const auto& v : a.value) r.value.push_back(copy_var(v));
  r.out_proj = copy_var(a.out_proj);
  r.out_bias = copy_var(a.out_bias);
  return r;
}

LayerNormWeights copy_norm(const LayerNormWeights& n) { return {copy_var(n.gain), copy_var(n.bias)}; }
FeedForwardWeights copy_ff(const FeedForwardWeights& f) {
  return {copy_var(f.w1), copy_var(f.b1), copy_var(f.w2), copy_var(f.b2)};
}

Tensor positional_encoding(std::size_t len, std::size_t d) {
  Tensor pe({len, d});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe[pos * d + i] = std::sin(angle);
      if (i + 1 < d) pe[pos * d + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

Var embed_tokens(const Model& m, std::span<const int> ids, std::size_t batch, std::size_t len) {
  const std::size_t d = m.config().d_model;
  Var x = scale(embedding(m.embed, ids, {batch, len}), std::sqrt(static_cast<double>(d)));
  const Tensor pe = positional_encoding(len, d);
  Tensor tiled({batch, len, d});
  for (std::size_t b = 0; b < batch; ++b) std::copy(pe.data().begin(), pe.data().end(), tiled.data().begin() + b * len * d);
  return add(x, Var::constant(std::move(tiled)));
}

Var norm(const Var& x, const LayerNormWeights& n) { return layer_norm(x, n.gain, n.bias); }

Var feed_forward(const Var& x, const FeedForwardWeights& f) {
  return add_bias(matmul(relu(add_bias(matmul(x, f.w1), f.b1)), f.w2), f.b2);
}

std::span<const double> gates_for(const HeadMask* mask, const Model& m, const AttentionSite& site) {
  if (!mask) return {};
  const auto& g = mask->gates.at(site.index(m.config().layers));
  if (g.size() != m.attention(site).heads.size()) throw DimensionError("head mask does not match layout at " + site.str());
  return g;
}

Var encode(const Model& m, const Batch& batch, std::vector<SiteAttention>* capture, const HeadMask* mask) {
  Var x = embed_tokens(m, batch.source, batch.size, batch.src_len);
  for (std::size_t l = 0; l < m.encoder.size(); ++l) {
    const auto& blk = m.encoder[l];
    const AttentionSite site{SiteKind::EncoderSelf, l};
    Var h = norm(x, blk.norm1);
    auto att = attention_forward(blk.self_attn, h, h, batch.source_valid, false, gates_for(mask, m, site));
    if (capture) capture->push_back({site, blk.self_attn.heads, att.probs});
    x = add(x, att.output);
    x = add(x, feed_forward(norm(x, blk.norm2), blk.ff));
  }
  return norm(x, m.encoder_norm);
}

Var decode(const Model& m, const Var& memory, const Batch& batch, std::vector<SiteAttention>* capture,
           const HeadMask* mask) {
  Var y = embed_tokens(m, batch.target_in, batch.size, batch.tgt_len);
  std::vector<SiteAttention> self_caps, cross_caps;
  for (std::size_t l = 0; l < m.decoder.size(); ++l) {
    const auto& blk = m.decoder[l];
    const AttentionSite self_site{SiteKind::DecoderSelf, l};
    const AttentionSite cross_site{SiteKind::DecoderCross, l};
    Var h = norm(y, blk.norm1);
    auto self_att = attention_forward(blk.self_attn, h, h, batch.target_valid, true, gates_for(mask, m, self_site));
    y = add(y, self_att.output);
    h = norm(y, blk.norm2);
    auto cross_att =
        attention_forward(blk.cross_attn, h, memory, batch.source_valid, false, gates_for(mask, m, cross_site));
    y = add(y, cross_att.output);
    y = add(y, feed_forward(norm(y, blk.norm3), blk.ff));
    if (capture) {
      self_caps.push_back({self_site, blk.self_attn.heads, self_att.probs});
      cross_caps.push_back({cross_site, blk.cross_attn.heads, cross_att.probs});
    }
  }
  if (capture) {
    capture->insert(capture->end(), self_caps.begin(), self_caps.end());
    capture->insert(capture->end(), cross_caps.begin(), cross_caps.end());
  }
  y = norm(y, m.decoder_norm);
  return add_bias(matmul_bt(y, m.embed), m.logit_bias);
}

void check_lengths(const Model& m, const Batch& batch) {
  const auto limit = m.config().max_seq_len;
  if (batch.src_len > limit || batch.tgt_len > limit) {
    throw LengthError("batch lengths (source " + std::to_string(batch.src_len) + ", target " +
                      std::to_string(batch.tgt_len) + ") exceed max_seq_len " + std::to_string(limit));
  }
}

}  // namespace

Model Model::with_layout(const ModelConfig& config, const HeadLayout& layout) {
  config.validate();
  if (layout.layers != config.layers || layout.heads.size() != kSiteKinds * config.layers) {
    throw FormatError("head layout does not match a model with " + std::to_string(config.layers) + " layers");
  }
  for (const auto& site_heads : layout.heads) {
    if (site_heads.empty()) throw ConstraintError("every attention site needs at least one head");
    for (std::size_t i = 0; i < site_heads.size(); ++i) {
      if (site_heads[i] < 0 || static_cast<std::size_t>(site_heads[i]) >= config.heads ||
          (i > 0 && site_heads[i] <= site_heads[i - 1])) {
        throw FormatError("head indices must be strictly increasing and below " + std::to_string(config.heads));
      }
    }
  }
  Model m;
  m.config_ = config;
  m.embed = zeros({config.vocab_size, config.d_model});
  m.logit_bias = zeros({config.vocab_size});
  const std::size_t n = config.layers;
  for (std::size_t l = 0; l < n; ++l) {
    EncoderBlock e{make_norm(config), make_norm(config),
                   make_attention(config, layout.at({SiteKind::EncoderSelf, l})), make_ff(config)};
    m.encoder.push_back(std::move(e));
  }
  for (std::size_t l = 0; l < n; ++l) {
    DecoderBlock d{make_norm(config),
                   make_norm(config),
                   make_norm(config),
                   make_attention(config, layout.at({SiteKind::DecoderSelf, l})),
                   make_attention(config, layout.at({SiteKind::DecoderCross, l})),
                   make_ff(config)};
    m.decoder.push_back(std::move(d));
  }
  m.encoder_norm = make_norm(config);
  m.decoder_norm = make_norm(config);
  return m;
}

Model Model::init(const ModelConfig& config) {
  config.validate();
  HeadLayout layout{config.layers, {}};
  std::vector<int> full(config.heads);
  for (std::size_t h = 0; h < config.heads; ++h) full[h] = static_cast<int>(h);
  layout.heads.assign(kSiteKinds * config.layers, full);
  Model m = with_layout(config, layout);
  Rng rng(config.seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (auto& p : m.parameters()) {
    if (p.var.value().rank() != 2) continue;  // norms and biases keep their defaults
    for (auto& v : p.var.mutable_value().data()) v = (2.0 * uniform01(rng) - 1.0) * s;
  }
  return m;
}

Model init_model(const ModelConfig& config) { return Model::init(config); }

HeadLayout Model::layout() const {
  HeadLayout layout{config_.layers, {}};
  for (const auto& site : all_sites(config_.layers)) layout.heads.push_back(attention(site).heads);
  return layout;
}

AttentionWeights& Model::attention(const AttentionSite& site) {
  return const_cast<AttentionWeights&>(std::as_const(*this).attention(site));
}

const AttentionWeights& Model::attention(const AttentionSite& site) const {
  if (site.layer >= config_.layers) throw IndexError("no attention site " + site.str());
  switch (site.kind) {
    case SiteKind::EncoderSelf: return encoder[site.layer].self_attn;
    case SiteKind::DecoderSelf: return decoder[site.layer].self_attn;
    case SiteKind::DecoderCross: return decoder[site.layer].cross_attn;
  }
  throw IndexError("no attention site " + site.str());
}

std::vector<NamedParameter> Model::parameters() const {
  std::vector<NamedParameter> out;
  out.push_back({"embed", embed});
  out.push_back({"logit_bias", logit_bias});
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    push_norm(out, p + ".norm1", encoder[l].norm1);
    push_attention(out, p + ".self", encoder[l].self_attn);
    push_norm(out, p + ".norm2", encoder[l].norm2);
    push_ff(out, p + ".ff", encoder[l].ff);
  }
  push_norm(out, "enc.norm", encoder_norm);
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string p = "dec." + std::to_string(l);
    push_norm(out, p + ".norm1", decoder[l].norm1);
    push_attention(out, p + ".self", decoder[l].self_attn);
    push_norm(out, p + ".norm2", decoder[l].norm2);
    push_attention(out, p + ".cross", decoder[l].cross_attn);
    push_norm(out, p + ".norm3", decoder[l].norm3);
    push_ff(out, p + ".ff", decoder[l].ff);
  }
  push_norm(out, "dec.norm", decoder_norm);
  return out;
}

Model Model::clone() const {
  Model m;
  m.config_ = config_;
  m.embed = copy_var(embed);
  m.logit_bias = copy_var(logit_bias);
  for (const auto& e : encoder) {
    m.encoder.push_back({copy_norm(e.norm1), copy_norm(e.norm2), copy_attention(e.self_attn), copy_ff(e.ff)});
  }
  for (const auto& d : decoder) {
    m.decoder.push_back({copy_norm(d.norm1), copy_norm(d.norm2), copy_norm(d.norm3), copy_attention(d.self_attn),
                         copy_attention(d.cross_attn), copy_ff(d.ff)});
  }
  m.encoder_norm = copy_norm(encoder_norm);
  m.decoder_norm = copy_norm(decoder_norm);
  return m;
}

void Model::round_to_float32() {
  for (auto& p : parameters()) {
    for (auto& v : p.var.mutable_value().data()) v = static_cast<double>(static_cast<float>(v));
  }
}

Batch make_batch(std::span<const EncodedExample> examples, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  if (b.size == 0) throw UsageError("make_batch: empty batch");
  for (auto i : indices) {
    b.src_len = std::max(b.src_len, examples[i].source.size());
    b.tgt_len = std::max(b.tgt_len, examples[i].target.size() + 1);
  }
  if (b.src_len == 0) throw LengthError("make_batch: empty source sequence");
  b.source.assign(b.size * b.src_len, Vocabulary::kPad);
  b.source_valid.assign(b.size * b.src_len, 0);
  b.target_in.assign(b.size * b.tgt_len, Vocabulary::kPad);
  b.target_out.assign(b.size * b.tgt_len, Vocabulary::kPad);
  b.target_valid.assign(b.size * b.tgt_len, 0);
  for (std::size_t r = 0; r < b.size; ++r) {
    const auto& ex = examples[indices[r]];
    for (std::size_t t = 0; t < ex.source.size(); ++t) {
      b.source[r * b.src_len + t] = ex.source[t];
      b.source_valid[r * b.src_len + t] = 1;
    }
    b.target_in[r * b.tgt_len] = Vocabulary::kBos;
    for (std::size_t t = 0; t < ex.target.size(); ++t) {
      b.target_in[r * b.tgt_len + t + 1] = ex.target[t];
      b.target_out[r * b.tgt_len + t] = ex.target[t];
    }
    b.target_out[r * b.tgt_len + ex.target.size()] = Vocabulary::kEos;
    for (std::size_t t = 0; t <= ex.target.size(); ++t) b.target_valid[r * b.tgt_len + t] = 1;
  }
  return b;
}

Batch make_batch(std::span<const EncodedExample> examples) {
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(examples, idx);
}

HeadMask HeadMask::all_on(const Model& model) {
  HeadMask mask;
  for (const auto& site_heads : model.layout().heads) mask.gates.emplace_back(site_heads.size(), 1.0);
  return mask;
}

HeadMask HeadMask::silencing(const Model& model, std::span<const HeadRef> heads) {
  HeadMask mask = all_on(model);
  const auto layout = model.layout();
  for (const auto& ref : heads) {
    const auto& site_heads = layout.at(ref.site);
    auto it = std::find(site_heads.begin(), site_heads.end(), ref.head);
    if (it == site_heads.end()) throw IndexError("head " + std::to_string(ref.head) + " not present at " + ref.site.str());
    mask.gates[ref.site.index(layout.layers)][static_cast<std::size_t>(it - site_heads.begin())] = 0.0;
  }
  return mask;
}

AttentionResult attention_forward(const AttentionWeights& w, const Var& queries, const Var& keys_values,
                                  std::span<const std::uint8_t> key_valid, bool causal, std::span<const double> gates) {
  const std::size_t heads = w.heads.size();
  Var q = matmul(queries, concat_last(w.query));
  Var k = matmul(keys_values, concat_last(w.key));
  Var v = matmul(keys_values, concat_last(w.value));
  Var probs = attention_probs(q, k, heads, key_valid, causal);
  Var ctx = attention_apply(probs, v);
  if (!gates.empty()) ctx = scale_head_blocks(ctx, gates);
  return {add_bias(matmul(ctx, w.out_proj), w.out_bias), probs};
}

ForwardOutput forward(const Model& model, const Batch& batch, bool capture_attention, const HeadMask* mask) {
  check_lengths(model, batch);
  ForwardOutput out;
  std::vector<SiteAttention>* cap = capture_attention ? &out.attention : nullptr;
  Var memory = encode(model, batch, cap, mask);
  out.logits = decode(model, memory, batch, cap, mask);
  return out;
}

std::vector<std::vector<int>> greedy_decode(const Model& model, const Batch& batch, std::size_t max_len) {
  NoGradGuard no_grad;
  check_lengths(model, Batch{batch.size, batch.src_len, 1, {}, {}, {}, {}, {}});
  max_len = std::min(max_len, model.config().max_seq_len - 1);
  Var memory = encode(model, batch, nullptr, nullptr);
  const std::size_t V = model.config().vocab_size;
  std::vector<std::vector<int>> result(batch.size);
  std::vector<bool> done(batch.size, false);
  Batch step = batch;
  for (std::size_t t = 0; t < max_len; ++t) {
    step.tgt_len = t + 1;
    step.target_in.assign(batch.size * step.tgt_len, Vocabulary::kBos);
    for (std::size_t r = 0; r < batch.size; ++r) {
      for (std::size_t i = 0; i < result[r].size() && i < t; ++i) step.target_in[r * step.tgt_len + i + 1] = result[r][i];
      for (std::size_t i = result[r].size(); i < t; ++i) step.target_in[r * step.tgt_len + i + 1] = Vocabulary::kEos;
    }
    step.target_valid.assign(batch.size * step.tgt_len, 1);
    Var logits = decode(model, memory, step, nullptr, nullptr);
    bool all_done = true;
    for (std::size_t r = 0; r < batch.size; ++r) {
      if (done[r]) continue;
      const double* row = logits.value().data().data() + (r * step.tgt_len + t) * V;
      const int best = static_cast<int>(std::max_element(row, row + V) - row);
      if (best == Vocabulary::kEos) {
        done[r] = true;
      } else {
        result[r].push_back(best);
        all_done = false;
      }
    }
    if (all_done) break;
  }
  return result;
}

Model remove_heads(const Model& model, std::span<const HeadRef> heads) {
  const auto layout = model.layout();
  std::map<std::size_t, std::set<int>> by_site;
  for (const auto& ref : heads) {
    if (ref.site.layer >= layout.layers) throw IndexError("no attention site " + ref.site.str());
    const auto& present = layout.at(ref.site);
    if (std::find(present.begin(), present.end(), ref.head) == present.end()) {
      throw IndexError("head " + std::to_string(ref.head) + " not present at " + ref.site.str());
    }
    if (!by_site[ref.site.index(layout.layers)].insert(ref.head).second) {
      throw IndexError("head " + std::to_string(ref.head) + " listed twice for " + ref.site.str());
    }
  }
  for (const auto& [site_index, drop] : by_site) {
    if (drop.size() >= layout.heads[site_index].size()) {
      throw ConstraintError("removing " + std::to_string(drop.size()) + " heads would empty attention site " +
                            all_sites(layout.layers)[site_index].str());
    }
  }

  Model out = model.clone();
  const std::size_t dk = model.config().head_dim();
  const std::size_t d = model.config().d_model;
  for (const auto& [site_index, drop] : by_site) {
    auto& w = out.attention(all_sites(layout.layers)[site_index]);
    AttentionWeights kept;
    kept.out_bias = w.out_bias;
    std::vector<double> rows;
    for (std::size_t i = 0; i < w.heads.size(); ++i) {
      if (drop.count(w.heads[i])) continue;
      kept.heads.push_back(w.heads[i]);
      kept.query.push_back(w.query[i]);
      kept.key.push_back(w.key[i]);
      kept.value.push_back(w.value[i]);
      const auto& src = w.out_proj.value().storage();
      rows.insert(rows.end(), src.begin() + static_cast<std::ptrdiff_t>(i * dk * d),
                  src.begin() + static_cast<std::ptrdiff_t>((i + 1) * dk * d));
    }
    kept.out_proj = Var::parameter(Tensor({kept.heads.size() * dk, d}, std::move(rows)));
    w = std::move(kept);
  }
  return out;
}

std::size_t count_params(const Model& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.var.value().numel();
  return n;
}

std::uint64_t attention_site_flops(std::size_t d_model, std::size_t d_k, std::size_t heads, std::size_t q_len,
                                   std::size_t kv_len) {
  const std::uint64_t d = d_model, k = d_k, h = heads, q = q_len, kv = kv_len;
  const std::uint64_t projections = h * (q * d * k + 2 * kv * d * k);
  const std::uint64_t scores = h * q * kv * k;
  const std::uint64_t mix = h * q * kv * k;
  const std::uint64_t output = q * h * k * d;
  return 2 * (projections + scores + mix + output);
}

std::uint64_t count_flops(const Model& model, std::size_t src_len, std::size_t tgt_len) {
  const auto& c = model.config();
  const std::size_t dk = c.head_dim();
  const std::uint64_t ff_per_token = 2ULL * 2ULL * c.d_model * c.ff_dim;
  std::uint64_t total = 0;
  for (const auto& blk : model.encoder) {
    total += attention_site_flops(c.d_model, dk, blk.self_attn.heads.size(), src_len, src_len);
    total += ff_per_token * src_len;
  }
  for (const auto& blk : model.decoder) {
    total += attention_site_flops(c.d_model, dk, blk.self_attn.heads.size(), tgt_len, tgt_len);
    total += attention_site_flops(c.d_model, dk, blk.cross_attn.heads.size(), tgt_len, src_len);
    total += ff_per_token * tgt_len;
  }
  total += 2ULL * tgt_len * c.d_model * c.vocab_size;
  return total;
}

}  // namespace headkd
