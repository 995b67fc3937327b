#include <doctest.h>

#include <cmath>

#include "headkd/error.hpp"
#include "headkd/model.hpp"
#include "headkd/ops.hpp"
#include "support/fixtures.hpp"

using namespace headkd;
using namespace headkd::testing;

namespace {

bool same_parameters(const Model& a, const Model& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || !(pa[i].var.value() == pb[i].var.value())) return false;
  }
  return true;
}

AttentionWeights single_head(std::size_t d_model, std::size_t d_k, double q, double k, double v) {
  AttentionWeights w;
  w.heads = {0};
  w.query = {Var::constant(Tensor({d_model, d_k}, q))};
  w.key = {Var::constant(Tensor({d_model, d_k}, k))};
  w.value = {Var::constant(Tensor({d_model, d_k}, v))};
  w.out_proj = Var::constant(Tensor({d_k, d_model}, 1.0));
  w.out_bias = Var::constant(Tensor({d_model}, 0.0));
  return w;
}

}  // namespace

TEST_CASE("init_model is deterministic and has 3N sites") {
  const auto cfg = toy_config();
  const Model a = init_model(cfg);
  const Model b = init_model(cfg);
  CHECK(same_parameters(a, b));
  const auto layout = a.layout();
  CHECK(layout.heads.size() == 6);
  for (const auto& h : layout.heads) CHECK(h == std::vector<int>{0, 1, 2, 3});
  CHECK(layout.total_heads() == 24);
  CHECK_FALSE(same_parameters(a, init_model(toy_config(24, 2))));

  const double bound = 1.0 / std::sqrt(64.0);
  for (const auto& p : a.parameters()) {
    for (double v : p.var.value().data()) CHECK(std::abs(v) <= std::max(bound, 1.0));
  }
}

TEST_CASE("invalid model configs are rejected") {
  auto cfg = toy_config();
  cfg.heads = 5;
  CHECK_THROWS_AS(init_model(cfg), ConfigError);
  cfg = toy_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(init_model(cfg), ConfigError);
}

TEST_CASE("attention_forward hand cases") {
  SUBCASE("zero queries and keys attend uniformly over unmasked keys") {
    const auto w = single_head(2, 2, 0.0, 0.0, 1.0);
    Var q = Var::constant(Tensor({1, 1, 2}, 1.0));
    Var kv = Var::constant(Tensor({1, 4, 2}, 1.0));
    const std::vector<std::uint8_t> valid{1, 1, 0, 1};
    const auto r = attention_forward(w, q, kv, valid, false);
    const auto& p = r.probs.value();
    CHECK(p[0] == doctest::Approx(1.0 / 3.0));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0));
    CHECK(p[2] == 0.0);
    CHECK(p[3] == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("a single key gets weight exactly one") {
    const auto w = single_head(2, 2, 0.3, -0.7, 1.0);
    Var q = Var::constant(Tensor({1, 3, 2}, 0.5));
    Var kv = Var::constant(Tensor({1, 1, 2}, 2.0));
    const std::vector<std::uint8_t> valid{1};
    const auto r = attention_forward(w, q, kv, valid, false);
    for (double v : r.probs.value().data()) CHECK(v == 1.0);
  }
  SUBCASE("two queries, two keys, d_k = 1") {
    // d_model = 1 and unit projections, so q_i = x_i, k_j = y_j, v_j = y_j.
    const auto w = single_head(1, 1, 1.0, 1.0, 1.0);
    Var q = Var::constant(Tensor({1, 2, 1}, std::vector<double>{1.0, 2.0}));
    Var kv = Var::constant(Tensor({1, 2, 1}, std::vector<double>{3.0, -1.0}));
    const std::vector<std::uint8_t> valid{1, 1};
    const auto r = attention_forward(w, q, kv, valid, false);
    for (int i = 0; i < 2; ++i) {
      const double x = i == 0 ? 1.0 : 2.0;
      const double e0 = std::exp(x * 3.0), e1 = std::exp(x * -1.0);
      const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
      CHECK(r.probs.value()[2 * i] == doctest::Approx(p0).epsilon(1e-12));
      CHECK(r.output.value()[i] == doctest::Approx(p0 * 3.0 + p1 * -1.0).epsilon(1e-12));
    }
  }
  SUBCASE("all keys masked is a contract violation") {
    const auto w = single_head(2, 2, 0.1, 0.1, 0.1);
    Var q = Var::constant(Tensor({1, 1, 2}, 1.0));
    Var kv = Var::constant(Tensor({1, 2, 2}, 1.0));
    const std::vector<std::uint8_t> none{0, 0};
    CHECK_THROWS_AS(attention_forward(w, q, kv, none, false), ContractError);
  }
}

TEST_CASE("forward batching, capture and causality") {
  const auto cfg = toy_config();
  const Model m = init_model(cfg);
  const auto ex = random_examples(2, cfg.vocab_size, 9, 7, 3);
  const Batch both = make_batch(ex);
  const std::vector<std::size_t> first{0};
  const Batch one = make_batch(ex, first);

  const auto full = forward(m, both);
  const auto single = forward(m, one);
  const std::size_t V = cfg.vocab_size;
  for (std::size_t t = 0; t < one.tgt_len; ++t) {
    for (std::size_t v = 0; v < V; ++v) {
      CHECK(std::abs(single.logits.value()[t * V + v] - full.logits.value()[t * V + v]) < 1e-9);
    }
  }

  const auto captured = forward(m, both, true);
  CHECK(captured.logits.value() == full.logits.value());
  REQUIRE(captured.attention.size() == 6);
  for (std::size_t s = 0; s < 6; ++s) {
    CHECK(captured.attention[s].site == all_sites(2)[s]);
    const auto& p = captured.attention[s].probs;
    const std::size_t rows = p.value().numel() / p.shape().back();
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t k = 0; k < p.shape().back(); ++k) sum += p.value()[r * p.shape().back() + k];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }

  // Editing target tokens after position t leaves logits at t unchanged.
  Batch edited = one;
  const std::size_t t_cut = 2;
  for (std::size_t t = t_cut + 1; t < edited.tgt_len; ++t) edited.target_in[t] = 5;
  const auto e_out = forward(m, edited);
  for (std::size_t t = 0; t <= t_cut; ++t) {
    for (std::size_t v = 0; v < V; ++v) CHECK(e_out.logits.value()[t * V + v] == single.logits.value()[t * V + v]);
  }
}

TEST_CASE("forward rejects sequences longer than max_seq_len") {
  auto cfg = toy_config();
  cfg.max_seq_len = 6;
  const Model m = init_model(cfg);
  const auto ex = random_examples(1, cfg.vocab_size, 1, 1, 1);
  auto long_ex = ex;
  long_ex[0].source.assign(7, 5);
  CHECK_THROWS_AS(forward(m, make_batch(long_ex)), LengthError);
}

TEST_CASE("count_params matches the hand formula") {
  // embed 80 + logit bias 10, encoder layer 576, decoder layer 856, final norms 32.
  CHECK(count_params(init_model(micro_config())) == 1554);
  CHECK(count_params(init_model(toy_config())) == count_params(init_model(toy_config(24, 9))));
}

TEST_CASE("remove_heads") {
  const auto cfg = toy_config();
  const Model m = init_model(cfg);

  SUBCASE("empty plan leaves the model bit-identical") {
    const Model same = remove_heads(m, std::vector<HeadRef>{});
    CHECK(same_parameters(m, same));
    CHECK(same.layout() == m.layout());
  }
  SUBCASE("one head at d_model 64, d_k 16 removes 4096 parameters") {
    const std::vector<HeadRef> plan{{{SiteKind::DecoderCross, 1}, 2}};
    const Model pruned = remove_heads(m, plan);
    CHECK(count_params(m) - count_params(pruned) == 3 * (64 * 16) + 16 * 64);
    CHECK(pruned.layout().at({SiteKind::DecoderCross, 1}) == std::vector<int>{0, 1, 3});
    CHECK(pruned.attention({SiteKind::DecoderCross, 1}).out_proj.shape() == Shape{48, 64});
  }
  SUBCASE("surviving parameters are untouched") {
    Rng rng(4);
    const auto plan = random_plan(m, rng);
    const Model pruned = remove_heads(m, plan);
    const auto before = m.parameters();
    for (const auto& p : pruned.parameters()) {
      auto it = std::find_if(before.begin(), before.end(), [&](const NamedParameter& q) { return q.name == p.name; });
      REQUIRE(it != before.end());
      if (p.name.ends_with(".out")) continue;
      CHECK(p.var.value() == it->var.value());
    }
    // Output projections keep the row blocks of surviving heads verbatim.
    const std::size_t dk = cfg.head_dim();
    for (const auto& site : all_sites(cfg.layers)) {
      const auto& old_w = m.attention(site);
      const auto& new_w = pruned.attention(site);
      for (std::size_t i = 0; i < new_w.heads.size(); ++i) {
        const auto old_i = static_cast<std::size_t>(
            std::find(old_w.heads.begin(), old_w.heads.end(), new_w.heads[i]) - old_w.heads.begin());
        for (std::size_t e = 0; e < dk * cfg.d_model; ++e) {
          CHECK(new_w.out_proj.value()[i * dk * cfg.d_model + e] == old_w.out_proj.value()[old_i * dk * cfg.d_model + e]);
        }
      }
    }
    // The original model is not modified.
    CHECK(m.layout().total_heads() == 24);
  }
  SUBCASE("emptying a site or naming an unknown head fails") {
    std::vector<HeadRef> all_four;
    for (int h = 0; h < 4; ++h) all_four.push_back({{SiteKind::EncoderSelf, 0}, h});
    CHECK_THROWS_AS(remove_heads(m, all_four), ConstraintError);
    const std::vector<HeadRef> unknown{{{SiteKind::EncoderSelf, 0}, 7}};
    CHECK_THROWS_AS(remove_heads(m, unknown), IndexError);
    const std::vector<HeadRef> twice{{{SiteKind::EncoderSelf, 0}, 1}, {{SiteKind::EncoderSelf, 0}, 1}};
    CHECK_THROWS_AS(remove_heads(m, twice), IndexError);
    const Model pruned = remove_heads(m, std::vector<HeadRef>{{{SiteKind::EncoderSelf, 0}, 1}});
    CHECK_THROWS_AS(remove_heads(pruned, std::vector<HeadRef>{{{SiteKind::EncoderSelf, 0}, 1}}), IndexError);
  }
}

TEST_CASE("pruning equals masking and parameter counts follow the block formula") {
  const auto cfg = toy_config();
  const Model m = init_model(cfg);
  const auto ex = random_examples(3, cfg.vocab_size, 10, 8, 11);
  const Batch batch = make_batch(ex);
  const std::size_t block = 4 * cfg.d_model * cfg.head_dim();
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto plan = random_plan(m, rng);
    const Model pruned = remove_heads(m, plan);
    const HeadMask mask = HeadMask::silencing(m, plan);
    const auto a = forward(pruned, batch).logits.value();
    const auto b = forward(m, batch, false, &mask).logits.value();
    CHECK(max_abs_diff(a, b) < 1e-6);
    CHECK(count_params(m) - count_params(pruned) == plan.size() * block);
  }
}

TEST_CASE("count_flops") {
  const auto cfg = toy_config();
  const Model m = init_model(cfg);
  const auto base = count_flops(m, 20, 10);
  const Model pruned = remove_heads(m, std::vector<HeadRef>{{{SiteKind::EncoderSelf, 1}, 0}});
  CHECK(count_flops(pruned, 20, 10) < base);
  const Model more = remove_heads(pruned, std::vector<HeadRef>{{{SiteKind::DecoderSelf, 0}, 3}});
  CHECK(count_flops(more, 20, 10) < count_flops(pruned, 20, 10));

  // Projections 2*(3*8*4 + 2*5*8*4), QK^T 2*3*5*4, AV 2*3*5*4, output 3*2*4*8, times 2.
  CHECK(attention_site_flops(8, 4, 2, 3, 5) == 2 * (832 + 120 + 120 + 192));
  CHECK(attention_site_flops(8, 4, 4, 3, 5) == 2 * attention_site_flops(8, 4, 2, 3, 5));

  // Whole-model total assembled from its parts.
  const std::uint64_t S = 20, T = 10, d = 64, ff = 128, V = cfg.vocab_size;
  std::uint64_t expected = 0;
  for (int l = 0; l < 2; ++l) {
    expected += attention_site_flops(d, 16, 4, S, S) + 4 * d * ff * S;
    expected += attention_site_flops(d, 16, 4, T, T) + attention_site_flops(d, 16, 4, T, S) + 4 * d * ff * T;
  }
  expected += 2 * T * d * V;
  CHECK(base == expected);
}

TEST_CASE("greedy decoding is deterministic and bounded") {
  const auto cfg = toy_config();
  const Model m = init_model(cfg);
  const auto ex = random_examples(4, cfg.vocab_size, 8, 5, 2);
  const Batch batch = make_batch(ex);
  const auto a = greedy_decode(m, batch, 6);
  const auto b = greedy_decode(m, batch, 6);
  CHECK(a == b);
  REQUIRE(a.size() == 4);
  for (const auto& seq : a) {
    CHECK(seq.size() <= 6);
    for (int id : seq) CHECK(id != Vocabulary::kEos);
  }
}

TEST_CASE("clone is independent and float32 rounding is idempotent") {
  Model m = init_model(micro_config());
  Model c = m.clone();
  c.embed.mutable_value()[0] += 1.0;
  CHECK(m.embed.value()[0] != c.embed.value()[0]);
  m.round_to_float32();
  const Model r1 = m.clone();
  m.round_to_float32();
  CHECK(same_parameters(r1, m));
}
