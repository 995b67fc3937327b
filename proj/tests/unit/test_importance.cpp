#include <doctest.h>

#include <cmath>

#include "headkd/error.hpp"
#include "headkd/importance.hpp"
#include "support/fixtures.hpp"

using namespace headkd;
using namespace headkd::testing;

namespace {

CalibrationConfig small_calibration(std::uint64_t seed = 5) {
  CalibrationConfig c;
  c.num_batches = 2;
  c.batch_size = 8;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("weight_norm hand cases") {
  ModelConfig cfg = micro_config();
  cfg.d_model = 4;
  cfg.heads = 2;
  Model m = init_model(cfg);
  const AttentionSite site{SiteKind::EncoderSelf, 0};
  auto& w = m.attention(site);
  for (auto* group : {&w.query, &w.key, &w.value}) (*group)[0].mutable_value().fill(1.0);
  CHECK(weight_norm(m, site, 0) == 12.0);

  for (auto* group : {&w.query, &w.key, &w.value}) (*group)[1].mutable_value().fill(0.0);
  CHECK(weight_norm(m, site, 1) == 0.0);
  CHECK_THROWS_AS(weight_norm(m, site, 2), IndexError);
}

TEST_CASE("weight_norm is positively homogeneous") {
  Model m = init_model(toy_config());
  const AttentionSite site{SiteKind::DecoderCross, 1};
  const double before = weight_norm(m, site, 3);
  auto& w = m.attention(site);
  const double c = 2.5;
  for (auto* group : {&w.query, &w.key, &w.value}) {
    for (double& v : (*group)[3].mutable_value().data()) v *= c;
  }
  CHECK(weight_norm(m, site, 3) == doctest::Approx(c * before).epsilon(1e-14));
}

TEST_CASE("row entropy hand cases") {
  const std::vector<double> uniform(7, 1.0 / 7.0);
  CHECK(std::abs(row_entropy(uniform) - std::log(7.0)) < 1e-9);
  const std::vector<double> one_hot{0.0, 1.0, 0.0};
  CHECK(std::abs(row_entropy(one_hot)) < 1e-9);
  const std::vector<double> skew{0.75, 0.25};
  CHECK(row_entropy(skew) == doctest::Approx(-0.75 * std::log(0.75) - 0.25 * std::log(0.25)));
  CHECK(row_entropy(skew) == doctest::Approx(0.5623).epsilon(1e-4));
}

TEST_CASE("entropy accumulation skips invalid queries and keys") {
  // batch 1, 3 queries, 3 keys; key 2 and query 1 are padding.
  const std::vector<double> maps{0.5, 0.5, 0.0,  //
                                 0.2, 0.3, 0.5,  //
                                 1.0, 0.0, 0.0};
  const std::vector<std::uint8_t> qv{1, 0, 1};
  const std::vector<std::uint8_t> kv{1, 1, 0};
  EntropyAccumulator acc;
  acc.add(maps, 1, 3, 3, qv, kv);
  CHECK(acc.rows() == 2);
  CHECK(acc.mean() == doctest::Approx(std::log(2.0) / 2.0));

  EntropyAccumulator empty;
  CHECK_THROWS_AS(empty.mean(), CalibrationError);
  const std::vector<std::uint8_t> none{0, 0, 0};
  CHECK_THROWS_AS(attention_entropy(maps, 1, 3, 3, none, kv), CalibrationError);
}

TEST_CASE("combined score") {
  ImportanceMatrix m;
  m.layers = 1;
  for (const auto& site : all_sites(1)) m.sites.push_back({site, {{0, 2.0, 1.0, 0.0}}});
  const auto s = with_alpha(m, 0.5);
  CHECK(s.sites[0].heads[0].S == 1.5);
  CHECK(with_alpha(m, 1.0).sites[0].heads[0].S == 2.0);
  CHECK(with_alpha(m, 0.0).sites[0].heads[0].S == 1.0);
  CHECK_THROWS_AS(with_alpha(m, 1.5), ConfigError);
  CHECK_THROWS_AS(with_alpha(m, -0.1), ConfigError);
}

TEST_CASE("importance_scores on a toy model") {
  const auto cfg = toy_config();
  const Model m = init_model(cfg);
  const auto ex = random_examples(40, cfg.vocab_size, 12, 9, 8);
  const auto calib = small_calibration();
  const auto scores = importance_scores(m, ex, calib, 0.5);

  REQUIRE(scores.sites.size() == 6);
  CHECK(scores.total_heads() == 24);
  // Longest keys the calibration could have seen: source 12, target 9 + BOS.
  const double bound = std::log(12.0);
  for (const auto& site : scores.sites) {
    for (const auto& h : site.heads) {
      CHECK(h.H >= 0.0);
      CHECK(h.H <= bound + 1e-12);
      CHECK(h.w == weight_norm(m, site.site, h.head));
      CHECK(h.S == doctest::Approx(0.5 * h.w + 0.5 * h.H).epsilon(1e-15));
    }
  }

  SUBCASE("deterministic and serializable") {
    const auto again = importance_scores(m, ex, calib, 0.5);
    CHECK(again.to_json() == scores.to_json());
    const auto back = ImportanceMatrix::from_json(scores.to_json());
    CHECK(back.to_json() == scores.to_json());
  }
  SUBCASE("alpha recombination agrees with a fresh run") {
    const auto fresh = importance_scores(m, ex, calib, 0.2);
    const auto recombined = with_alpha(scores, 0.2);
    for (std::size_t s = 0; s < 6; ++s) {
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(fresh.sites[s].heads[i].S == recombined.sites[s].heads[i].S);
      }
    }
  }
  SUBCASE("pruned heads are absent") {
    const Model pruned = remove_heads(m, std::vector<HeadRef>{{{SiteKind::DecoderSelf, 0}, 1}});
    const auto ps = importance_scores(pruned, ex, calib, 0.5);
    CHECK(ps.total_heads() == 23);
    const auto& site = ps.at({SiteKind::DecoderSelf, 0});
    REQUIRE(site.heads.size() == 3);
    CHECK(site.heads[0].head == 0);
    CHECK(site.heads[1].head == 2);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(importance_scores(m, ex, calib, 1.01), ConfigError);
    auto big = calib;
    big.num_batches = 10;
    CHECK_THROWS_AS(importance_scores(m, ex, big, 0.5), ConfigError);
  }
}

TEST_CASE("uniform attention gives ln L entropy") {
  // With all Q and K projections zero every query attends uniformly.
  auto cfg = toy_config();
  Model m = init_model(cfg);
  for (const auto& site : all_sites(cfg.layers)) {
    auto& w = m.attention(site);
    for (auto& q : w.query) q.mutable_value().fill(0.0);
  }
  std::vector<EncodedExample> ex = random_examples(8, cfg.vocab_size, 1, 1, 2);
  for (auto& e : ex) {
    e.source.assign(6, 7);
    e.target.assign(4, 8);
  }
  CalibrationConfig calib;
  calib.num_batches = 1;
  calib.batch_size = 8;
  const auto scores = importance_scores(m, ex, calib, 0.5);
  const double enc = std::log(6.0);
  for (const auto& h : scores.at({SiteKind::EncoderSelf, 1}).heads) CHECK(std::abs(h.H - enc) < 1e-9);
  for (const auto& h : scores.at({SiteKind::DecoderCross, 0}).heads) CHECK(std::abs(h.H - enc) < 1e-9);
  // Causal decoder rows see 1..5 keys (BOS plus four target tokens).
  double causal = 0.0;
  for (int k = 1; k <= 5; ++k) causal += std::log(static_cast<double>(k));
  causal /= 5.0;
  for (const auto& h : scores.at({SiteKind::DecoderSelf, 0}).heads) CHECK(std::abs(h.H - causal) < 1e-9);
}

TEST_CASE("calibration config json") {
  CalibrationConfig c;
  c.split = CalibrationSplit::Validation;
  c.num_batches = 3;
  c.normalize_per_site = true;
  const auto back = CalibrationConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  auto j = c.to_json();
  j["bogus"] = 1;
  CHECK_THROWS_AS(CalibrationConfig::from_json(j), ConfigError);
}
