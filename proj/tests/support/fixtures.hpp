#pragma once

#include <vector>

#include "headkd/datagen.hpp"
#include "headkd/model.hpp"
#include "headkd/random.hpp"

namespace headkd::testing {

// Random token sequences with ragged lengths, for model-level tests that do
// not need real problems.
inline std::vector<EncodedExample> random_examples(std::size_t count, std::size_t vocab, std::size_t max_src,
                                                   std::size_t max_tgt, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    EncodedExample e;
    e.id = i;
    const auto src_len = 1 + uniform_index(rng, max_src);
    const auto tgt_len = 1 + uniform_index(rng, max_tgt);
    for (std::size_t t = 0; t < src_len; ++t) e.source.push_back(4 + static_cast<int>(uniform_index(rng, vocab - 4)));
    for (std::size_t t = 0; t < tgt_len; ++t) e.target.push_back(4 + static_cast<int>(uniform_index(rng, vocab - 4)));
    e.complexity = static_cast<Complexity>(i % 3);
    out.push_back(std::move(e));
  }
  return out;
}

inline ModelConfig toy_config(std::size_t vocab = 24, std::uint64_t seed = 1) {
  ModelConfig c;
  c.layers = 2;
  c.d_model = 64;
  c.heads = 4;
  c.ff_dim = 128;
  c.vocab_size = vocab;
  c.max_seq_len = 32;
  c.seed = seed;
  return c;
}

inline ModelConfig micro_config(std::uint64_t seed = 1) {
  ModelConfig c;
  c.layers = 1;
  c.d_model = 8;
  c.heads = 2;
  c.ff_dim = 16;
  c.vocab_size = 10;
  c.max_seq_len = 8;
  c.seed = seed;
  return c;
}

// A random removable set of heads: each site keeps at least one.
inline std::vector<HeadRef> random_plan(const Model& model, Rng& rng) {
  std::vector<HeadRef> plan;
  const auto layout = model.layout();
  for (const auto& site : all_sites(layout.layers)) {
    auto heads = layout.at(site);
    shuffle(heads, rng);
    const auto drop = uniform_index(rng, heads.size());  // 0 .. n-1
    for (std::size_t i = 0; i < drop; ++i) plan.push_back({site, heads[i]});
  }
  return plan;
}

}  // namespace headkd::testing
