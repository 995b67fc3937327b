#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "headkd/importance.hpp"
#include "headkd/model.hpp"

namespace headkd {

enum class Strategy { Combined, NormOnly, EntropyOnly, Random, GlobalThreshold };

std::string_view strategy_name(Strategy s);
// Throws ConfigError for an unknown name.
Strategy parse_strategy(std::string_view name);

// p_t = p_min + (p_max - p_min) * (t/T)^n
struct PruneSchedule {
  double p_min = 0.0;
  double p_max = 0.25;
  std::size_t total_steps = 2;  // T
  double exponent = 2.0;        // n

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static PruneSchedule from_json(const nlohmann::json& j);
};

// Throws RangeError for t > T.
double pruning_ratio(std::size_t t, const PruneSchedule& schedule);

// floor(p * total_heads). The 1e-9 slack keeps products such as 0.3 * 10
// from landing one below the intended integer.
std::size_t heads_to_prune(double p, std::size_t total_heads);

struct PrunePlan {
  Strategy strategy = Strategy::Combined;
  std::vector<HeadRef> heads;
  // Heads passed over because removing them would have emptied their site.
  std::size_t skipped = 0;

  nlohmann::json to_json() const;
  static PrunePlan from_json(const nlohmann::json& j);
};

// Largest number of heads that can go while every site keeps one.
std::size_t removable_heads(const ImportanceMatrix& scores);

// Picks `count` heads to remove. Score-based strategies take the globally
// lowest S, w or H, ties broken by (site kind, layer, head). Throws
// ConstraintError when count exceeds removable_heads().
PrunePlan select_heads(const ImportanceMatrix& scores, std::size_t count, Strategy strategy, std::uint64_t seed = 0);

Model remove_heads(const Model& model, const PrunePlan& plan);

struct PruneStepResult {
  Model model;
  PrunePlan plan;
  std::size_t target = 0;  // cumulative heads removed after this step
};

// Prunes `model` until floor(p * original heads) heads are gone in total. A
// target already met yields an empty plan and an unchanged model.
PruneStepResult prune_to_ratio(const Model& model, const ImportanceMatrix& scores, double p, Strategy strategy,
                               std::uint64_t seed = 0);

// One scheduled pruning event at step t.
PruneStepResult prune_step(const Model& model, const ImportanceMatrix& scores, std::size_t t,
                           const PruneSchedule& schedule, Strategy strategy, std::uint64_t seed = 0);

}  // namespace headkd
