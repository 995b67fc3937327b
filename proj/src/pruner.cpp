#include "headkd/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "headkd/error.hpp"
#include "headkd/random.hpp"

namespace headkd {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Combined: return "combined";
    case Strategy::NormOnly: return "norm_only";
    case Strategy::EntropyOnly: return "entropy_only";
    case Strategy::Random: return "random";
    case Strategy::GlobalThreshold: return "global_threshold";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::Combined, Strategy::NormOnly, Strategy::EntropyOnly, Strategy::Random,
                 Strategy::GlobalThreshold}) {
    if (strategy_name(s) == name) return s;
  }
  throw ConfigError("unknown pruning strategy '" + std::string(name) + "'");
}

void PruneSchedule::validate() const {
  if (!(p_min >= 0.0 && p_min < 1.0)) throw ConfigError("p_min must lie in [0, 1)");
  if (!(p_max >= 0.0 && p_max <= 1.0)) throw ConfigError("p_max must lie in [0, 1]");
  if (p_min > p_max) throw ConfigError("p_min exceeds p_max");
  if (total_steps == 0) throw ConfigError("schedule needs at least one step");
  if (!(exponent > 0.0)) throw ConfigError("schedule exponent must be positive");
}

nlohmann::json PruneSchedule::to_json() const {
  return {{"p_min", p_min}, {"p_max", p_max}, {"total_steps", total_steps}, {"exponent", exponent}};
}

PruneSchedule PruneSchedule::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"p_min", "p_max", "total_steps", "exponent"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown schedule key '" + k + "'");
  }
  PruneSchedule s;
  try {
    s.p_min = j.value("p_min", s.p_min);
    s.p_max = j.value("p_max", s.p_max);
    s.total_steps = j.value("total_steps", s.total_steps);
    s.exponent = j.value("exponent", s.exponent);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  s.validate();
  return s;
}

double pruning_ratio(std::size_t t, const PruneSchedule& schedule) {
  if (t > schedule.total_steps) {
    throw RangeError("step " + std::to_string(t) + " is past the schedule end T=" + std::to_string(schedule.total_steps));
  }
  if (t == schedule.total_steps) return schedule.p_max;
  const double frac = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  return schedule.p_min + (schedule.p_max - schedule.p_min) * std::pow(frac, schedule.exponent);
}

std::size_t heads_to_prune(double p, std::size_t total_heads) {
  if (!(p > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(total_heads) + 1e-9));
}

nlohmann::json PrunePlan::to_json() const {
  nlohmann::json heads_json = nlohmann::json::array();
  for (const auto& h : heads) {
    heads_json.push_back({{"kind", site_kind_name(h.site.kind)}, {"layer", h.site.layer}, {"head", h.head}});
  }
  return {{"strategy", strategy_name(strategy)}, {"heads", heads_json}, {"skipped", skipped}};
}

PrunePlan PrunePlan::from_json(const nlohmann::json& j) {
  PrunePlan plan;
  try {
    plan.strategy = parse_strategy(j.at("strategy").get<std::string>());
    plan.skipped = j.value("skipped", std::size_t{0});
    for (const auto& h : j.at("heads")) {
      plan.heads.push_back(
          {{parse_site_kind(h.at("kind").get<std::string>()), h.at("layer").get<std::size_t>()}, h.at("head").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed prune plan: ") + e.what());
  }
  std::set<HeadRef> unique(plan.heads.begin(), plan.heads.end());
  if (unique.size() != plan.heads.size()) throw FormatError("prune plan lists a head twice");
  return plan;
}

std::size_t removable_heads(const ImportanceMatrix& scores) {
  std::size_t n = 0;
  for (const auto& s : scores.sites) n += s.heads.empty() ? 0 : s.heads.size() - 1;
  return n;
}

namespace {

struct Candidate {
  double key;
  HeadRef ref;
  std::size_t site_index;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
  return std::tie(a.key, a.ref) < std::tie(b.key, b.ref);
}

std::vector<Candidate> candidates(const ImportanceMatrix& scores, Strategy strategy) {
  std::vector<Candidate> out;
  for (std::size_t s = 0; s < scores.sites.size(); ++s) {
    for (const auto& h : scores.sites[s].heads) {
      double key = h.S;
      if (strategy == Strategy::NormOnly) key = h.w;
      if (strategy == Strategy::EntropyOnly) key = h.H;
      out.push_back({key, {scores.sites[s].site, h.head}, s});
    }
  }
  return out;
}

// Walks `order`, taking heads until `count` are chosen and skipping any head
// that would be the last one left at its site.
PrunePlan take_in_order(const ImportanceMatrix& scores, const std::vector<Candidate>& order, std::size_t count,
                        Strategy strategy) {
  PrunePlan plan{strategy, {}, 0};
  std::vector<std::size_t> left(scores.sites.size());
  for (std::size_t s = 0; s < left.size(); ++s) left[s] = scores.sites[s].heads.size();
  for (const auto& c : order) {
    if (plan.heads.size() == count) break;
    if (left[c.site_index] <= 1) {
      ++plan.skipped;
      continue;
    }
    --left[c.site_index];
    plan.heads.push_back(c.ref);
  }
  return plan;
}

// Threshold form of the greedy rule: each site's top-ranked head is never
// removable, and the rest are cut below the count-th smallest key.
PrunePlan threshold_select(const ImportanceMatrix& scores, std::size_t count) {
  auto all = candidates(scores, Strategy::Combined);
  std::vector<const Candidate*> site_top(scores.sites.size(), nullptr);
  for (const auto& c : all) {
    auto& top = site_top[c.site_index];
    if (!top || ranks_before(*top, c)) top = &c;
  }
  std::vector<Candidate> pool;
  for (const auto& c : all) {
    if (&c == site_top[c.site_index]) continue;
    pool.push_back(c);
  }
  PrunePlan plan{Strategy::GlobalThreshold, {}, 0};
  if (count == 0) return plan;
  std::vector<double> keys;
  for (const auto& c : pool) keys.push_back(c.key);
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count - 1), keys.end());
  const double threshold = keys[count - 1];
  std::vector<Candidate> at_threshold;
  for (const auto& c : pool) {
    if (c.key < threshold) {
      plan.heads.push_back(c.ref);
    } else if (c.key == threshold) {
      at_threshold.push_back(c);
    }
  }
  std::sort(at_threshold.begin(), at_threshold.end(), ranks_before);
  for (const auto& c : at_threshold) {
    if (plan.heads.size() == count) break;
    plan.heads.push_back(c.ref);
  }
  // Protected heads ranked below the last selected one are the ones the
  // greedy walk would have passed over.
  const Candidate* last = nullptr;
  for (const auto& c : pool) {
    if (std::find(plan.heads.begin(), plan.heads.end(), c.ref) == plan.heads.end()) continue;
    if (!last || ranks_before(*last, c)) last = &c;
  }
  for (const auto* top : site_top) {
    if (top && ranks_before(*top, *last)) ++plan.skipped;
  }
  std::sort(plan.heads.begin(), plan.heads.end());
  return plan;
}

}  // namespace

PrunePlan select_heads(const ImportanceMatrix& scores, std::size_t count, Strategy strategy, std::uint64_t seed) {
  const std::size_t limit = removable_heads(scores);
  if (count > limit) {
    throw ConstraintError("cannot prune " + std::to_string(count) + " heads; only " + std::to_string(limit) +
                          " can go while every site keeps one");
  }
  if (strategy == Strategy::GlobalThreshold) return threshold_select(scores, count);

  auto order = candidates(scores, strategy);
  if (strategy == Strategy::Random) {
    Rng rng(seed);
    shuffle(order, rng);
  } else {
    std::sort(order.begin(), order.end(), ranks_before);
  }
  auto plan = take_in_order(scores, order, count, strategy);
  std::sort(plan.heads.begin(), plan.heads.end());
  return plan;
}

Model remove_heads(const Model& model, const PrunePlan& plan) { return remove_heads(model, std::span(plan.heads)); }

PruneStepResult prune_to_ratio(const Model& model, const ImportanceMatrix& scores, double p, Strategy strategy,
                               std::uint64_t seed) {
  const auto& c = model.config();
  const std::size_t original = kSiteKinds * c.layers * c.heads;
  const std::size_t already = original - model.layout().total_heads();
  const std::size_t target = heads_to_prune(p, original);
  if (scores.total_heads() != model.layout().total_heads()) {
    throw ContractError("importance matrix does not match the model's current layout");
  }
  if (target <= already) return {model.clone(), PrunePlan{strategy, {}, 0}, already};
  PrunePlan plan = select_heads(scores, target - already, strategy, seed);
  Model pruned = remove_heads(model, plan);
  return {std::move(pruned), std::move(plan), target};
}

PruneStepResult prune_step(const Model& model, const ImportanceMatrix& scores, std::size_t t,
                           const PruneSchedule& schedule, Strategy strategy, std::uint64_t seed) {
  schedule.validate();
  return prune_to_ratio(model, scores, pruning_ratio(t, schedule), strategy, seed);
}

}  // namespace headkd
