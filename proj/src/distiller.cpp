#include "headkd/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "headkd/error.hpp"
#include "headkd/ops.hpp"
#include "headkd/optim.hpp"
#include "headkd/random.hpp"

namespace headkd {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown " + what + " key '" + k + "'");
  }
}

Var zero_scalar() { return Var::constant(Tensor::scalar(0.0)); }

}  // namespace

std::string_view distill_mode_name(DistillMode mode) {
  switch (mode) {
    case DistillMode::ResponseAndFeature: return "response_and_feature";
    case DistillMode::ResponseOnly: return "response_only";
    case DistillMode::FeatureOnly: return "feature_only";
    case DistillMode::None: return "none";
  }
  return "?";
}

DistillMode parse_distill_mode(std::string_view name) {
  for (auto m : {DistillMode::ResponseAndFeature, DistillMode::ResponseOnly, DistillMode::FeatureOnly,
                 DistillMode::None}) {
    if (distill_mode_name(m) == name) return m;
  }
  throw ConfigError("unknown distillation mode '" + std::string(name) + "'");
}

void DistillConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("distillation temperature must be positive");
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(lambda1 + lambda2 > 0.0)) throw ConfigError("lambda1 + lambda2 must be positive");
}

nlohmann::json DistillConfig::to_json() const {
  return {{"tau", tau},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"mode", distill_mode_name(mode)},
          {"per_head_matching", per_head_matching}};
}

DistillConfig DistillConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"tau", "lambda1", "lambda2", "mode", "per_head_matching"}, "distill");
  DistillConfig c;
  try {
    c.tau = j.value("tau", c.tau);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.per_head_matching = j.value("per_head_matching", c.per_head_matching);
    if (j.contains("mode")) c.mode = parse_distill_mode(j.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("distill config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (batch_size == 0 || max_epochs == 0 || patience == 0 || eval_batch_size == 0) {
    throw ConfigError("batch size, epochs and patience must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"weight_decay", weight_decay},     {"batch_size", batch_size},
          {"max_epochs", max_epochs},       {"patience", patience},             {"seed", seed},
          {"warmup_steps", warmup_steps},   {"eval_batch_size", eval_batch_size}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  reject_unknown(j,
                 {"learning_rate", "weight_decay", "batch_size", "max_epochs", "patience", "seed", "warmup_steps",
                  "eval_batch_size"},
                 "train");
  TrainConfig c = base;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

DistillTerms distill_loss(const Var& teacher_logits, const Var& student_logits,
                          const std::vector<SiteAttention>& teacher_attn,
                          const std::vector<SiteAttention>& student_attn, std::span<const std::uint8_t> position_valid,
                          const DistillConfig& config) {
  config.validate();
  DistillTerms terms{zero_scalar(), zero_scalar(), zero_scalar()};
  const bool use_response = config.mode == DistillMode::ResponseAndFeature || config.mode == DistillMode::ResponseOnly;
  const bool use_feature = config.mode == DistillMode::ResponseAndFeature || config.mode == DistillMode::FeatureOnly;

  if (use_response) {
    if (teacher_logits.shape() != student_logits.shape()) {
      throw ContractError("teacher logits " + shape_str(teacher_logits.shape()) + " vs student logits " +
                          shape_str(student_logits.shape()));
    }
    const auto& shape = student_logits.shape();
    const std::size_t last = shape.size() - 1;
    const Shape rows_shape(shape.begin(), shape.end() - 1);
    if (position_valid.size() != shape_numel(rows_shape)) {
      throw DimensionError("position mask has " + std::to_string(position_valid.size()) + " entries for " +
                           std::to_string(shape_numel(rows_shape)) + " rows");
    }
    const double inv_tau = 1.0 / config.tau;
    Var p = Var::constant(softmax(scale(Var::constant(teacher_logits.value()), inv_tau), last).value());
    Var q = softmax(scale(student_logits, inv_tau), last);
    Var kl = kl_rows(p, q);
    const auto valid = static_cast<double>(std::count_if(position_valid.begin(), position_valid.end(),
                                                         [](std::uint8_t v) { return v != 0; }));
    if (valid == 0.0) throw ContractError("no valid positions for the response term");
    Tensor weights(kl.shape());
    for (std::size_t i = 0; i < weights.numel(); ++i) {
      weights[i] = position_valid[i] ? config.tau * config.tau / valid : 0.0;
    }
    terms.response = weighted_sum(kl, weights);
  }

  if (use_feature) {
    if (teacher_attn.size() != student_attn.size() || student_attn.empty()) {
      throw ContractError("teacher captured " + std::to_string(teacher_attn.size()) + " attention sites, student " +
                          std::to_string(student_attn.size()));
    }
    std::vector<Var> site_terms;
    for (std::size_t s = 0; s < student_attn.size(); ++s) {
      const auto& t = teacher_attn[s];
      const auto& st = student_attn[s];
      if (t.site != st.site) throw ContractError("attention captures are not aligned at " + st.site.str());
      if (!config.per_head_matching) {
        Tensor t_avg = mean_heads(Var::constant(t.probs.value())).value();
        Var s_avg = mean_heads(st.probs);
        if (t_avg.shape() != s_avg.shape()) {
          throw ContractError("head-averaged maps differ at " + st.site.str() + ": " + shape_str(t_avg.shape()) +
                              " vs " + shape_str(s_avg.shape()));
        }
        site_terms.push_back(mse(Var::constant(std::move(t_avg)), s_avg));
        continue;
      }
      // Gather the teacher heads that survive in the student.
      const auto& ts = t.probs.shape();
      const auto& ss = st.probs.shape();
      if (ts[0] != ss[0] || ts[2] != ss[2] || ts[3] != ss[3]) {
        throw ContractError("attention maps differ in shape at " + st.site.str());
      }
      const std::size_t block = ts[2] * ts[3];
      Tensor gathered(ss);
      for (std::size_t hs = 0; hs < st.heads.size(); ++hs) {
        auto it = std::find(t.heads.begin(), t.heads.end(), st.heads[hs]);
        if (it == t.heads.end()) {
          throw ContractError("student head " + std::to_string(st.heads[hs]) + " is absent from the teacher at " +
                              st.site.str());
        }
        const auto ht = static_cast<std::size_t>(it - t.heads.begin());
        for (std::size_t b = 0; b < ss[0]; ++b) {
          std::copy_n(t.probs.value().data().begin() + static_cast<std::ptrdiff_t>((b * ts[1] + ht) * block), block,
                      gathered.data().begin() + static_cast<std::ptrdiff_t>((b * ss[1] + hs) * block));
        }
      }
      site_terms.push_back(mse(Var::constant(std::move(gathered)), st.probs));
    }
    Var acc = site_terms.front();
    for (std::size_t i = 1; i < site_terms.size(); ++i) acc = add(acc, site_terms[i]);
    terms.feature = scale(acc, 1.0 / static_cast<double>(site_terms.size()));
  }

  terms.total = add(terms.response, terms.feature);
  return terms;
}

Var total_loss(const Var& task_loss, const Var& distill_loss, double lambda1, double lambda2) {
  return add(scale(distill_loss, lambda1), scale(task_loss, lambda2));
}

double total_loss(double task_loss, double distill_loss, double lambda1, double lambda2) {
  return lambda1 * distill_loss + lambda2 * task_loss;
}

nlohmann::json AccuracyReport::to_json() const {
  nlohmann::json levels_json = nlohmann::json::object();
  for (int l = 0; l < kComplexityLevels; ++l) {
    const auto name = std::string(complexity_name(static_cast<Complexity>(l)));
    if (!levels[l]) {
      levels_json[name] = nullptr;
    } else {
      levels_json[name] = {{"correct", levels[l]->correct}, {"total", levels[l]->total}, {"accuracy", levels[l]->accuracy()}};
    }
  }
  return {{"correct", correct}, {"total", total}, {"accuracy", accuracy()}, {"levels", levels_json}};
}

bool expressions_match(const std::vector<int>& predicted, const std::vector<int>& reference, const Vocabulary& vocab) {
  if (predicted == reference) return true;
  std::string ref;
  try {
    ref = render(parse_expression(detokenize_expression(reference, vocab)));
  } catch (const Error&) {
    return false;
  }
  try {
    return render(parse_expression(detokenize_expression(predicted, vocab))) == ref;
  } catch (const Error&) {
    return false;
  }
}

AccuracyReport score_predictions(const std::vector<std::vector<int>>& predictions,
                                 std::span<const EncodedExample> examples, const Vocabulary& vocab) {
  if (predictions.size() != examples.size()) {
    throw DimensionError(std::to_string(predictions.size()) + " predictions for " + std::to_string(examples.size()) +
                         " examples");
  }
  AccuracyReport report;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const bool ok = expressions_match(predictions[i], examples[i].target, vocab);
    auto& level = report.levels[static_cast<std::size_t>(examples[i].complexity)];
    if (!level) level = LevelAccuracy{};
    ++level->total;
    ++report.total;
    if (ok) {
      ++level->correct;
      ++report.correct;
    }
  }
  return report;
}

AccuracyReport evaluate(const Model& model, std::span<const EncodedExample> examples, const Vocabulary& vocab,
                        std::size_t batch_size) {
  if (examples.empty()) throw UsageError("evaluate: empty split");
  if (batch_size == 0) throw UsageError("evaluate: batch size must be positive");
  // A prediction much longer than every reference cannot match one, so
  // decoding stops a few tokens past the longest reference.
  std::size_t longest = 0;
  for (const auto& e : examples) longest = std::max(longest, e.target.size());
  const std::size_t max_len = longest + 4;
  std::vector<std::vector<int>> predictions;
  predictions.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    const Batch batch = make_batch(examples.subspan(start, n));
    auto decoded = greedy_decode(model, batch, max_len);
    for (auto& d : decoded) predictions.push_back(std::move(d));
  }
  return score_predictions(predictions, examples, vocab);
}

nlohmann::json EpochMetrics::to_json() const {
  return {{"stage", stage},
          {"epoch", epoch},
          {"train_loss", train_loss},
          {"task_loss", task_loss},
          {"distill_loss", distill_loss},
          {"val_accuracy", val_accuracy},
          {"heads_remaining", heads_remaining},
          {"params", params}};
}

TrainResult train(const Model& initial, const TrainData& data, const TrainConfig& config, const Model* teacher,
                  const DistillConfig* distill, const std::string& stage, const EpochCallback& on_epoch) {
  config.validate();
  if (!data.vocab) throw UsageError("train: vocabulary missing");
  if (data.train.empty() || data.val.empty()) throw UsageError("train: empty train or validation split");
  if ((teacher == nullptr) != (distill == nullptr)) {
    throw UsageError("train: a teacher and a distillation config must be given together");
  }
  if (distill) distill->validate();
  const bool distilling = teacher && distill->mode != DistillMode::None;
  const bool need_attention = distilling && distill->mode != DistillMode::ResponseOnly;

  Model model = initial.clone();
  auto params = model.parameters();
  AdamWConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  auto state = OptimizerState::for_parameters(params, adam);

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed);

  TrainResult result{model.clone(), {}, -1.0, 0};
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order, rng);
    double sum_total = 0.0, sum_task = 0.0, sum_distill = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const Batch batch = make_batch(data.train, std::span(order).subspan(start, n));
      const auto out = forward(model, batch, need_attention);
      Var task = cross_entropy(out.logits, batch.target_out, Vocabulary::kPad);
      Var loss = task;
      double distill_value = 0.0;
      if (distilling) {
        ForwardOutput t_out;
        {
          NoGradGuard no_grad;
          t_out = forward(*teacher, batch, need_attention);
        }
        auto terms = distill_loss(t_out.logits, out.logits, t_out.attention, out.attention, batch.target_valid, *distill);
        distill_value = terms.total.value().item();
        loss = total_loss(task, terms.total, distill->lambda1, distill->lambda2);
      }
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("stage '" + stage + "' epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batches + 1) + ": loss is " + std::to_string(loss_value));
      }
      zero_grads(params);
      backward(loss);
      if (config.warmup_steps > 0) {
        const double ramp = std::min(1.0, static_cast<double>(state.step + 1) / static_cast<double>(config.warmup_steps));
        state.config.learning_rate = config.learning_rate * ramp;
      }
      adamw_step(params, state);
      sum_total += loss_value;
      sum_task += task.value().item();
      sum_distill += distill_value;
      ++batches;
    }
    zero_grads(params);
    model.round_to_float32();

    EpochMetrics m;
    m.stage = stage;
    m.epoch = epoch;
    m.train_loss = sum_total / static_cast<double>(batches);
    m.task_loss = sum_task / static_cast<double>(batches);
    m.distill_loss = sum_distill / static_cast<double>(batches);
    m.val_accuracy = evaluate(model, data.val, *data.vocab, config.eval_batch_size).accuracy();
    m.heads_remaining = model.layout().total_heads();
    m.params = count_params(model);
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);

    if (m.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = m.val_accuracy;
      result.best_epoch = epoch;
      result.model = model.clone();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

nlohmann::json PruningOptions::to_json() const {
  return {{"strategy", strategy_name(strategy)}, {"alpha", alpha}, {"calibration", calibration.to_json()}, {"seed", seed}};
}

std::vector<double> RecursionConfig::resolve(const PruneSchedule& schedule) const {
  schedule.validate();
  std::vector<double> targets = stages;
  if (targets.empty()) {
    for (std::size_t t = 1; t <= schedule.total_steps; ++t) targets.push_back(pruning_ratio(t, schedule));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(targets[i] >= 0.0 && targets[i] <= 1.0)) throw ConfigError("stage targets must lie in [0, 1]");
    if (i > 0 && !(targets[i] > targets[i - 1])) throw ConfigError("stage targets must be strictly increasing");
  }
  if (std::abs(targets.back() - schedule.p_max) > 1e-12) {
    throw ConfigError("final stage target " + std::to_string(targets.back()) + " differs from p_max " +
                      std::to_string(schedule.p_max));
  }
  if (!stage_train.empty() && stage_train.size() != targets.size()) {
    throw ConfigError("per-stage training overrides must match the number of stages");
  }
  if (events_per_stage == 0) throw ConfigError("events_per_stage must be positive");
  return targets;
}

RecursionResult recursive_distill(const Model& teacher, const TrainData& data, const RecursionConfig& recursion,
                                  const PruneSchedule& schedule, const DistillConfig& distill,
                                  const PruningOptions& pruning, const TrainConfig& train_config,
                                  const EpochCallback& on_epoch, const StageCallback& on_stage) {
  const auto targets = recursion.resolve(schedule);
  distill.validate();
  const auto& calib_set = pruning.calibration.split == CalibrationSplit::Train ? data.train : data.val;
  const std::size_t original = kSiteKinds * teacher.config().layers * teacher.config().heads;

  RecursionResult result{teacher.clone(), {}};
  Model current_teacher = teacher.clone();
  double previous = static_cast<double>(original - teacher.layout().total_heads()) / static_cast<double>(original);
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const TrainConfig stage_config =
        !recursion.stage_train.empty() && recursion.stage_train[s] ? *recursion.stage_train[s] : train_config;
    const std::string label = "stage" + std::to_string(s + 1);
    StageResult stage;
    stage.stage = s + 1;
    stage.target = targets[s];
    stage.plan.strategy = pruning.strategy;

    Model student = current_teacher.clone();
    const PruneSchedule ramp{previous, targets[s], recursion.events_per_stage, schedule.exponent};
    for (std::size_t e = 1; e <= recursion.events_per_stage; ++e) {
      stage.scores = importance_scores(student, calib_set, pruning.calibration, pruning.alpha);
      const auto seed = mix_seed(pruning.seed, s * recursion.events_per_stage + e);
      auto step = prune_to_ratio(student, stage.scores, pruning_ratio(e, ramp), pruning.strategy, seed);
      student = std::move(step.model);
      stage.plan.heads.insert(stage.plan.heads.end(), step.plan.heads.begin(), step.plan.heads.end());
      stage.plan.skipped += step.plan.skipped;
      if (e < recursion.events_per_stage) {
        TrainConfig one = stage_config;
        one.max_epochs = 1;
        auto warm = train(student, data, one, &current_teacher, &distill, label, on_epoch);
        stage.history.insert(stage.history.end(), warm.history.begin(), warm.history.end());
        student = std::move(warm.model);
      }
    }
    std::sort(stage.plan.heads.begin(), stage.plan.heads.end());

    auto trained = train(student, data, stage_config, &current_teacher, &distill, label, on_epoch);
    stage.history.insert(stage.history.end(), trained.history.begin(), trained.history.end());
    stage.best_val_accuracy = trained.best_val_accuracy;
    current_teacher = std::move(trained.model);
    stage.heads_remaining = current_teacher.layout().total_heads();
    stage.params = count_params(current_teacher);
    if (on_stage) on_stage(stage, current_teacher);
    result.stages.push_back(std::move(stage));
    previous = targets[s];
  }
  result.student = std::move(current_teacher);
  return result;
}

}  // namespace headkd
