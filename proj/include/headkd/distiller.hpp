#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headkd/datagen.hpp"
#include "headkd/importance.hpp"
#include "headkd/model.hpp"
#include "headkd/pruner.hpp"

namespace headkd {

enum class DistillMode { ResponseAndFeature, ResponseOnly, FeatureOnly, None };

std::string_view distill_mode_name(DistillMode mode);
DistillMode parse_distill_mode(std::string_view name);

struct DistillConfig {
  double tau = 2.0;
  double lambda1 = 0.5;  // distillation weight
  double lambda2 = 0.5;  // task weight
  DistillMode mode = DistillMode::ResponseAndFeature;
  // Match each surviving student head against the same teacher head instead
  // of comparing head-averaged maps.
  bool per_head_matching = false;

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static DistillConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;  // epochs without a new best validation accuracy
  std::uint64_t seed = 13;
  // Linear learning-rate warmup over this many optimizer steps (0 = none).
  std::size_t warmup_steps = 0;
  std::size_t eval_batch_size = 64;

  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from `j` keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct DistillTerms {
  Var response;  // tau^2 * mean KL(teacher || student) over valid positions
  Var feature;   // mean attention-map MSE over compared sites
  Var total;     // response + feature, with omitted terms exactly 0
};

// teacher_* are treated as constants. position_valid has one entry per
// logits row. Throws ContractError when attention shapes disagree.
DistillTerms distill_loss(const Var& teacher_logits, const Var& student_logits,
                          const std::vector<SiteAttention>& teacher_attn,
                          const std::vector<SiteAttention>& student_attn, std::span<const std::uint8_t> position_valid,
                          const DistillConfig& config);

// lambda1 * distill + lambda2 * task
Var total_loss(const Var& task_loss, const Var& distill_loss, double lambda1, double lambda2);
double total_loss(double task_loss, double distill_loss, double lambda1, double lambda2);

struct LevelAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t total = 0;
  // Levels with no samples stay empty.
  std::array<std::optional<LevelAccuracy>, kComplexityLevels> levels;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  nlohmann::json to_json() const;
};

// Exact match after canonicalizing both sides; an unparseable prediction is wrong.
bool expressions_match(const std::vector<int>& predicted, const std::vector<int>& reference, const Vocabulary& vocab);
AccuracyReport score_predictions(const std::vector<std::vector<int>>& predictions,
                                 std::span<const EncodedExample> examples, const Vocabulary& vocab);
// Greedy decoding over `examples`; throws UsageError for an empty split.
AccuracyReport evaluate(const Model& model, std::span<const EncodedExample> examples, const Vocabulary& vocab,
                        std::size_t batch_size = 64);

struct EpochMetrics {
  std::string stage;
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double task_loss = 0.0;
  double distill_loss = 0.0;
  double val_accuracy = 0.0;
  std::size_t heads_remaining = 0;
  std::size_t params = 0;

  nlohmann::json to_json() const;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainData {
  std::span<const EncodedExample> train;
  std::span<const EncodedExample> val;
  const Vocabulary* vocab = nullptr;
};

struct TrainResult {
  Model model;  // best validation epoch
  std::vector<EpochMetrics> history;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

// AdamW training with per-epoch validation and early stopping. Parameters are
// rounded to float32 at the end of every epoch, so the returned model survives
// a checkpoint round trip unchanged. With a teacher and a mode other than
// None the loss is total_loss(task, distill); otherwise it is the task loss.
// Throws DivergenceError when the loss stops being finite.
TrainResult train(const Model& initial, const TrainData& data, const TrainConfig& config,
                  const Model* teacher = nullptr, const DistillConfig* distill = nullptr,
                  const std::string& stage = "train", const EpochCallback& on_epoch = {});

struct PruningOptions {
  Strategy strategy = Strategy::Combined;
  double alpha = 0.5;
  CalibrationConfig calibration;
  std::uint64_t seed = 17;  // random strategy only

  nlohmann::json to_json() const;
};

struct RecursionConfig {
  // Cumulative pruning targets; empty means p_t for t = 1..T of the schedule.
  std::vector<double> stages;
  // Optional per-stage training overrides, parallel to `stages`.
  std::vector<std::optional<TrainConfig>> stage_train;
  // Pruning events per stage, spaced one epoch apart on the schedule curve.
  std::size_t events_per_stage = 1;

  // Targets actually used, validated against the schedule.
  std::vector<double> resolve(const PruneSchedule& schedule) const;
};

struct StageResult {
  std::size_t stage = 0;  // 1-based
  double target = 0.0;
  PrunePlan plan;  // heads removed in this stage
  ImportanceMatrix scores;  // matrix behind the stage's last pruning event
  std::size_t heads_remaining = 0;
  std::size_t params = 0;
  double best_val_accuracy = 0.0;
  std::vector<EpochMetrics> history;
};

struct RecursionResult {
  Model student;
  std::vector<StageResult> stages;
};

using StageCallback = std::function<void(const StageResult&, const Model& student)>;

// Prune, distill from the current teacher, then promote the student to
// teacher, once per stage. `teacher` itself is never modified. on_stage runs
// after every completed stage.
RecursionResult recursive_distill(const Model& teacher, const TrainData& data, const RecursionConfig& recursion,
                                  const PruneSchedule& schedule, const DistillConfig& distill,
                                  const PruningOptions& pruning, const TrainConfig& train_config,
                                  const EpochCallback& on_epoch = {}, const StageCallback& on_stage = {});

}  // namespace headkd
