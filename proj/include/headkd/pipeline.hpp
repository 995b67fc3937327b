#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headkd/datagen.hpp"
#include "headkd/distiller.hpp"
#include "headkd/importance.hpp"
#include "headkd/model.hpp"
#include "headkd/pruner.hpp"

namespace headkd {

struct DatasetConfig {
  std::string preset = "math23k";  // "math23k" (7:1:2) or "asdiv" (8:1:1)
  GeneratorOptions generator;
  SplitSpec split;
};

struct BenchConfig {
  std::size_t batches = 30;  // timed batches
  std::size_t warmup = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 3;
};

struct PipelineConfig {
  DatasetConfig data;
  ModelConfig model;  // vocab_size 0 means "size of the corpus vocabulary"
  TrainConfig teacher_train;
  TrainConfig student_train;
  PruneSchedule schedule;
  PruningOptions pruning;
  DistillConfig distill;
  RecursionConfig recursion;
  BenchConfig bench;
  std::filesystem::path output_dir = "runs/toy";

  // Defaults used by the tests and the README walkthrough.
  static PipelineConfig toy();

  nlohmann::json to_json() const;
  // Missing keys keep toy() values; unknown keys throw ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

// Command-line overrides. --seed re-derives every seed from one value.
struct Overrides {
  std::optional<double> alpha;
  std::optional<double> p_max;
  std::optional<std::string> strategy;
  std::optional<std::uint64_t> seed;
};
void apply_overrides(PipelineConfig& config, const Overrides& overrides);

// Corpus, splits and vocabulary, tokenized per split.
struct PreparedData {
  std::vector<Problem> problems;
  DatasetSplits splits;
  Vocabulary vocab;
  std::vector<EncodedExample> train, val, test;

  TrainData train_data() const { return {train, val, &vocab}; }
};

PreparedData prepare_data(const PipelineConfig& config);
// Reads corpus.jsonl, splits.json and vocab.json from the output directory,
// generating them first when absent.
PreparedData load_or_generate_data(const PipelineConfig& config, std::ostream* log = nullptr);

ModelConfig resolved_model_config(const PipelineConfig& config, const Vocabulary& vocab);

struct GenDataResult {
  std::size_t problems = 0;
  std::array<std::size_t, kComplexityLevels> level_counts{};
  std::array<std::size_t, 3> split_sizes{};
};
GenDataResult cmd_gen_data(const PipelineConfig& config, std::ostream& log);

struct TeacherResult {
  Model model;
  double val_accuracy = 0.0;
  std::vector<EpochMetrics> history;
};
// Writes teacher.pkd and appends to metrics.jsonl.
TeacherResult cmd_train(const PipelineConfig& config, std::ostream& log);

// Writes importance.json and prints the lowest `show` heads.
ImportanceMatrix cmd_score(const PipelineConfig& config, const std::filesystem::path& checkpoint, std::ostream& log,
                           std::size_t show = 6);

// One-shot pruning of a checkpoint to p_max; writes pruned.pkd and plan.json.
PrunePlan cmd_prune(const PipelineConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);

// Recursive prune + distill starting from a teacher checkpoint; writes
// student.pkd plus one checkpoint per stage.
RecursionResult cmd_distill(const PipelineConfig& config, const std::filesystem::path& teacher_checkpoint,
                            std::ostream& log);

struct HardwareInfo {
  std::string cpu;
  unsigned hardware_threads = 0;
  unsigned threads_used = 1;
  std::string compiler;

  nlohmann::json to_json() const;
};
HardwareInfo hardware_info();

struct BenchResult {
  double teacher_ms = 0.0;  // median per-batch forward latency
  double student_ms = 0.0;
  double speedup_pct = 0.0;  // median over batches of (t_T - t_S) / t_S * 100
  std::size_t batches = 0;
  std::size_t warmup = 0;
  std::size_t batch_size = 0;
  HardwareInfo hardware;

  nlohmann::json to_json() const;
};

// Alternates teacher and student forwards on identical fixed-seed batches.
BenchResult benchmark(const Model& teacher, const Model& student, std::span<const EncodedExample> examples,
                      const BenchConfig& config);
BenchResult cmd_bench(const PipelineConfig& config, const std::filesystem::path& teacher_checkpoint,
                      const std::filesystem::path& student_checkpoint, std::ostream& log);

double reduction_pct(double teacher, double student);
double speedup_pct(double teacher_ms, double student_ms);

struct ModelReport {
  std::string name;
  AccuracyReport test;
  std::size_t heads = 0;
  std::size_t params = 0;
  std::size_t param_bytes = 0;  // float32 storage
  std::uint64_t flops = 0;
  double param_reduction_pct = 0.0;
  double flop_reduction_pct = 0.0;
  // Wall-clock fields.
  double latency_ms = 0.0;
  double speedup_pct = 0.0;

  nlohmann::json to_json(bool include_timing = true) const;
};

struct RunReport {
  nlohmann::json config;
  std::size_t ref_src_len = 0;  // FLOPs are counted at these lengths
  std::size_t ref_tgt_len = 0;
  std::vector<ModelReport> models;  // teacher first
  double teacher_val_accuracy = 0.0;
  std::vector<EpochMetrics> teacher_history;  // empty when rebuilt from checkpoints
  std::vector<StageResult> stages;
  BenchResult bench;

  // include_timing=false drops latency, Speed and hardware fields.
  nlohmann::json to_json(bool include_timing = true) const;
  std::string table() const;
};

// Test-set accuracy, params, FLOPs and latency of both models.
RunReport build_report(const PipelineConfig& config, const PreparedData& data, const Model& teacher,
                       const Model& student, const std::vector<StageResult>& stages);

// Teacher training, recursive prune + distill, evaluation and benchmark.
// Writes report.json and report.txt into the output directory.
RunReport cmd_pipeline(const PipelineConfig& config, std::ostream& log);

// Rebuilds the report from teacher.pkd and student.pkd.
RunReport cmd_report(const PipelineConfig& config, std::ostream& log);

}  // namespace headkd
