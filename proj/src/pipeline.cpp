#include "headkd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "headkd/checkpoint.hpp"
#include "headkd/error.hpp"
#include "headkd/random.hpp"

namespace headkd {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown " + what + " key '" + k + "'");
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::array<double, 3> preset_ratios(const std::string& preset) {
  if (preset == "math23k") return {7.0, 1.0, 2.0};
  if (preset == "asdiv") return {8.0, 1.0, 1.0};
  throw ConfigError("unknown dataset preset '" + preset + "' (expected math23k or asdiv)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void append_metrics(const fs::path& path, const EpochMetrics& m) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << m.to_json().dump() << '\n';
}

std::string fmt(double v, int precision) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

EpochCallback epoch_logger(const fs::path& metrics, std::ostream& log) {
  return [metrics, &log](const EpochMetrics& m) {
    append_metrics(metrics, m);
    log << m.stage << " epoch " << m.epoch << " loss " << fmt(m.train_loss, 4) << " val " << fmt(m.val_accuracy, 4)
        << " heads " << m.heads_remaining << std::endl;
  };
}

}  // namespace

PipelineConfig PipelineConfig::toy() {
  PipelineConfig c;
  c.teacher_train.learning_rate = 1e-3;
  c.teacher_train.max_epochs = 20;
  c.teacher_train.patience = 5;
  c.teacher_train.warmup_steps = 100;
  c.student_train = c.teacher_train;
  c.student_train.learning_rate = 5e-4;
  c.student_train.max_epochs = 8;
  c.student_train.patience = 3;
  c.student_train.warmup_steps = 0;
  c.schedule.p_max = 0.25;
  c.recursion.stages = {0.125, 0.25};
  return c;
}

nlohmann::json PipelineConfig::to_json() const {
  const auto& g = data.generator;
  return {
      {"data",
       {{"preset", data.preset},
        {"size", g.size},
        {"mix", {g.mix.simple, g.mix.medium, g.mix.complex}},
        {"seed", g.seed},
        {"min_literal", g.min_literal},
        {"max_literal", g.max_literal},
        {"max_operators", g.max_operators},
        {"decimal_probability", g.decimal_probability},
        {"split_ratios", data.split.ratios},
        {"stratify", data.split.stratify},
        {"split_seed", data.split.seed}}},
      {"model", model.to_json()},
      {"teacher_train", teacher_train.to_json()},
      {"student_train", student_train.to_json()},
      {"schedule", schedule.to_json()},
      {"pruning", pruning.to_json()},
      {"distill", distill.to_json()},
      {"recursion", {{"stages", recursion.stages}, {"events_per_stage", recursion.events_per_stage}}},
      {"bench",
       {{"batches", bench.batches}, {"warmup", bench.warmup}, {"batch_size", bench.batch_size}, {"seed", bench.seed}}},
      {"output_dir", output_dir.string()},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"data", "model", "teacher_train", "student_train", "schedule", "pruning", "distill", "recursion",
                  "bench", "output_dir"},
                 "config");
  PipelineConfig c = toy();
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d,
                   {"preset", "size", "mix", "seed", "min_literal", "max_literal", "max_operators",
                    "decimal_probability", "split_ratios", "stratify", "split_seed"},
                   "data");
    auto& g = c.data.generator;
    read_key(d, "preset", c.data.preset);
    c.data.split.ratios = preset_ratios(c.data.preset);
    read_key(d, "size", g.size);
    if (d.contains("mix")) {
      std::array<double, 3> mix{};
      read_key(d, "mix", mix);
      g.mix = {mix[0], mix[1], mix[2]};
    }
    read_key(d, "seed", g.seed);
    read_key(d, "min_literal", g.min_literal);
    read_key(d, "max_literal", g.max_literal);
    read_key(d, "max_operators", g.max_operators);
    read_key(d, "decimal_probability", g.decimal_probability);
    read_key(d, "split_ratios", c.data.split.ratios);
    read_key(d, "stratify", c.data.split.stratify);
    read_key(d, "split_seed", c.data.split.seed);
  }
  if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
  if (j.contains("teacher_train")) c.teacher_train = TrainConfig::from_json(j["teacher_train"], c.teacher_train);
  if (j.contains("student_train")) c.student_train = TrainConfig::from_json(j["student_train"], c.student_train);
  if (j.contains("schedule")) {
    const auto merged = [&] {
      auto base = c.schedule.to_json();
      base.update(j["schedule"]);
      return base;
    }();
    reject_unknown(j["schedule"], {"p_min", "p_max", "total_steps", "exponent"}, "schedule");
    c.schedule = PruneSchedule::from_json(merged);
  }
  if (j.contains("pruning")) {
    const auto& p = j["pruning"];
    reject_unknown(p, {"strategy", "alpha", "calibration", "seed"}, "pruning");
    if (p.contains("strategy")) {
      std::string s;
      read_key(p, "strategy", s);
      c.pruning.strategy = parse_strategy(s);
    }
    read_key(p, "alpha", c.pruning.alpha);
    read_key(p, "seed", c.pruning.seed);
    if (p.contains("calibration")) c.pruning.calibration = CalibrationConfig::from_json(p["calibration"]);
  }
  if (j.contains("distill")) c.distill = DistillConfig::from_json(j["distill"]);
  if (j.contains("recursion")) {
    const auto& r = j["recursion"];
    reject_unknown(r, {"stages", "events_per_stage"}, "recursion");
    read_key(r, "stages", c.recursion.stages);
    read_key(r, "events_per_stage", c.recursion.events_per_stage);
  }
  if (j.contains("bench")) {
    const auto& b = j["bench"];
    reject_unknown(b, {"batches", "warmup", "batch_size", "seed"}, "bench");
    read_key(b, "batches", c.bench.batches);
    read_key(b, "warmup", c.bench.warmup);
    read_key(b, "batch_size", c.bench.batch_size);
    read_key(b, "seed", c.bench.seed);
  }
  if (j.contains("output_dir")) {
    std::string dir;
    read_key(j, "output_dir", dir);
    c.output_dir = dir;
  }
  if (!(c.pruning.alpha >= 0.0 && c.pruning.alpha <= 1.0)) throw ConfigError("pruning.alpha must lie in [0, 1]");
  if (c.bench.batches == 0 || c.bench.batch_size == 0) throw ConfigError("bench needs batches of at least one example");
  c.recursion.resolve(c.schedule);
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void apply_overrides(PipelineConfig& config, const Overrides& o) {
  if (o.alpha) {
    if (!(*o.alpha >= 0.0 && *o.alpha <= 1.0)) throw ConfigError("--alpha must lie in [0, 1]");
    config.pruning.alpha = *o.alpha;
  }
  if (o.strategy) config.pruning.strategy = parse_strategy(*o.strategy);
  if (o.p_max) {
    const double old = config.schedule.p_max;
    config.schedule.p_max = *o.p_max;
    config.schedule.p_min = std::min(config.schedule.p_min, *o.p_max);
    config.schedule.validate();
    // Explicit stages keep their relative spacing.
    if (!config.recursion.stages.empty()) {
      if (*o.p_max == 0.0 || old == 0.0) {
        config.recursion.stages = {*o.p_max};
      } else {
        for (auto& s : config.recursion.stages) s *= *o.p_max / old;
        config.recursion.stages.back() = *o.p_max;
      }
    }
  }
  if (o.seed) {
    const std::uint64_t s = *o.seed;
    config.data.generator.seed = mix_seed(s, 1);
    config.data.split.seed = mix_seed(s, 2);
    config.model.seed = mix_seed(s, 3);
    config.teacher_train.seed = mix_seed(s, 4);
    config.student_train.seed = mix_seed(s, 5);
    config.pruning.calibration.seed = mix_seed(s, 6);
    config.pruning.seed = mix_seed(s, 7);
  }
  config.recursion.resolve(config.schedule);
}

PreparedData prepare_data(const PipelineConfig& config) {
  PreparedData d;
  d.problems = generate_dataset(config.data.generator);
  d.splits = split(d.problems, config.data.split);
  d.vocab = Vocabulary::build(d.problems);
  const std::size_t max_len = config.model.max_seq_len;
  d.train = tokenize_all(d.problems, d.splits.train, d.vocab, max_len);
  d.val = tokenize_all(d.problems, d.splits.val, d.vocab, max_len);
  d.test = tokenize_all(d.problems, d.splits.test, d.vocab, max_len);
  return d;
}

PreparedData load_or_generate_data(const PipelineConfig& config, std::ostream* log) {
  const auto dir = config.output_dir;
  if (!fs::exists(dir / "corpus.jsonl") || !fs::exists(dir / "splits.json") || !fs::exists(dir / "vocab.json")) {
    std::ostringstream sink;
    cmd_gen_data(config, log ? *log : sink);
  }
  PreparedData d;
  d.problems = read_corpus(dir / "corpus.jsonl");
  d.splits = splits_from_json(read_json(dir / "splits.json"));
  d.vocab = Vocabulary::from_json(read_json(dir / "vocab.json"));
  const std::size_t max_len = config.model.max_seq_len;
  d.train = tokenize_all(d.problems, d.splits.train, d.vocab, max_len);
  d.val = tokenize_all(d.problems, d.splits.val, d.vocab, max_len);
  d.test = tokenize_all(d.problems, d.splits.test, d.vocab, max_len);
  return d;
}

ModelConfig resolved_model_config(const PipelineConfig& config, const Vocabulary& vocab) {
  ModelConfig mc = config.model;
  if (mc.vocab_size != 0 && mc.vocab_size != vocab.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(mc.vocab_size) + " does not match the corpus vocabulary (" +
                      std::to_string(vocab.size()) + ")");
  }
  mc.vocab_size = vocab.size();
  mc.validate();
  return mc;
}

GenDataResult cmd_gen_data(const PipelineConfig& config, std::ostream& log) {
  const auto d = prepare_data(config);
  const auto dir = config.output_dir;
  fs::create_directories(dir);
  write_corpus(dir / "corpus.jsonl", d.problems);
  write_text(dir / "splits.json", splits_to_json(d.splits).dump() + "\n");
  write_text(dir / "vocab.json", d.vocab.to_json().dump() + "\n");

  GenDataResult r;
  r.problems = d.problems.size();
  for (const auto& p : d.problems) ++r.level_counts[static_cast<std::size_t>(p.complexity)];
  r.split_sizes = {d.splits.train.size(), d.splits.val.size(), d.splits.test.size()};
  log << "seeds: data " << config.data.generator.seed << ", split " << config.data.split.seed << "\n";
  log << "wrote " << r.problems << " problems to " << (dir / "corpus.jsonl").string() << "\n";
  for (int l = 0; l < kComplexityLevels; ++l) {
    log << "  " << complexity_name(static_cast<Complexity>(l)) << ": " << r.level_counts[l] << "\n";
  }
  log << "splits train/val/test: " << r.split_sizes[0] << "/" << r.split_sizes[1] << "/" << r.split_sizes[2] << "\n";
  return r;
}

TeacherResult cmd_train(const PipelineConfig& config, std::ostream& log) {
  const auto data = load_or_generate_data(config, &log);
  const auto mc = resolved_model_config(config, data.vocab);
  log << "seeds: data " << config.data.generator.seed << ", model " << mc.seed << ", training "
      << config.teacher_train.seed << std::endl;
  const Model initial = Model::init(mc);
  auto trained = train(initial, data.train_data(), config.teacher_train, nullptr, nullptr, "teacher",
                       epoch_logger(config.output_dir / "metrics.jsonl", log));
  save_checkpoint(trained.model, config.output_dir / "teacher.pkd",
                  {{"val_accuracy", trained.best_val_accuracy}, {"best_epoch", trained.best_epoch}});
  log << "teacher: best validation accuracy " << fmt(trained.best_val_accuracy, 4) << " at epoch "
      << trained.best_epoch << "\n";
  return {std::move(trained.model), trained.best_val_accuracy, std::move(trained.history)};
}

ImportanceMatrix cmd_score(const PipelineConfig& config, const fs::path& checkpoint, std::ostream& log,
                           std::size_t show) {
  const auto data = load_or_generate_data(config, &log);
  const auto ck = load_checkpoint(checkpoint);
  if (ck.model.config().vocab_size != data.vocab.size()) {
    throw FormatError("checkpoint vocabulary size does not match the corpus in " + config.output_dir.string());
  }
  const auto& calib = config.pruning.calibration.split == CalibrationSplit::Train ? data.train : data.val;
  const auto scores = importance_scores(ck.model, calib, config.pruning.calibration, config.pruning.alpha);
  write_text(config.output_dir / "importance.json", scores.to_json().dump(2) + "\n");

  std::vector<std::pair<double, HeadRef>> ranked;
  for (const auto& s : scores.sites) {
    for (const auto& h : s.heads) ranked.push_back({h.S, {s.site, h.head}});
  }
  std::sort(ranked.begin(), ranked.end());
  log << "lowest-scoring heads (alpha " << scores.alpha << "):\n";
  for (std::size_t i = 0; i < std::min(show, ranked.size()); ++i) {
    log << "  " << ranked[i].second.site.str() << " head " << ranked[i].second.head << "  S=" << fmt(ranked[i].first, 6)
        << "\n";
  }
  return scores;
}

PrunePlan cmd_prune(const PipelineConfig& config, const fs::path& checkpoint, std::ostream& log) {
  const auto data = load_or_generate_data(config, &log);
  const auto ck = load_checkpoint(checkpoint);
  const auto& calib = config.pruning.calibration.split == CalibrationSplit::Train ? data.train : data.val;
  const auto scores = importance_scores(ck.model, calib, config.pruning.calibration, config.pruning.alpha);
  auto step = prune_to_ratio(ck.model, scores, config.schedule.p_max, config.pruning.strategy, config.pruning.seed);
  save_checkpoint(step.model, config.output_dir / "pruned.pkd");
  write_text(config.output_dir / "plan.json", step.plan.to_json().dump(2) + "\n");
  log << "removed " << step.plan.heads.size() << " heads (" << strategy_name(step.plan.strategy) << "), "
      << step.model.layout().total_heads() << " remain, params " << count_params(ck.model) << " -> "
      << count_params(step.model) << "\n";
  return step.plan;
}

RecursionResult cmd_distill(const PipelineConfig& config, const fs::path& teacher_checkpoint, std::ostream& log) {
  const auto data = load_or_generate_data(config, &log);
  const auto ck = load_checkpoint(teacher_checkpoint);
  log << "seeds: calibration " << config.pruning.calibration.seed << ", training " << config.student_train.seed
      << std::endl;
  const auto dir = config.output_dir;
  auto result = recursive_distill(
      ck.model, data.train_data(), config.recursion, config.schedule, config.distill, config.pruning,
      config.student_train, epoch_logger(dir / "metrics.jsonl", log),
      [&](const StageResult& stage, const Model& student) {
        save_checkpoint(student, dir / ("student_stage" + std::to_string(stage.stage) + ".pkd"),
                        {{"val_accuracy", stage.best_val_accuracy}, {"stage", stage.stage}});
        write_text(dir / ("plan_stage" + std::to_string(stage.stage) + ".json"), stage.plan.to_json().dump(2) + "\n");
        log << "stage " << stage.stage << ": target " << stage.target << ", " << stage.heads_remaining
            << " heads remain, best val " << fmt(stage.best_val_accuracy, 4) << std::endl;
      });
  const double val = result.stages.empty() ? ck.meta.value("val_accuracy", 0.0) : result.stages.back().best_val_accuracy;
  save_checkpoint(result.student, dir / "student.pkd", {{"val_accuracy", val}});
  return result;
}

nlohmann::json HardwareInfo::to_json() const {
  return {{"cpu", cpu}, {"hardware_threads", hardware_threads}, {"threads_used", threads_used}, {"compiler", compiler}};
}

HardwareInfo hardware_info() {
  HardwareInfo h;
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) h.cpu = line.substr(colon + 2);
      break;
    }
  }
  if (h.cpu.empty()) h.cpu = "unknown";
  h.hardware_threads = std::thread::hardware_concurrency();
  h.threads_used = 1;
#if defined(__clang__)
  h.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  h.compiler = "gcc " __VERSION__;
#else
  h.compiler = "unknown";
#endif
  return h;
}

nlohmann::json BenchResult::to_json() const {
  return {{"teacher_ms", teacher_ms}, {"student_ms", student_ms}, {"speedup_pct", speedup_pct},
          {"batches", batches},       {"warmup", warmup},         {"batch_size", batch_size},
          {"hardware", hardware.to_json()}};
}

double reduction_pct(double teacher, double student) { return (teacher - student) / teacher * 100.0; }
double speedup_pct(double teacher_ms, double student_ms) { return (teacher_ms - student_ms) / student_ms * 100.0; }

BenchResult benchmark(const Model& teacher, const Model& student, std::span<const EncodedExample> examples,
                      const BenchConfig& config) {
  if (examples.empty()) throw UsageError("benchmark: no examples");
  if (config.batches == 0 || config.batch_size == 0) throw ConfigError("benchmark needs at least one batch");
  Rng rng(config.seed);
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < config.warmup + config.batches; ++b) {
    std::vector<std::size_t> idx(config.batch_size);
    for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(rng, examples.size()));
    batches.push_back(make_batch(examples, idx));
  }
  NoGradGuard no_grad;
  using clock = std::chrono::steady_clock;
  auto time_forward = [](const Model& m, const Batch& b) {
    const auto t0 = clock::now();
    const auto out = forward(m, b);
    const auto t1 = clock::now();
    if (!std::isfinite(out.logits.value()[0])) throw NumericError("benchmark forward produced a non-finite logit");
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };
  std::vector<double> t_teacher, t_student;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    // Alternate which model goes first so cache effects do not favor one.
    double tt, ts;
    if (b % 2 == 0) {
      tt = time_forward(teacher, batches[b]);
      ts = time_forward(student, batches[b]);
    } else {
      ts = time_forward(student, batches[b]);
      tt = time_forward(teacher, batches[b]);
    }
    if (b >= config.warmup) {
      t_teacher.push_back(tt);
      t_student.push_back(ts);
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  BenchResult r;
  r.teacher_ms = median(t_teacher);
  r.student_ms = median(t_student);
  // Batches differ in length, so speedup is taken per batch before the median.
  std::vector<double> paired(t_teacher.size());
  for (std::size_t i = 0; i < paired.size(); ++i) paired[i] = speedup_pct(t_teacher[i], t_student[i]);
  r.speedup_pct = median(paired);
  r.batches = config.batches;
  r.warmup = config.warmup;
  r.batch_size = config.batch_size;
  r.hardware = hardware_info();
  return r;
}

BenchResult cmd_bench(const PipelineConfig& config, const fs::path& teacher_checkpoint,
                      const fs::path& student_checkpoint, std::ostream& log) {
  const auto data = load_or_generate_data(config, &log);
  const auto teacher = load_checkpoint(teacher_checkpoint).model;
  const auto student = load_checkpoint(student_checkpoint).model;
  const auto r = benchmark(teacher, student, data.test, config.bench);
  log << "teacher " << fmt(r.teacher_ms, 3) << " ms, student " << fmt(r.student_ms, 3) << " ms per batch of "
      << r.batch_size << " (median of " << r.batches << ", " << r.warmup << " warmup, 1 thread)\n";
  log << "Speed+ " << fmt(r.speedup_pct, 2) << "%  on " << r.hardware.cpu << "\n";
  return r;
}

nlohmann::json ModelReport::to_json(bool include_timing) const {
  nlohmann::json j{{"name", name},
                   {"test", test.to_json()},
                   {"heads", heads},
                   {"params", params},
                   {"param_bytes", param_bytes},
                   {"flops", flops},
                   {"param_reduction_pct", param_reduction_pct},
                   {"flop_reduction_pct", flop_reduction_pct}};
  if (include_timing) {
    j["latency_ms"] = latency_ms;
    j["speedup_pct"] = speedup_pct;
  }
  return j;
}

nlohmann::json RunReport::to_json(bool include_timing) const {
  nlohmann::json models_json = nlohmann::json::array();
  for (const auto& m : models) models_json.push_back(m.to_json(include_timing));
  nlohmann::json stages_json = nlohmann::json::array();
  for (const auto& s : stages) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : s.history) history.push_back(h.to_json());
    stages_json.push_back({{"stage", s.stage},
                           {"target", s.target},
                           {"plan", s.plan.to_json()},
                           {"heads_remaining", s.heads_remaining},
                           {"params", s.params},
                           {"best_val_accuracy", s.best_val_accuracy},
                           {"history", history}});
  }
  nlohmann::json teacher_history_json = nlohmann::json::array();
  for (const auto& h : teacher_history) teacher_history_json.push_back(h.to_json());
  nlohmann::json j{{"config", config},
                   {"reference_lengths", {{"source", ref_src_len}, {"target", ref_tgt_len}}},
                   {"models", models_json},
                   {"teacher", {{"val_accuracy", teacher_val_accuracy}, {"history", teacher_history_json}}},
                   {"stages", stages_json}};
  if (include_timing) j["bench"] = bench.to_json();
  return j;
}

namespace {

// Right-aligns by code points so the arrow headers line up.
std::string cell(const std::string& text, std::size_t width) {
  const auto points = static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
  return std::string(width > points ? width - points : 0, ' ') + text;
}

}  // namespace

std::string RunReport::table() const {
  std::ostringstream ss;
  ss << std::left << std::setw(10) << "Model" << cell("Acc", 9) << cell("Param↓", 10) << cell("Speed↑", 10)
     << cell("FLOPs↓", 10) << cell("Heads", 8) << cell("Params", 10) << "\n";
  for (const auto& m : models) {
    ss << std::left << std::setw(10) << m.name << cell(fmt(100.0 * m.test.accuracy(), 2), 9)
       << cell(fmt(m.param_reduction_pct, 2) + "%", 10) << cell(fmt(m.speedup_pct, 2) + "%", 10)
       << cell(fmt(m.flop_reduction_pct, 2) + "%", 10) << cell(std::to_string(m.heads), 8)
       << cell(std::to_string(m.params), 10) << "\n";
  }
  ss << "\nPer-level test accuracy:\n";
  for (const auto& m : models) {
    ss << "  " << m.name << ":";
    for (int l = 0; l < kComplexityLevels; ++l) {
      ss << " " << complexity_name(static_cast<Complexity>(l)) << "=";
      ss << (m.test.levels[l] ? fmt(100.0 * m.test.levels[l]->accuracy(), 2) : std::string("absent"));
    }
    ss << "\n";
  }
  ss << "\nTeacher validation accuracy: " << fmt(100.0 * teacher_val_accuracy, 2) << "\n";
  for (const auto& st : stages) {
    ss << "Stage " << st.stage << ": target " << fmt(100.0 * st.target, 2) << "%, " << st.heads_remaining
       << " heads, validation " << fmt(100.0 * st.best_val_accuracy, 2) << "\n";
  }
  ss << "\nFLOPs at source length " << ref_src_len << ", target length " << ref_tgt_len
     << "; latency: median of " << bench.batches << " batches of " << bench.batch_size << " after " << bench.warmup
     << " warmup, " << bench.hardware.threads_used << " thread, " << bench.hardware.cpu << "\n";
  return ss.str();
}

RunReport build_report(const PipelineConfig& config, const PreparedData& data, const Model& teacher,
                       const Model& student, const std::vector<StageResult>& stages) {
  RunReport r;
  r.config = config.to_json();
  r.stages = stages;
  for (const auto& e : data.test) {
    r.ref_src_len = std::max(r.ref_src_len, e.source.size());
    r.ref_tgt_len = std::max(r.ref_tgt_len, e.target.size() + 1);
  }
  r.bench = benchmark(teacher, student, data.test, config.bench);
  const auto describe = [&](const std::string& name, const Model& m, double latency) {
    ModelReport mr;
    mr.name = name;
    mr.test = evaluate(m, data.test, data.vocab, config.teacher_train.eval_batch_size);
    mr.heads = m.layout().total_heads();
    mr.params = count_params(m);
    mr.param_bytes = 4 * mr.params;
    mr.flops = count_flops(m, r.ref_src_len, r.ref_tgt_len);
    mr.latency_ms = latency;
    return mr;
  };
  auto t = describe("teacher", teacher, r.bench.teacher_ms);
  auto s = describe("student", student, r.bench.student_ms);
  s.param_reduction_pct = reduction_pct(static_cast<double>(t.params), static_cast<double>(s.params));
  s.flop_reduction_pct = reduction_pct(static_cast<double>(t.flops), static_cast<double>(s.flops));
  s.speedup_pct = r.bench.speedup_pct;
  r.models = {t, s};
  return r;
}

namespace {

void write_report(const PipelineConfig& config, const RunReport& report, std::ostream& log) {
  write_text(config.output_dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(config.output_dir / "report.txt", report.table());
  log << report.table();
}

}  // namespace

RunReport cmd_pipeline(const PipelineConfig& config, std::ostream& log) {
  config.recursion.resolve(config.schedule);
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "config.json", config.to_json().dump(2) + "\n");
  std::error_code ec;
  fs::remove(config.output_dir / "metrics.jsonl", ec);
  const auto data = load_or_generate_data(config, &log);
  log << "seeds: data " << config.data.generator.seed << ", model " << config.model.seed << ", training "
      << config.teacher_train.seed << "/" << config.student_train.seed << std::endl;

  const auto mc = resolved_model_config(config, data.vocab);
  auto trained = train(Model::init(mc), data.train_data(), config.teacher_train, nullptr, nullptr, "teacher",
                       epoch_logger(config.output_dir / "metrics.jsonl", log));
  const Model teacher = std::move(trained.model);
  save_checkpoint(teacher, config.output_dir / "teacher.pkd",
                  {{"val_accuracy", trained.best_val_accuracy}, {"best_epoch", trained.best_epoch}});

  Model student = teacher.clone();
  std::vector<StageResult> stages;
  if (config.schedule.p_max > 0.0) {
    auto rec = recursive_distill(
        teacher, data.train_data(), config.recursion, config.schedule, config.distill, config.pruning,
        config.student_train, epoch_logger(config.output_dir / "metrics.jsonl", log),
        [&](const StageResult& stage, const Model& m) {
          save_checkpoint(m, config.output_dir / ("student_stage" + std::to_string(stage.stage) + ".pkd"),
                          {{"val_accuracy", stage.best_val_accuracy}, {"stage", stage.stage}});
        });
    student = std::move(rec.student);
    stages = std::move(rec.stages);
  }
  save_checkpoint(student, config.output_dir / "student.pkd");

  auto report = build_report(config, data, teacher, student, stages);
  report.teacher_val_accuracy = trained.best_val_accuracy;
  report.teacher_history = std::move(trained.history);
  write_report(config, report, log);
  return report;
}

RunReport cmd_report(const PipelineConfig& config, std::ostream& log) {
  const auto data = load_or_generate_data(config, &log);
  const auto teacher = load_checkpoint(config.output_dir / "teacher.pkd");
  const auto student = load_checkpoint(config.output_dir / "student.pkd").model;
  auto report = build_report(config, data, teacher.model, student, {});
  report.teacher_val_accuracy = teacher.meta.value("val_accuracy", 0.0);
  write_report(config, report, log);
  return report;
}

}  // namespace headkd
