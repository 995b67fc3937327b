#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "headkd/error.hpp"
#include "headkd/pipeline.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config_path;
  std::string output_dir;
  headkd::Overrides overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON pipeline config (defaults to the toy preset)");
  cmd->add_option("--out", c.output_dir, "Output directory, overriding the config");
  cmd->add_option("--alpha", c.overrides.alpha, "Weight of the weight-norm term in the importance score");
  cmd->add_option("--p-max", c.overrides.p_max, "Final pruning ratio");
  cmd->add_option("--strategy", c.overrides.strategy,
                  "combined, norm_only, entropy_only, random or global_threshold");
  cmd->add_option("--seed", c.overrides.seed, "Derive every seed from this value");
}

headkd::PipelineConfig resolve(const Common& c) {
  auto config = c.config_path.empty() ? headkd::PipelineConfig::toy() : headkd::PipelineConfig::load(c.config_path);
  headkd::apply_overrides(config, c.overrides);
  if (!c.output_dir.empty()) config.output_dir = c.output_dir;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-head pruning with recursive distillation on a synthetic math-word-problem task"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, teacher_ckpt, student_ckpt;

  auto* gen = app.add_subcommand("gen-data", "Generate the corpus, splits and vocabulary");
  auto* trn = app.add_subcommand("train", "Train the unpruned teacher");
  auto* scr = app.add_subcommand("score", "Write the head importance matrix of a checkpoint");
  auto* prn = app.add_subcommand("prune", "Prune a checkpoint to p_max in one step");
  auto* dst = app.add_subcommand("distill", "Recursive pruning and distillation from a teacher checkpoint");
  auto* pip = app.add_subcommand("pipeline", "Teacher training, prune + distill, evaluation and report");
  auto* bch = app.add_subcommand("bench", "Compare teacher and student forward latency");
  auto* rep = app.add_subcommand("report", "Rebuild the report from teacher.pkd and student.pkd");
  for (auto* cmd : {gen, trn, scr, prn, dst, pip, bch, rep}) add_common(cmd, common);
  scr->add_option("--checkpoint", checkpoint, "Checkpoint to score (default: <out>/teacher.pkd)");
  prn->add_option("--checkpoint", checkpoint, "Checkpoint to prune (default: <out>/teacher.pkd)");
  dst->add_option("--teacher", teacher_ckpt, "Teacher checkpoint (default: <out>/teacher.pkd)");
  bch->add_option("--teacher", teacher_ckpt, "Teacher checkpoint (default: <out>/teacher.pkd)");
  bch->add_option("--student", student_ckpt, "Student checkpoint (default: <out>/student.pkd)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = resolve(common);
    const auto dir = config.output_dir;
    auto or_default = [&](const std::string& given, const char* name) {
      return given.empty() ? dir / name : std::filesystem::path(given);
    };
    if (gen->parsed()) {
      headkd::cmd_gen_data(config, std::cout);
    } else if (trn->parsed()) {
      headkd::cmd_train(config, std::cout);
    } else if (scr->parsed()) {
      headkd::cmd_score(config, or_default(checkpoint, "teacher.pkd"), std::cout);
    } else if (prn->parsed()) {
      headkd::cmd_prune(config, or_default(checkpoint, "teacher.pkd"), std::cout);
    } else if (dst->parsed()) {
      headkd::cmd_distill(config, or_default(teacher_ckpt, "teacher.pkd"), std::cout);
    } else if (pip->parsed()) {
      headkd::cmd_pipeline(config, std::cout);
    } else if (bch->parsed()) {
      headkd::cmd_bench(config, or_default(teacher_ckpt, "teacher.pkd"), or_default(student_ckpt, "student.pkd"),
                        std::cout);
    } else if (rep->parsed()) {
      headkd::cmd_report(config, std::cout);
    }
  } catch (const headkd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
