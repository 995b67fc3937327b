#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headkd/expression.hpp"

namespace headkd {

struct Problem {
  std::size_t id = 0;
  std::string text;
  std::vector<std::string> tokens;
  ExpressionAst expression;
  Rational answer;
  Complexity complexity = Complexity::Simple;
};

// Target share of Simple / Medium / Complex problems.
struct LevelMix {
  double simple = 0.5;
  double medium = 0.3;
  double complex = 0.2;
};

struct GeneratorOptions {
  std::size_t size = 5000;
  LevelMix mix;
  std::uint64_t seed = 7;
  int min_literal = 1;
  int max_literal = 20;
  std::size_t max_operators = 6;
  // Probability that a literal is a half-integer ("3.5").
  double decimal_probability = 0.0;
};

// Exact per-level counts by largest remainder, in Simple/Medium/Complex order.
std::array<std::size_t, kComplexityLevels> level_counts(std::size_t size, const LevelMix& mix);

// Deterministic in `options`. Every problem's answer equals
// evaluate_expression(expression). Throws ConfigError for infeasible options.
std::vector<Problem> generate_dataset(const GeneratorOptions& options);

// Renders one problem's text for an expression; exposed for tests.
std::vector<std::string> verbalize_problem(const ExpressionAst& expr, std::uint64_t seed);

struct SplitSpec {
  std::array<double, 3> ratios{7.0, 1.0, 2.0};
  bool stratify = true;
  std::uint64_t seed = 11;
};

// Positions into the problem list.
struct DatasetSplits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Disjoint and exhaustive. With stratification every complexity level is
// allocated by largest remainder, so each split holds its share +- 1 problem.
// Throws SplitError naming the stratum when a split would come out empty.
DatasetSplits split(const std::vector<Problem>& problems, const SplitSpec& spec);

// Largest-remainder allocation of n items over normalized weights.
std::vector<std::size_t> allocate_counts(std::size_t n, const std::vector<double>& weights);

nlohmann::json problem_to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);
void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems);
std::vector<Problem> read_corpus(const std::filesystem::path& path);
nlohmann::json splits_to_json(const DatasetSplits& s);
DatasetSplits splits_from_json(const nlohmann::json& j);

// Word-level vocabulary shared by problem text and expressions.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  // Specials first, then every corpus token in lexicographic order.
  static Vocabulary build(const std::vector<Problem>& problems);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

struct EncodedExample {
  std::size_t id = 0;
  std::vector<int> source;
  std::vector<int> target;  // expression tokens, without BOS/EOS
  Complexity complexity = Complexity::Simple;
};

// Throws LengthError when the source, or the target plus its BOS/EOS marker,
// exceeds max_seq_len.
EncodedExample tokenize(const Problem& problem, const Vocabulary& vocab, std::size_t max_seq_len);
std::vector<EncodedExample> tokenize_all(const std::vector<Problem>& problems, const std::vector<std::size_t>& which,
                                         const Vocabulary& vocab, std::size_t max_seq_len);
// Space-joined text; inverse of tokenize on corpus text.
std::string detokenize_text(const std::vector<int>& ids, const Vocabulary& vocab);
// Concatenated expression string; inverse of tokenize on expressions.
std::string detokenize_expression(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace headkd
