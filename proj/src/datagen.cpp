#include "headkd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "headkd/error.hpp"
#include "headkd/random.hpp"

namespace headkd {

namespace {

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& options) {
  return options[uniform_index(rng, N)];
}

void append_words(std::vector<std::string>& out, std::string_view phrase) {
  std::istringstream is{std::string(phrase)};
  std::string w;
  while (is >> w) out.push_back(w);
}

// Monotone verbalization: every operator, literal and parenthesis of the
// canonical rendering maps to one phrase, in rendering order.
void verbalize_node(const ExpressionAst& e, int idx, Rng& rng, std::vector<std::string>& out);

void verbalize_operand(const ExpressionAst& e, int parent, int child, bool right, Rng& rng,
                       std::vector<std::string>& out) {
  const auto& c = e.node(child);
  const bool parens = !c.is_literal && (right ? precedence(c.op) <= precedence(e.node(parent).op)
                                              : precedence(c.op) < precedence(e.node(parent).op));
  if (parens) append_words(out, pick(rng, std::array{"the result of", "the value of"}));
  verbalize_node(e, child, rng, out);
  if (parens) append_words(out, pick(rng, std::array{"in all", "overall"}));
}

void verbalize_node(const ExpressionAst& e, int idx, Rng& rng, std::vector<std::string>& out) {
  const auto& n = e.node(idx);
  if (n.is_literal) {
    out.push_back(n.value.decimal_str());
    return;
  }
  verbalize_operand(e, idx, n.lhs, false, rng, out);
  switch (n.op) {
    case Operator::Add: append_words(out, pick(rng, std::array{"plus", "added to"})); break;
    case Operator::Sub: append_words(out, pick(rng, std::array{"minus", "less"})); break;
    case Operator::Mul: append_words(out, pick(rng, std::array{"times", "multiplied by"})); break;
    case Operator::Div: append_words(out, pick(rng, std::array{"divided by", "split into"})); break;
  }
  verbalize_operand(e, idx, n.rhs, true, rng, out);
}

constexpr std::array kNames{"tom", "lily", "ana", "omar", "mei", "ravi", "sara", "ben"};
constexpr std::array kItems{"apples", "pencils", "books", "stickers", "marbles", "cards"};
constexpr std::array kVehicles{"car", "bus", "train", "bike"};
constexpr std::array kFoods{"cookies", "muffins", "pies", "rolls"};

ExpressionAst random_tree(std::size_t ops, const GeneratorOptions& o, Rng& rng) {
  if (ops == 0) {
    const auto span = static_cast<std::uint64_t>(o.max_literal - o.min_literal + 1);
    const std::int64_t v = o.min_literal + static_cast<std::int64_t>(uniform_index(rng, span));
    if (o.decimal_probability > 0.0 && uniform01(rng) < o.decimal_probability) {
      return ExpressionAst::literal(Rational(2 * v + 1, 2));
    }
    return ExpressionAst::literal(Rational(v));
  }
  const std::size_t left = uniform_index(rng, ops);
  constexpr std::array ops_table{Operator::Add, Operator::Sub, Operator::Mul, Operator::Div};
  const Operator op = ops_table[uniform_index(rng, ops_table.size())];
  auto lhs = random_tree(left, o, rng);
  auto rhs = random_tree(ops - 1 - left, o, rng);
  return ExpressionAst::binary(op, lhs, rhs);
}

// Inclusive operator-count range the sampler draws from for a level.
std::pair<std::size_t, std::size_t> op_range(Complexity level, std::size_t max_ops) {
  switch (level) {
    case Complexity::Simple: return {1, std::min<std::size_t>(2, max_ops)};
    case Complexity::Medium: return {2, std::min<std::size_t>(4, max_ops)};
    case Complexity::Complex: return {3, max_ops};
  }
  return {1, 1};
}

ExpressionAst sample_expression(Complexity level, const GeneratorOptions& o, Rng& rng) {
  const auto [lo, hi] = op_range(level, o.max_operators);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const std::size_t ops = lo + uniform_index(rng, hi - lo + 1);
    auto e = random_tree(ops, o, rng);
    if (classify_complexity(e) != level) continue;
    try {
      (void)evaluate_expression(e);
    } catch (const EvaluationError&) {
      continue;
    } catch (const NumericError&) {
      continue;
    }
    return e;
  }
  throw ConfigError("could not sample a " + std::string(complexity_name(level)) + " expression");
}

}  // namespace

std::vector<std::string> verbalize_problem(const ExpressionAst& expr, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> body;
  verbalize_node(expr, expr.root(), rng, body);
  std::vector<std::string> out;
  auto body_in = [&] { out.insert(out.end(), body.begin(), body.end()); };
  switch (uniform_index(rng, 4)) {
    case 0: {  // purchase
      const std::string name = pick(rng, kNames);
      append_words(out, name + " buys " + pick(rng, kItems) + " at the market . the bill comes to");
      body_in();
      append_words(out, "dollars . how much does " + name + " spend ?");
      break;
    }
    case 1: {  // distance
      const std::string v = pick(rng, kVehicles);
      append_words(out, "a " + v + " covers");
      body_in();
      append_words(out, "kilometers . how far does the " + v + " go ?");
      break;
    }
    case 2: {  // sharing
      const std::string item = pick(rng, kItems);
      append_words(out, std::string(pick(rng, kNames)) + " shares");
      body_in();
      append_words(out, item + " with friends . how many " + item + " does each friend get ?");
      break;
    }
    default: {  // baking
      const std::string food = pick(rng, kFoods);
      append_words(out, std::string(pick(rng, kNames)) + " bakes");
      body_in();
      append_words(out, food + " for the fair . how many " + food + " are there ?");
      break;
    }
  }
  return out;
}

std::vector<std::size_t> allocate_counts(std::size_t n, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(n) * weights[i] / total;
    // Tolerance absorbs representation error such as 100 * 0.7.
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
    assigned += counts[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

std::array<std::size_t, kComplexityLevels> level_counts(std::size_t size, const LevelMix& mix) {
  const auto c = allocate_counts(size, {mix.simple, mix.medium, mix.complex});
  return {c[0], c[1], c[2]};
}

std::vector<Problem> generate_dataset(const GeneratorOptions& o) {
  if (o.size < 10) throw ConfigError("dataset size must be at least 10");
  if (o.mix.simple < 0 || o.mix.medium < 0 || o.mix.complex < 0 || o.mix.simple + o.mix.medium + o.mix.complex <= 0) {
    throw ConfigError("level mix must be non-negative with a positive sum");
  }
  if (o.min_literal < 1 || o.max_literal < o.min_literal) throw ConfigError("literal range must satisfy 1 <= min <= max");
  if (o.max_operators > 12) throw ConfigError("max_operators above 12 is not supported");
  const auto counts = level_counts(o.size, o.mix);
  constexpr std::array<std::size_t, 3> min_ops{1, 2, 3};
  for (int level = 0; level < kComplexityLevels; ++level) {
    if (counts[level] > 0 && o.max_operators < min_ops[level]) {
      throw ConfigError(std::string(complexity_name(static_cast<Complexity>(level))) + " problems need at least " +
                        std::to_string(min_ops[level]) + " operators, max_operators is " +
                        std::to_string(o.max_operators));
    }
  }

  std::vector<Complexity> levels;
  for (int level = 0; level < kComplexityLevels; ++level) levels.insert(levels.end(), counts[level], static_cast<Complexity>(level));
  Rng master(o.seed);
  shuffle(levels, master);

  std::vector<Problem> problems(o.size);
  for (std::size_t i = 0; i < o.size; ++i) {
    Rng rng(mix_seed(o.seed, i));
    Problem& p = problems[i];
    p.id = i;
    p.expression = sample_expression(levels[i], o, rng);
    p.answer = evaluate_expression(p.expression);
    p.complexity = classify_complexity(p.expression);
    p.tokens = verbalize_problem(p.expression, rng());
    for (std::size_t k = 0; k < p.tokens.size(); ++k) p.text += (k ? " " : "") + p.tokens[k];
  }
  return problems;
}

DatasetSplits split(const std::vector<Problem>& problems, const SplitSpec& spec) {
  for (double r : spec.ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  }
  std::vector<std::vector<std::size_t>> strata(spec.stratify ? kComplexityLevels : 1);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    strata[spec.stratify ? static_cast<std::size_t>(problems[i].complexity) : 0].push_back(i);
  }
  const std::vector<double> weights(spec.ratios.begin(), spec.ratios.end());
  DatasetSplits out;
  std::array<std::vector<std::size_t>*, 3> parts{&out.train, &out.val, &out.test};
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& members = strata[s];
    if (members.empty() && spec.stratify) continue;
    const std::string name = spec.stratify ? std::string(complexity_name(static_cast<Complexity>(s))) : "all";
    const auto counts = allocate_counts(members.size(), weights);
    for (std::size_t k = 0; k < 3; ++k) {
      if (counts[k] == 0) {
        throw SplitError("stratum '" + name + "' with " + std::to_string(members.size()) +
                         " problems is too small to populate every split");
      }
    }
    Rng rng(mix_seed(spec.seed, s));
    shuffle(members, rng);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      parts[k]->insert(parts[k]->end(), members.begin() + pos, members.begin() + pos + counts[k]);
      pos += counts[k];
    }
  }
  for (auto* part : parts) std::sort(part->begin(), part->end());
  return out;
}

nlohmann::json problem_to_json(const Problem& p) {
  return {{"id", p.id},
          {"text", p.text},
          {"tokens", p.tokens},
          {"expression", render(p.expression)},
          {"answer", {{"numerator", p.answer.num()}, {"denominator", p.answer.den()}}},
          {"complexity", std::string(complexity_name(p.complexity))}};
}

Problem problem_from_json(const nlohmann::json& j) {
  try {
    Problem p;
    p.id = j.at("id").get<std::size_t>();
    p.text = j.at("text").get<std::string>();
    p.tokens = j.at("tokens").get<std::vector<std::string>>();
    p.expression = parse_expression(j.at("expression").get<std::string>());
    p.answer = Rational(j.at("answer").at("numerator").get<std::int64_t>(),
                        j.at("answer").at("denominator").get<std::int64_t>());
    p.complexity = parse_complexity(j.at("complexity").get<std::string>());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed problem record: ") + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  for (const auto& p : problems) out << problem_to_json(p).dump() << '\n';
  if (!out) throw IoError("failed writing corpus file " + path.string());
}

std::vector<Problem> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file " + path.string());
  std::vector<Problem> problems;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      problems.push_back(problem_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return problems;
}

nlohmann::json splits_to_json(const DatasetSplits& s) {
  return {{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

DatasetSplits splits_from_json(const nlohmann::json& j) {
  try {
    return {j.at("train").get<std::vector<std::size_t>>(), j.at("val").get<std::vector<std::size_t>>(),
            j.at("test").get<std::vector<std::size_t>>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split manifest: ") + e.what());
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw FormatError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  if (v.tokens_.size() < 4 || v.tokens_[kPad] != "<pad>" || v.tokens_[kBos] != "<bos>" || v.tokens_[kEos] != "<eos>" ||
      v.tokens_[kUnk] != "<unk>") {
    throw FormatError("vocabulary must start with <pad> <bos> <eos> <unk>");
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<Problem>& problems) {
  std::set<std::string> words;
  for (const auto& p : problems) {
    words.insert(p.tokens.begin(), p.tokens.end());
    for (auto& t : render_tokens(p.expression)) words.insert(std::move(t));
  }
  std::vector<std::string> tokens{"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& w : words) {
    if (w != "<pad>" && w != "<bos>" && w != "<eos>" && w != "<unk>") tokens.push_back(w);
  }
  return from_tokens(std::move(tokens));
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

nlohmann::json Vocabulary::to_json() const { return {{"tokens", tokens_}}; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    return from_tokens(j.at("tokens").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed vocabulary: ") + e.what());
  }
}

EncodedExample tokenize(const Problem& problem, const Vocabulary& vocab, std::size_t max_seq_len) {
  EncodedExample ex;
  ex.id = problem.id;
  ex.complexity = problem.complexity;
  ex.source = vocab.encode(problem.tokens);
  ex.target = vocab.encode(render_tokens(problem.expression));
  if (ex.source.size() > max_seq_len) {
    throw LengthError("problem " + std::to_string(problem.id) + " text has " + std::to_string(ex.source.size()) +
                      " tokens, limit is " + std::to_string(max_seq_len));
  }
  if (ex.target.size() + 1 > max_seq_len) {
    throw LengthError("problem " + std::to_string(problem.id) + " expression has " +
                      std::to_string(ex.target.size()) + " tokens, limit is " + std::to_string(max_seq_len - 1));
  }
  return ex;
}

std::vector<EncodedExample> tokenize_all(const std::vector<Problem>& problems, const std::vector<std::size_t>& which,
                                         const Vocabulary& vocab, std::size_t max_seq_len) {
  std::vector<EncodedExample> out;
  out.reserve(which.size());
  for (auto i : which) out.push_back(tokenize(problems.at(i), vocab, max_seq_len));
  return out;
}

std::string detokenize_text(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + vocab.token(ids[i]);
  return s;
}

std::string detokenize_expression(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string s;
  for (int id : ids) s += vocab.token(id);
  return s;
}

}  // namespace headkd
