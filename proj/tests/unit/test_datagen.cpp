#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>

#include "headkd/datagen.hpp"
#include "headkd/error.hpp"

using namespace headkd;

namespace {

// Independent oracle: operator count and deepest parenthesis nesting read
// straight off the canonical string.
struct Counted {
  std::size_t ops = 0;
  std::size_t depth = 0;
};

Counted count_string(const std::string& s) {
  Counted c;
  std::size_t d = 0;
  for (char ch : s) {
    if (ch == '(') c.depth = std::max(c.depth, ++d);
    if (ch == ')') --d;
    if (ch == '+' || ch == '-' || ch == '*' || ch == '/') ++c.ops;
  }
  return c;
}

Complexity rule_table(const Counted& c) {
  if (c.ops >= 5 || c.depth >= 2) return Complexity::Complex;
  if (c.ops <= 2 && c.depth == 0) return Complexity::Simple;
  return Complexity::Medium;
}

// Every binary tree with exactly n operators over the literal 2.
void enumerate(std::size_t n, const std::function<void(const ExpressionAst&)>& visit) {
  if (n == 0) {
    visit(ExpressionAst::literal(2));
    return;
  }
  for (std::size_t left = 0; left < n; ++left) {
    enumerate(left, [&](const ExpressionAst& l) {
      enumerate(n - 1 - left, [&](const ExpressionAst& r) {
        for (auto op : {Operator::Add, Operator::Sub, Operator::Mul, Operator::Div}) {
          visit(ExpressionAst::binary(op, l, r));
        }
      });
    });
  }
}

}  // namespace

TEST_CASE("classify_complexity examples") {
  CHECK(classify_complexity(parse_expression("3+4")) == Complexity::Simple);
  CHECK(classify_complexity(parse_expression("(2+3)×(4−1)")) == Complexity::Medium);
  CHECK(classify_complexity(parse_expression("1+2+3+4+5+6")) == Complexity::Complex);
  CHECK_THROWS_AS(classify_complexity(parse_expression("7")), ClassificationError);
}

TEST_CASE("classify_complexity matches the rule table on every AST up to 6 operators and depth 3") {
  std::size_t checked = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    enumerate(n, [&](const ExpressionAst& e) {
      const auto text = render(e);
      const auto c = count_string(text);
      if (c.depth > 3) return;
      REQUIRE(c.ops == e.operator_count());
      REQUIRE(c.depth == e.nesting_depth());
      REQUIRE(classify_complexity(e) == rule_table(c));
      REQUIRE(parse_expression(text) == e);
      ++checked;
    });
  }
  CHECK(checked > 500000);
}

TEST_CASE("left association needs no parentheses") {
  CHECK(render(parse_expression("(1-2)-3")) == "1-2-3");
  CHECK(render(parse_expression("1-(2-3)")) == "1-(2-3)");
  CHECK(render(parse_expression("(8/4)/2")) == "8/4/2");
  CHECK(render(parse_expression("2*(3*4)")) == "2*(3*4)");
  CHECK(parse_expression("1-2-3").nesting_depth() == 0);
  CHECK(parse_expression("1-(2-(3-4))").nesting_depth() == 2);
}

TEST_CASE("evaluate_expression is exact") {
  CHECK(evaluate_expression(parse_expression("2+3")) == Rational(5));
  CHECK(evaluate_expression(parse_expression("1÷3")) == Rational(1, 3));
  CHECK(evaluate_expression(parse_expression("(2+3)×(4−1)")) == Rational(15));
  CHECK(evaluate_expression(parse_expression("1/3+1/6")) == Rational(1, 2));
  CHECK_THROWS_AS(evaluate_expression(parse_expression("4/(2-2)")), EvaluationError);
  CHECK_THROWS_AS(parse_expression("3+"), FormatError);
  CHECK_THROWS_AS(parse_expression("(3+4"), FormatError);
}

TEST_CASE("generate_dataset invariants") {
  GeneratorOptions opts;
  opts.size = 1000;
  const auto a = generate_dataset(opts);
  const auto b = generate_dataset(opts);
  REQUIRE(a.size() == 1000);
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].expression == b[i].expression);
    CHECK(a[i].answer == evaluate_expression(a[i].expression));
    CHECK(a[i].complexity == classify_complexity(a[i].expression));
    ++counts[static_cast<std::size_t>(a[i].complexity)];
  }
  const std::array<double, 3> targets{500, 300, 200};
  for (std::size_t l = 0; l < 3; ++l) CHECK(std::abs(static_cast<double>(counts[l]) - targets[l]) <= 0.02 * 1000);

  opts.seed = 8;
  const auto c = generate_dataset(opts);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].text != c[i].text;
  CHECK(differs);
}

TEST_CASE("problem text mentions every literal of its expression") {
  GeneratorOptions opts;
  opts.size = 200;
  for (const auto& p : generate_dataset(opts)) {
    std::vector<std::string> literals;
    for (const auto& tok : render_tokens(p.expression)) {
      if (std::isdigit(static_cast<unsigned char>(tok[0]))) literals.push_back(tok);
    }
    for (const auto& lit : literals) CHECK(std::find(p.tokens.begin(), p.tokens.end(), lit) != p.tokens.end());
  }
}

TEST_CASE("generate_dataset rejects infeasible requests") {
  GeneratorOptions opts;
  opts.size = 9;
  CHECK_THROWS_AS(generate_dataset(opts), ConfigError);
  opts.size = 100;
  opts.mix = {0.0, 0.0, 1.0};
  opts.max_operators = 1;
  CHECK_THROWS_AS(generate_dataset(opts), ConfigError);
  opts.mix = {0.5, -0.1, 0.6};
  opts.max_operators = 6;
  CHECK_THROWS_AS(generate_dataset(opts), ConfigError);
}

TEST_CASE("split examples") {
  GeneratorOptions opts;
  opts.size = 100;
  const auto problems = generate_dataset(opts);
  SplitSpec spec;
  spec.stratify = false;
  auto s = split(problems, spec);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 20);
  spec.ratios = {8, 1, 1};
  s = split(problems, spec);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
}

TEST_CASE("stratified split is disjoint, exhaustive and proportional") {
  GeneratorOptions opts;
  opts.size = 1000;
  const auto problems = generate_dataset(opts);
  const SplitSpec spec;
  const auto s = split(problems, spec);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == problems.size());
  CHECK(s.train.size() + s.val.size() + s.test.size() == problems.size());

  std::array<std::size_t, 3> level_total{};
  for (const auto& p : problems) ++level_total[static_cast<std::size_t>(p.complexity)];
  const std::array<double, 3> share{0.7, 0.1, 0.2};
  const std::array<const std::vector<std::size_t>*, 3> parts{&s.train, &s.val, &s.test};
  for (std::size_t k = 0; k < 3; ++k) {
    std::array<std::size_t, 3> in_part{};
    for (auto i : *parts[k]) ++in_part[static_cast<std::size_t>(problems[i].complexity)];
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(std::abs(static_cast<double>(in_part[l]) - share[k] * static_cast<double>(level_total[l])) <= 1.0);
    }
  }
  CHECK(split(problems, spec).train == s.train);
}

TEST_CASE("split reports the stratum that is too small") {
  GeneratorOptions opts;
  opts.size = 20;
  opts.mix = {0.9, 0.05, 0.05};
  const auto problems = generate_dataset(opts);
  try {
    split(problems, SplitSpec{});
    FAIL("expected SplitError");
  } catch (const SplitError& e) {
    const std::string msg = e.what();
    CHECK((msg.find("Medium") != std::string::npos || msg.find("Complex") != std::string::npos));
  }
}

TEST_CASE("tokenize round trip") {
  GeneratorOptions opts;
  opts.size = 300;
  const auto problems = generate_dataset(opts);
  const auto vocab = Vocabulary::build(problems);
  CHECK(Vocabulary::build(problems).tokens() == vocab.tokens());
  for (const auto& p : problems) {
    const auto e = tokenize(p, vocab, 64);
    CHECK(detokenize_text(e.source, vocab) == p.text);
    CHECK(detokenize_expression(e.target, vocab) == render(p.expression));
    CHECK(std::find(e.source.begin(), e.source.end(), Vocabulary::kPad) == e.source.end());
    CHECK(std::find(e.target.begin(), e.target.end(), Vocabulary::kPad) == e.target.end());
  }
  CHECK(vocab.id("zebra-that-never-appears") == Vocabulary::kUnk);
  CHECK_THROWS_AS(tokenize(problems[0], vocab, 5), LengthError);
  CHECK(Vocabulary::from_json(vocab.to_json()).tokens() == vocab.tokens());
}

TEST_CASE("corpus files round trip") {
  GeneratorOptions opts;
  opts.size = 50;
  opts.decimal_probability = 0.3;
  const auto problems = generate_dataset(opts);
  const auto path = std::filesystem::temp_directory_path() / "headkd_corpus_test.jsonl";
  write_corpus(path, problems);
  const auto back = read_corpus(path);
  REQUIRE(back.size() == problems.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].text == problems[i].text);
    CHECK(back[i].expression == problems[i].expression);
    CHECK(back[i].answer == problems[i].answer);
    CHECK(back[i].complexity == problems[i].complexity);
  }
  std::filesystem::remove(path);
  const auto s = split(generate_dataset(GeneratorOptions{}), SplitSpec{});
  CHECK(splits_from_json(splits_to_json(s)).test == s.test);
}

TEST_CASE("malformed and oversized numbers are format errors") {
  CHECK_THROWS_AS(parse_expression("99999999999999999999+1"), FormatError);
  CHECK_THROWS_AS(parse_expression("1.00000000000000000001+1"), FormatError);
  CHECK_THROWS_AS(parse_expression("1..5+1"), FormatError);
  CHECK(evaluate_expression(parse_expression("2.5×2")) == Rational(5));
}
