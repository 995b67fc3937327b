#include "headkd/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>

#include "headkd/error.hpp"

namespace headkd {

int precedence(Operator op) { return (op == Operator::Add || op == Operator::Sub) ? 1 : 2; }

ExpressionAst ExpressionAst::literal(Rational value) {
  ExpressionAst e;
  e.nodes_.push_back(Node{true, value, Operator::Add, -1, -1});
  e.root_ = 0;
  return e;
}

int ExpressionAst::append(const ExpressionAst& other) {
  const int offset = static_cast<int>(nodes_.size());
  for (Node n : other.nodes_) {
    if (!n.is_literal) {
      n.lhs += offset;
      n.rhs += offset;
    }
    nodes_.push_back(n);
  }
  return other.root_ + offset;
}

ExpressionAst ExpressionAst::binary(Operator op, const ExpressionAst& lhs, const ExpressionAst& rhs) {
  ExpressionAst e;
  e.nodes_.reserve(lhs.size() + rhs.size() + 1);
  const int l = e.append(lhs);
  const int r = e.append(rhs);
  e.nodes_.push_back(Node{false, Rational(), op, l, r});
  e.root_ = static_cast<int>(e.nodes_.size()) - 1;
  return e;
}

std::size_t ExpressionAst::operator_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return !n.is_literal; }));
}

namespace {

bool needs_parens(const ExpressionAst& e, int parent, int child, bool right) {
  const auto& c = e.node(child);
  if (c.is_literal) return false;
  const int pp = precedence(e.node(parent).op);
  const int cp = precedence(c.op);
  return right ? cp <= pp : cp < pp;
}

std::size_t depth_of(const ExpressionAst& e, int idx) {
  const auto& n = e.node(idx);
  if (n.is_literal) return 0;
  const std::size_t l = depth_of(e, n.lhs) + (needs_parens(e, idx, n.lhs, false) ? 1 : 0);
  const std::size_t r = depth_of(e, n.rhs) + (needs_parens(e, idx, n.rhs, true) ? 1 : 0);
  return std::max(l, r);
}

bool equal_at(const ExpressionAst& a, int ia, const ExpressionAst& b, int ib) {
  const auto& x = a.node(ia);
  const auto& y = b.node(ib);
  if (x.is_literal != y.is_literal) return false;
  if (x.is_literal) return x.value == y.value;
  return x.op == y.op && equal_at(a, x.lhs, b, y.lhs) && equal_at(a, x.rhs, b, y.rhs);
}

void emit_tokens(const ExpressionAst& e, int idx, std::vector<std::string>& out) {
  const auto& n = e.node(idx);
  if (n.is_literal) {
    out.push_back(n.value.decimal_str());
    return;
  }
  const bool pl = needs_parens(e, idx, n.lhs, false);
  const bool pr = needs_parens(e, idx, n.rhs, true);
  if (pl) out.emplace_back("(");
  emit_tokens(e, n.lhs, out);
  if (pl) out.emplace_back(")");
  out.emplace_back(1, static_cast<char>(n.op));
  if (pr) out.emplace_back("(");
  emit_tokens(e, n.rhs, out);
  if (pr) out.emplace_back(")");
}

Rational eval_at(const ExpressionAst& e, int idx) {
  const auto& n = e.node(idx);
  if (n.is_literal) return n.value;
  const Rational l = eval_at(e, n.lhs);
  const Rational r = eval_at(e, n.rhs);
  switch (n.op) {
    case Operator::Add: return l + r;
    case Operator::Sub: return l - r;
    case Operator::Mul: return l * r;
    case Operator::Div: return l / r;
  }
  return {};
}

// Splits text into expression tokens, normalizing Unicode operators.
std::vector<std::string> lex(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (std::isdigit(c)) {
      std::size_t j = i;
      while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (std::string_view("+-*/()").find(static_cast<char>(c)) != std::string_view::npos) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else if (text.substr(i, 2) == "\xC3\x97") {  // ×
      out.emplace_back("*");
      i += 2;
    } else if (text.substr(i, 2) == "\xC3\xB7") {  // ÷
      out.emplace_back("/");
      i += 2;
    } else if (text.substr(i, 3) == "\xE2\x88\x92") {  // −
      out.emplace_back("-");
      i += 3;
    } else {
      throw FormatError("unexpected character in expression '" + std::string(text) + "'");
    }
  }
  return out;
}

std::int64_t parse_digits(const std::string& digits, const std::string& tok) {
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec == std::errc::result_out_of_range) throw FormatError("number out of range '" + tok + "'");
  if (ec != std::errc{} || end != digits.data() + digits.size()) throw FormatError("malformed number '" + tok + "'");
  return v;
}

Rational parse_literal(const std::string& tok) {
  const auto dot = tok.find('.');
  if (dot == std::string::npos) return Rational(parse_digits(tok, tok));
  if (tok.find('.', dot + 1) != std::string::npos || dot == 0 || dot + 1 == tok.size()) {
    throw FormatError("malformed number '" + tok + "'");
  }
  const std::string frac = tok.substr(dot + 1);
  std::int64_t scale = 1;
  for (std::size_t k = 0; k < frac.size(); ++k) {
    if (__builtin_mul_overflow(scale, 10, &scale)) throw FormatError("number out of range '" + tok + "'");
  }
  std::int64_t whole = 0;
  if (__builtin_mul_overflow(parse_digits(tok.substr(0, dot), tok), scale, &whole) ||
      __builtin_add_overflow(whole, parse_digits(frac, tok), &whole)) {
    throw FormatError("number out of range '" + tok + "'");
  }
  return Rational(whole, scale);
}

class Parser {
 public:
  explicit Parser(const std::vector<std::string>& tokens) : toks_(tokens) {}

  ExpressionAst parse() {
    if (toks_.empty()) throw FormatError("empty expression");
    auto e = additive();
    if (pos_ != toks_.size()) throw FormatError("trailing token '" + toks_[pos_] + "' in expression");
    return e;
  }

 private:
  const std::string* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }

  ExpressionAst additive() {
    auto lhs = multiplicative();
    while (const auto* t = peek()) {
      if (*t != "+" && *t != "-") break;
      ++pos_;
      const Operator op = *t == "+" ? Operator::Add : Operator::Sub;
      lhs = ExpressionAst::binary(op, lhs, multiplicative());
    }
    return lhs;
  }

  ExpressionAst multiplicative() {
    auto lhs = primary();
    while (const auto* t = peek()) {
      if (*t != "*" && *t != "/") break;
      ++pos_;
      const Operator op = *t == "*" ? Operator::Mul : Operator::Div;
      lhs = ExpressionAst::binary(op, lhs, primary());
    }
    return lhs;
  }

  ExpressionAst primary() {
    const auto* t = peek();
    if (!t) throw FormatError("expression ends unexpectedly");
    if (*t == "(") {
      ++pos_;
      auto inner = additive();
      const auto* close = peek();
      if (!close || *close != ")") throw FormatError("missing ')' in expression");
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>((*t)[0]))) {
      ++pos_;
      return ExpressionAst::literal(parse_literal(*t));
    }
    throw FormatError("unexpected token '" + *t + "' in expression");
  }

  const std::vector<std::string>& toks_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t ExpressionAst::nesting_depth() const { return depth_of(*this, root_); }

bool operator==(const ExpressionAst& a, const ExpressionAst& b) {
  if (a.root_ < 0 || b.root_ < 0) return a.root_ == b.root_;
  return equal_at(a, a.root_, b, b.root_);
}

std::vector<std::string> render_tokens(const ExpressionAst& expr) {
  std::vector<std::string> out;
  emit_tokens(expr, expr.root(), out);
  return out;
}

std::string render(const ExpressionAst& expr) {
  std::string s;
  for (const auto& t : render_tokens(expr)) s += t;
  return s;
}

ExpressionAst parse_expression(std::string_view text) { return parse_expression_tokens(lex(text)); }

ExpressionAst parse_expression_tokens(const std::vector<std::string>& tokens) { return Parser(tokens).parse(); }

Rational evaluate_expression(const ExpressionAst& expr) { return eval_at(expr, expr.root()); }

Complexity classify_complexity(const ExpressionAst& expr) {
  const std::size_t ops = expr.operator_count();
  if (ops == 0) throw ClassificationError("expression without operators is not a word problem");
  const std::size_t depth = expr.nesting_depth();
  if (ops >= 5 || depth >= 2) return Complexity::Complex;
  if (ops <= 2 && depth == 0) return Complexity::Simple;
  return Complexity::Medium;
}

std::string_view complexity_name(Complexity level) {
  switch (level) {
    case Complexity::Simple: return "Simple";
    case Complexity::Medium: return "Medium";
    case Complexity::Complex: return "Complex";
  }
  return "?";
}

Complexity parse_complexity(std::string_view name) {
  if (name == "Simple") return Complexity::Simple;
  if (name == "Medium") return Complexity::Medium;
  if (name == "Complex") return Complexity::Complex;
  throw FormatError("unknown complexity level '" + std::string(name) + "'");
}

}  // namespace headkd
