#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "headkd/rational.hpp"

namespace headkd {

enum class Operator : char { Add = '+', Sub = '-', Mul = '*', Div = '/' };

int precedence(Operator op);

// Binary expression tree over {+, -, *, /} with exact literals. Nodes live in
// an arena; structural equality ignores arena layout.
class ExpressionAst {
 public:
  struct Node {
    bool is_literal = true;
    Rational value;
    Operator op = Operator::Add;
    int lhs = -1;
    int rhs = -1;
  };

  static ExpressionAst literal(Rational value);
  static ExpressionAst binary(Operator op, const ExpressionAst& lhs, const ExpressionAst& rhs);

  int root() const { return root_; }
  const Node& node(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return nodes_.size(); }

  std::size_t operator_count() const;
  // Deepest parenthesis nesting in the canonical rendering, i.e. grouping
  // that differs from plain precedence plus left-to-right association.
  std::size_t nesting_depth() const;

  friend bool operator==(const ExpressionAst& a, const ExpressionAst& b);

 private:
  int append(const ExpressionAst& other);
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Canonical form: ASCII operators, no spaces, only the parentheses needed
// under precedence and left association. parse(render(e)) == e.
std::string render(const ExpressionAst& expr);
std::vector<std::string> render_tokens(const ExpressionAst& expr);

// Accepts ASCII operators and the Unicode forms × ÷ −. Throws FormatError.
ExpressionAst parse_expression(std::string_view text);
ExpressionAst parse_expression_tokens(const std::vector<std::string>& tokens);

// Exact evaluation; throws EvaluationError on division by zero.
Rational evaluate_expression(const ExpressionAst& expr);

enum class Complexity { Simple = 0, Medium = 1, Complex = 2 };
inline constexpr int kComplexityLevels = 3;

// Complex: >= 5 operators or nesting >= 2 (checked first).
// Simple: 1-2 operators, no nesting. Medium: everything else.
// Throws ClassificationError for a bare literal.
Complexity classify_complexity(const ExpressionAst& expr);

std::string_view complexity_name(Complexity level);
Complexity parse_complexity(std::string_view name);

}  // namespace headkd
