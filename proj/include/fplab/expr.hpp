#pragma once

// Scalar expressions in the spatial variables x1..xn (n <= 2) with exact
// value, gradient and Hessian evaluation by forward-mode jets.
//
// Grammar (standard precedence, '^' binds tightest and is right-associative):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'
//   func    := exp | ln | sin | cos | sqrt | abs | tanh
//
// so that -x1^2 == -(x1^2) and 2^-1 == 0.5.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace fplab::expr {

inline constexpr int kMaxDim = 2;

/// Value, gradient and Hessian of a scalar expression at one point. Entries
/// beyond `dim` are zero. The Hessian is filled from its upper triangle, so it
/// is symmetric to exact equality.
struct Jet2 {
  int dim = 1;
  double value = 0.0;
  std::array<double, kMaxDim> gradient{};
  std::array<std::array<double, kMaxDim>, kMaxDim> hessian{};
};

struct Node;

/// Immutable parsed expression. Cheap to copy; copies share the tree.
class Expression {
 public:
  /// Throws ParseError on syntax errors, unknown identifiers and variable
  /// indices above `dim`.
  static Expression parse(std::string_view text, int dim);

  /// Literal constant expression.
  static Expression constant(double value, int dim);

  int dim() const { return dim_; }

  /// True when no variable occurs in the tree.
  bool is_constant() const;

  /// Throws EvalFault (carrying `point`) on a domain error or a non-finite
  /// result.
  double eval(std::span<const double> point) const;

  Jet2 eval_jet(std::span<const double> point) const;

  /// Fully parenthesized text that parses back to an identical tree.
  std::string to_string() const;

  /// Structural equality of the trees (literals compared bitwise).
  friend bool operator==(const Expression& a, const Expression& b);

 private:
  Expression(std::shared_ptr<const Node> root, int dim)
      : root_(std::move(root)), dim_(dim) {}

  std::shared_ptr<const Node> root_;
  int dim_ = 1;
};

}  // namespace fplab::expr
