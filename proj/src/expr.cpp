#include "fplab/expr.hpp"

#include <fmt/format.h>

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <vector>

#include "fplab/errors.hpp"

namespace fplab {

ParseError::ParseError(const std::string& message, std::size_t position)
    : Error(fmt::format("{} (at position {})", message, position)),
      position_(position) {}

namespace {

std::string format_point(const std::vector<double>& point) {
  std::string out = "(";
  for (std::size_t i = 0; i < point.size(); ++i) {
    out += fmt::format("{}{:.17g}", i ? ", " : "", point[i]);
  }
  return out + ")";
}

}  // namespace

EvalFault::EvalFault(const std::string& message, std::vector<double> point)
    : Error(message + " at x = " + format_point(point)),
      point_(std::move(point)) {}

}  // namespace fplab

namespace fplab::expr {

enum class Kind : unsigned char { number, variable, negate, binary, function };

enum class Func : unsigned char { exp, ln, sin, cos, sqrt, abs, tanh };

struct Node {
  Kind kind = Kind::number;
  double number = 0.0;
  int variable = 0;  // 0-based
  char op = 0;       // one of + - * / ^
  Func func = Func::exp;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Node>;

struct FuncName {
  std::string_view name;
  Func func;
};

constexpr std::array<FuncName, 7> kFunctions{{{"exp", Func::exp},
                                               {"ln", Func::ln},
                                               {"sin", Func::sin},
                                               {"cos", Func::cos},
                                               {"sqrt", Func::sqrt},
                                               {"abs", Func::abs},
                                               {"tanh", Func::tanh}}};

std::string_view func_name(Func f) {
  for (const auto& entry : kFunctions) {
    if (entry.func == f) return entry.name;
  }
  return "?";
}

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::number;
  n->number = v;
  return n;
}

class Parser {
 public:
  Parser(std::string_view text, int dim) : text_(text), dim_(dim) {}

  NodePtr parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    NodePtr root = parse_expr();
    skip_ws();
    if (pos_ < text_.size()) {
      throw ParseError(fmt::format("unexpected '{}'", text_[pos_]), pos_);
    }
    return root;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr binary(char op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::binary;
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
  }

  NodePtr parse_expr() {
    NodePtr node = parse_term();
    for (;;) {
      if (accept('+')) {
        node = binary('+', node, parse_term());
      } else if (accept('-')) {
        node = binary('-', node, parse_term());
      } else {
        return node;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr node = parse_unary();
    for (;;) {
      if (accept('*')) {
        node = binary('*', node, parse_unary());
      } else if (accept('/')) {
        node = binary('/', node, parse_unary());
      } else {
        return node;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->kind = Kind::negate;
      n->lhs = parse_unary();
      return n;
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept('^')) return binary('^', base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return parse_number();
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
    throw ParseError(fmt::format("unexpected '{}'", c), pos_);
  }

  NodePtr parse_number() {
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr == first) {
      throw ParseError("malformed number", pos_);
    }
    pos_ += static_cast<std::size_t>(ptr - first);
    return make_number(value);
  }

  NodePtr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view id = text_.substr(start, pos_ - start);

    if (id.size() >= 2 && id[0] == 'x' &&
        id.find_first_not_of("0123456789", 1) == std::string_view::npos) {
      int index = 0;
      std::from_chars(id.data() + 1, id.data() + id.size(), index);
      if (index < 1) throw ParseError("unknown identifier 'x0'", start);
      if (index > dim_) {
        throw ParseError(
            fmt::format("variable index exceeds dimension: '{}' with dim={}",
                        id, dim_),
            start);
      }
      auto n = std::make_shared<Node>();
      n->kind = Kind::variable;
      n->variable = index - 1;
      return n;
    }
    if (id == "pi") return make_number(std::numbers::pi);

    for (const auto& entry : kFunctions) {
      if (entry.name == id) {
        if (!accept('(')) {
          throw ParseError(fmt::format("expected '(' after '{}'", id), pos_);
        }
        auto n = std::make_shared<Node>();
        n->kind = Kind::function;
        n->func = entry.func;
        n->lhs = parse_expr();
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        return n;
      }
    }
    throw ParseError(fmt::format("unknown identifier '{}'", id), start);
  }

  std::string_view text_;
  int dim_;
  std::size_t pos_ = 0;
};

bool has_variable(const Node& n) {
  switch (n.kind) {
    case Kind::number:
      return false;
    case Kind::variable:
      return true;
    case Kind::negate:
    case Kind::function:
      return has_variable(*n.lhs);
    case Kind::binary:
      return has_variable(*n.lhs) || has_variable(*n.rhs);
  }
  return false;
}

bool same_tree(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Kind::number:
      return std::bit_cast<std::uint64_t>(a.number) ==
             std::bit_cast<std::uint64_t>(b.number);
    case Kind::variable:
      return a.variable == b.variable;
    case Kind::negate:
      return same_tree(*a.lhs, *b.lhs);
    case Kind::function:
      return a.func == b.func && same_tree(*a.lhs, *b.lhs);
    case Kind::binary:
      return a.op == b.op && same_tree(*a.lhs, *b.lhs) &&
             same_tree(*a.rhs, *b.rhs);
  }
  return false;
}

void print(const Node& n, std::string& out) {
  switch (n.kind) {
    case Kind::number:
      // Negative literals only arise from Expression::constant.
      if (n.number < 0) {
        out += fmt::format("(-{:.17g})", -n.number);
      } else {
        out += fmt::format("{:.17g}", n.number);
      }
      return;
    case Kind::variable:
      out += fmt::format("x{}", n.variable + 1);
      return;
    case Kind::negate:
      out += "(-";
      print(*n.lhs, out);
      out += ")";
      return;
    case Kind::function:
      out += func_name(n.func);
      out += "(";
      print(*n.lhs, out);
      out += ")";
      return;
    case Kind::binary:
      out += "(";
      print(*n.lhs, out);
      out += n.op;
      print(*n.rhs, out);
      out += ")";
      return;
  }
}

// ---------------------------------------------------------------------------
// Evaluation

class Evaluator {
 public:
  explicit Evaluator(std::span<const double> point) : point_(point) {}

  [[noreturn]] void fault(const std::string& what) const {
    throw EvalFault(what, std::vector<double>(point_.begin(), point_.end()));
  }

  double value(const Node& n) const {
    switch (n.kind) {
      case Kind::number:
        return n.number;
      case Kind::variable:
        return point_[static_cast<std::size_t>(n.variable)];
      case Kind::negate:
        return -value(*n.lhs);
      case Kind::function:
        return apply(n.func, value(*n.lhs));
      case Kind::binary:
        return binary(n.op, value(*n.lhs), value(*n.rhs));
    }
    return 0.0;
  }

  double apply(Func f, double u) const {
    switch (f) {
      case Func::exp:
        return std::exp(u);
      case Func::ln:
        if (!(u > 0.0)) fault("ln of non-positive argument");
        return std::log(u);
      case Func::sin:
        return std::sin(u);
      case Func::cos:
        return std::cos(u);
      case Func::sqrt:
        if (u < 0.0) fault("sqrt of negative argument");
        return std::sqrt(u);
      case Func::abs:
        return std::abs(u);
      case Func::tanh:
        return std::tanh(u);
    }
    return 0.0;
  }

  double binary(char op, double a, double b) const {
    switch (op) {
      case '+':
        return a + b;
      case '-':
        return a - b;
      case '*':
        return a * b;
      case '/':
        if (b == 0.0) fault("division by zero");
        return a / b;
      case '^': {
        if (a < 0.0 && std::trunc(b) != b) {
          fault("non-integer power of negative base");
        }
        if (a == 0.0 && b < 0.0) fault("negative power of zero");
        return std::pow(a, b);
      }
    }
    return 0.0;
  }

 protected:
  std::span<const double> point_;
};

class JetEvaluator : public Evaluator {
 public:
  JetEvaluator(std::span<const double> point, int dim)
      : Evaluator(point), dim_(dim) {}

  Jet2 jet(const Node& n) const {
    switch (n.kind) {
      case Kind::number:
        return constant(n.number);
      case Kind::variable: {
        Jet2 j = constant(point_[static_cast<std::size_t>(n.variable)]);
        j.gradient[static_cast<std::size_t>(n.variable)] = 1.0;
        return j;
      }
      case Kind::negate:
        return chain(jet(*n.lhs), [](double u) {
          return std::array<double, 3>{-u, -1.0, 0.0};
        });
      case Kind::function:
        return function(n.func, jet(*n.lhs));
      case Kind::binary:
        return binary_jet(n, jet(*n.lhs));
    }
    return constant(0.0);
  }

 private:
  Jet2 constant(double v) const {
    Jet2 j;
    j.dim = dim_;
    j.value = v;
    return j;
  }

  // g(u) with derivatives {g, g', g''} supplied by `rule`.
  template <typename Rule>
  Jet2 chain(const Jet2& u, Rule rule) const {
    const auto [g0, g1, g2] = rule(u.value);
    Jet2 out = constant(g0);
    for (int i = 0; i < dim_; ++i) {
      out.gradient[i] = g1 * u.gradient[i];
    }
    for (int i = 0; i < dim_; ++i) {
      for (int k = i; k < dim_; ++k) {
        const double h =
            g2 * u.gradient[i] * u.gradient[k] + g1 * u.hessian[i][k];
        out.hessian[i][k] = h;
        out.hessian[k][i] = h;
      }
    }
    return out;
  }

  Jet2 add(const Jet2& a, const Jet2& b, double sign) const {
    Jet2 out = constant(a.value + sign * b.value);
    for (int i = 0; i < dim_; ++i) {
      out.gradient[i] = a.gradient[i] + sign * b.gradient[i];
      for (int k = i; k < dim_; ++k) {
        const double h = a.hessian[i][k] + sign * b.hessian[i][k];
        out.hessian[i][k] = h;
        out.hessian[k][i] = h;
      }
    }
    return out;
  }

  Jet2 multiply(const Jet2& a, const Jet2& b) const {
    Jet2 out = constant(a.value * b.value);
    for (int i = 0; i < dim_; ++i) {
      out.gradient[i] = a.value * b.gradient[i] + b.value * a.gradient[i];
    }
    for (int i = 0; i < dim_; ++i) {
      for (int k = i; k < dim_; ++k) {
        const double h = a.value * b.hessian[i][k] +
                         b.value * a.hessian[i][k] +
                         a.gradient[i] * b.gradient[k] +
                         b.gradient[i] * a.gradient[k];
        out.hessian[i][k] = h;
        out.hessian[k][i] = h;
      }
    }
    return out;
  }

  Jet2 function(Func f, const Jet2& u) const {
    switch (f) {
      case Func::exp:
        return chain(u, [](double x) {
          const double e = std::exp(x);
          return std::array<double, 3>{e, e, e};
        });
      case Func::ln:
        return chain(u, [this](double x) {
          if (!(x > 0.0)) fault("ln of non-positive argument");
          return std::array<double, 3>{std::log(x), 1.0 / x, -1.0 / (x * x)};
        });
      case Func::sin:
        return chain(u, [](double x) {
          const double s = std::sin(x);
          return std::array<double, 3>{s, std::cos(x), -s};
        });
      case Func::cos:
        return chain(u, [](double x) {
          const double c = std::cos(x);
          return std::array<double, 3>{c, -std::sin(x), -c};
        });
      case Func::sqrt:
        return chain(u, [this](double x) {
          if (!(x > 0.0)) fault("sqrt not differentiable at non-positive argument");
          const double r = std::sqrt(x);
          return std::array<double, 3>{r, 0.5 / r, -0.25 / (r * x)};
        });
      case Func::abs:
        return chain(u, [](double x) {
          const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
          return std::array<double, 3>{std::abs(x), s, 0.0};
        });
      case Func::tanh:
        return chain(u, [](double x) {
          const double t = std::tanh(x);
          const double d = 1.0 - t * t;
          return std::array<double, 3>{t, d, -2.0 * t * d};
        });
    }
    return u;
  }

  Jet2 binary_jet(const Node& n, const Jet2& a) const {
    if (n.op == '^' && !has_variable(*n.rhs)) {
      return power_const(a, value(*n.rhs));
    }
    const Jet2 b = jet(*n.rhs);
    switch (n.op) {
      case '+':
        return add(a, b, 1.0);
      case '-':
        return add(a, b, -1.0);
      case '*':
        return multiply(a, b);
      case '/': {
        const Jet2 inv = chain(b, [this](double x) {
          if (x == 0.0) fault("division by zero");
          const double r = 1.0 / x;
          return std::array<double, 3>{r, -r * r, 2.0 * r * r * r};
        });
        return multiply(a, inv);
      }
      case '^': {
        // a^b = exp(b ln a), defined for a > 0 only.
        const Jet2 log_a = function(Func::ln, a);
        return function(Func::exp, multiply(b, log_a));
      }
    }
    return a;
  }

  Jet2 power_const(const Jet2& u, double c) const {
    if (c == 0.0) return constant(1.0);
    if (c == 1.0) return u;
    const bool integer = std::trunc(c) == c;
    return chain(u, [this, c, integer](double x) {
      if (x < 0.0 && !integer) fault("non-integer power of negative base");
      if (x == 0.0 && (c < 2.0 && !(integer && c > 0.0))) {
        fault("power not twice differentiable at zero");
      }
      const double g0 = std::pow(x, c);
      const double g1 = c * std::pow(x, c - 1.0);
      const double g2 = c == 2.0 ? 2.0 : c * (c - 1.0) * std::pow(x, c - 2.0);
      return std::array<double, 3>{g0, g1, g2};
    });
  }

  int dim_;
};

void check_finite(double v, std::span<const double> point) {
  if (!std::isfinite(v)) {
    throw EvalFault("non-finite result",
                    std::vector<double>(point.begin(), point.end()));
  }
}

void check_point(std::span<const double> point, int dim) {
  if (static_cast<int>(point.size()) < dim) {
    throw InvalidArgument(fmt::format(
        "point has {} coordinates, expression needs {}", point.size(), dim));
  }
}

}  // namespace

Expression Expression::parse(std::string_view text, int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw InvalidArgument(fmt::format("unsupported dimension {}", dim));
  }
  return Expression(Parser(text, dim).parse(), dim);
}

Expression Expression::constant(double value, int dim) {
  return Expression(make_number(value), dim);
}

bool Expression::is_constant() const { return !has_variable(*root_); }

double Expression::eval(std::span<const double> point) const {
  check_point(point, dim_);
  const double v = Evaluator(point).value(*root_);
  check_finite(v, point);
  return v;
}

Jet2 Expression::eval_jet(std::span<const double> point) const {
  check_point(point, dim_);
  const Jet2 j = JetEvaluator(point, dim_).jet(*root_);
  check_finite(j.value, point);
  for (int i = 0; i < dim_; ++i) {
    check_finite(j.gradient[i], point);
    for (int k = 0; k < dim_; ++k) check_finite(j.hessian[i][k], point);
  }
  return j;
}

std::string Expression::to_string() const {
  std::string out;
  print(*root_, out);
  return out;
}

bool operator==(const Expression& a, const Expression& b) {
  return a.dim_ == b.dim_ && same_tree(*a.root_, *b.root_);
}

}  // namespace fplab::expr
