#pragma once

// Closed-form scalar fields over (t, x1..xn).
//
// Grammar:  expr   := term (('+'|'-') term)*
//           term   := unary (('*'|'/') unary)*
//           unary  := '-' unary | power
//           power  := atom ('^' unary)?
//           atom   := number | ident | func '(' expr ')' | '(' expr ')'
// Identifiers: t, x1, x2, x3, pi.  Functions: sin, cos, exp, step.
// `step(u)` is the Heaviside function (1 for u >= 0); it has no derivative and
// marks a field as non-smooth data.

#include "robinmc/core.hpp"

#include <array>
#include <cctype>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace robinmc {

namespace detail {

enum class Op : unsigned char { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Step };

struct Node {
  Op op;
  double value = 0.0;  // Const
  int var = 0;         // Var: 0 = t, k = x_k
  std::shared_ptr<const Node> lhs, rhs;
};
using NodePtr = std::shared_ptr<const Node>;

inline NodePtr constant(double v) { return std::make_shared<const Node>(Node{Op::Const, v, 0, {}, {}}); }
inline NodePtr variable(int k) { return std::make_shared<const Node>(Node{Op::Var, 0.0, k, {}, {}}); }

inline bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

inline double apply(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    case Op::Pow: return std::pow(a, b);
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Exp: return std::exp(a);
    case Op::Step: return a >= 0.0 ? 1.0 : 0.0;
    default: return 0.0;
  }
}

inline bool is_unary(Op op) { return op == Op::Neg || op == Op::Sin || op == Op::Cos || op == Op::Exp || op == Op::Step; }

// Builds a node with constant folding and the usual 0/1 identities.
inline NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
  if (is_unary(op)) {
    if (a->op == Op::Const) return constant(apply(op, a->value, 0.0));
    if (op == Op::Neg && a->op == Op::Neg) return a->lhs;
    return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(a), nullptr});
  }
  if (a->op == Op::Const && b->op == Op::Const) return constant(apply(op, a->value, b->value));
  switch (op) {
    case Op::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Div:
      if (is_const(a, 0.0) && !is_const(b, 0.0)) return constant(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Pow:
      if (is_const(b, 0.0)) return constant(1.0);
      if (is_const(b, 1.0)) return a;
      break;
    default: break;
  }
  return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(a), std::move(b)});
}

class Parser {
public:
  Parser(std::string src, int dim) : src_(std::move(src)), dim_(dim) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return n;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression \"" + src_ + "\" at " + std::to_string(pos_) + ": " + msg);
  }
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (accept('+')) n = make(Op::Add, n, term());
      else if (accept('-')) n = make(Op::Sub, n, term());
      else return n;
    }
  }
  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (accept('*')) n = make(Op::Mul, n, unary());
      else if (accept('/')) n = make(Op::Div, n, unary());
      else return n;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return make(Op::Pow, base, unary());
    return base;
  }
  NodePtr atom() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      return constant(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      const std::string id = src_.substr(start, pos_ - start);
      if (id == "t") return variable(0);
      if (id == "pi") return constant(3.14159265358979323846);
      if (id.size() == 2 && id[0] == 'x' && id[1] >= '1' && id[1] <= '3') {
        const int k = id[1] - '0';
        if (k > dim_) fail("coordinate " + id + " exceeds dimension " + std::to_string(dim_));
        return variable(k);
      }
      Op f;
      if (id == "sin") f = Op::Sin;
      else if (id == "cos") f = Op::Cos;
      else if (id == "exp") f = Op::Exp;
      else if (id == "step") f = Op::Step;
      else fail("unknown identifier '" + id + "'");
      if (!accept('(')) fail("expected '(' after " + id);
      NodePtr arg = expr();
      if (!accept(')')) fail("expected ')'");
      return make(f, arg);
    }
    if (accept('(')) {
      NodePtr n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string src_;
  int dim_;
  std::size_t pos_ = 0;
};

inline NodePtr differentiate(const NodePtr& n, int var) {
  switch (n->op) {
    case Op::Const: return constant(0.0);
    case Op::Var: return constant(n->var == var ? 1.0 : 0.0);
    case Op::Add: return make(Op::Add, differentiate(n->lhs, var), differentiate(n->rhs, var));
    case Op::Sub: return make(Op::Sub, differentiate(n->lhs, var), differentiate(n->rhs, var));
    case Op::Mul:
      return make(Op::Add, make(Op::Mul, differentiate(n->lhs, var), n->rhs),
                  make(Op::Mul, n->lhs, differentiate(n->rhs, var)));
    case Op::Div: {
      NodePtr num = make(Op::Sub, make(Op::Mul, differentiate(n->lhs, var), n->rhs),
                         make(Op::Mul, n->lhs, differentiate(n->rhs, var)));
      return make(Op::Div, num, make(Op::Mul, n->rhs, n->rhs));
    }
    case Op::Pow: {
      if (n->rhs->op != Op::Const) {
        NodePtr de = differentiate(n->rhs, var);
        if (!is_const(de, 0.0)) throw RewriteError("power with a variable exponent has no derivative in this grammar");
      }
      NodePtr reduced = make(Op::Pow, n->lhs, make(Op::Sub, n->rhs, constant(1.0)));
      return make(Op::Mul, make(Op::Mul, n->rhs, reduced), differentiate(n->lhs, var));
    }
    case Op::Neg: return make(Op::Neg, differentiate(n->lhs, var));
    case Op::Sin: return make(Op::Mul, make(Op::Cos, n->lhs), differentiate(n->lhs, var));
    case Op::Cos: return make(Op::Neg, make(Op::Mul, make(Op::Sin, n->lhs), differentiate(n->lhs, var)));
    case Op::Exp: return make(Op::Mul, make(Op::Exp, n->lhs), differentiate(n->lhs, var));
    case Op::Step: {
      if (is_const(differentiate(n->lhs, var), 0.0)) return constant(0.0);
      throw RewriteError("step() is not differentiable");
    }
  }
  return constant(0.0);
}

inline bool contains(const NodePtr& n, Op op) {
  if (!n) return false;
  return n->op == op || contains(n->lhs, op) || contains(n->rhs, op);
}

inline void print(std::ostream& os, const NodePtr& n) {
  static const char* names[] = {"", "", "+", "-", "*", "/", "^", "-", "sin", "cos", "exp", "step"};
  switch (n->op) {
    case Op::Const: {
      std::ostringstream s;
      s.precision(17);
      s << n->value;
      if (n->value < 0) os << '(' << s.str() << ')';
      else os << s.str();
      return;
    }
    case Op::Var:
      if (n->var == 0) os << 't';
      else os << 'x' << n->var;
      return;
    case Op::Neg:
      os << "(-";
      print(os, n->lhs);
      os << ')';
      return;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Step:
      os << names[static_cast<int>(n->op)] << '(';
      print(os, n->lhs);
      os << ')';
      return;
    default:
      os << '(';
      print(os, n->lhs);
      os << names[static_cast<int>(n->op)];
      print(os, n->rhs);
      os << ')';
  }
}

struct Instr {
  Op op;
  int var;
  double value;
};

inline void emit(const NodePtr& n, std::vector<Instr>& code, int depth, int& max_depth) {
  if (n->op == Op::Const || n->op == Op::Var) {
    code.push_back({n->op, n->var, n->value});
    max_depth = std::max(max_depth, depth + 1);
    return;
  }
  emit(n->lhs, code, depth, max_depth);
  if (n->rhs) emit(n->rhs, code, depth + 1, max_depth);
  code.push_back({n->op, 0, 0.0});
}

}  // namespace detail

/// Immutable scalar field f(t, x). Copies share the expression tree.
class Expr {
public:
  Expr() : Expr(detail::constant(0.0), 1) {}

  static Expr parse(const std::string& src, int dim) {
    return Expr(detail::Parser(src, dim).parse(), dim);
  }
  static Expr constant(double v, int dim = kMaxDim) { return Expr(detail::constant(v), dim); }

  int dim() const noexcept { return dim_; }
  bool is_constant() const noexcept { return root_->op == detail::Op::Const; }
  double constant_value() const noexcept { return root_->value; }
  bool is_smooth() const { return !detail::contains(root_, detail::Op::Step); }
  bool is_zero() const noexcept { return is_constant() && constant_value() == 0.0; }

  /// Exact partial derivative; var 0 is t, k is x_k.
  Expr derivative(int var) const { return Expr(detail::differentiate(root_, var), dim_); }

  double operator()(double t, const Vec& x) const {
    if (is_constant()) return root_->value;
    std::array<double, 64> local{};
    std::vector<double> heap;
    double* stack = local.data();
    if (max_depth_ > static_cast<int>(local.size())) {
      heap.resize(static_cast<std::size_t>(max_depth_));
      stack = heap.data();
    }
    int sp = 0;
    for (const auto& in : code_) {
      switch (in.op) {
        case detail::Op::Const: stack[sp++] = in.value; break;
        case detail::Op::Var: stack[sp++] = in.var == 0 ? t : x[in.var - 1]; break;
        case detail::Op::Neg:
        case detail::Op::Sin:
        case detail::Op::Cos:
        case detail::Op::Exp:
        case detail::Op::Step: stack[sp - 1] = detail::apply(in.op, stack[sp - 1], 0.0); break;
        default:
          --sp;
          stack[sp - 1] = detail::apply(in.op, stack[sp - 1], stack[sp]);
      }
    }
    return stack[0];
  }

  Expr operator+(const Expr& o) const { return Expr(detail::make(detail::Op::Add, root_, o.root_), std::max(dim_, o.dim_)); }
  Expr operator-(const Expr& o) const { return Expr(detail::make(detail::Op::Sub, root_, o.root_), std::max(dim_, o.dim_)); }
  Expr operator*(const Expr& o) const { return Expr(detail::make(detail::Op::Mul, root_, o.root_), std::max(dim_, o.dim_)); }

  std::string to_string() const {
    std::ostringstream os;
    detail::print(os, root_);
    return os.str();
  }

private:
  Expr(detail::NodePtr root, int dim) : root_(std::move(root)), dim_(dim) {
    detail::emit(root_, code_, 0, max_depth_);
  }

  detail::NodePtr root_;
  int dim_;
  std::vector<detail::Instr> code_;
  int max_depth_ = 0;
};

}  // namespace robinmc
