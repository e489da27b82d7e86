#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "subrq/taylor.hpp"

namespace subrq {

inline double powi(double x, long m) {
  if (m < 0) {
    if (x == 0.0) throw DomainError("division by zero");
    return 1.0 / powi(x, -m);
  }
  double acc = 1.0, base = x;
  for (long e = m; e > 0; e >>= 1) {
    if (e & 1) acc *= base;
    if (e > 1) base *= base;
  }
  return acc;
}

inline double dsin(double x) { return std::sin(x); }

// Value plus derivatives of a scalar expression at a point. `hess` is
// exactly symmetric by construction; `third` is the symmetric tensor of
// third partials. Members beyond `order` are empty.
struct JetValue {
  int order = 0;
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
  Tensor3 third;
};

// Immutable scalar expression over variables q1..q{dim}: decimal literals,
// + - * / ^(integer), unary minus, sin/cos/exp/sqrt. Values are evaluated
// over plain doubles or truncated jets; all derivative propagation is
// exact forward-mode.
class Expr {
 public:
  Expr() = default;

  static Expr parse(const std::string& src, int dim);
  // Same grammar with named variables (e.g. {"t"}); dim = names.size().
  static Expr parse(const std::string& src,
                    const std::vector<std::string>& names);

  static Expr constant(double v, int dim) {
    return Expr(std::make_shared<Node>(Node::kNum, v), dim);
  }
  static Expr var(int index, int dim) {
    if (index < 0 || index >= dim) throw Error("variable index out of range");
    auto n = std::make_shared<Node>(Node::kVar, 0.0);
    n->var = index;
    return Expr(n, dim);
  }

  int dim() const { return dim_; }
  bool valid() const { return static_cast<bool>(node_); }

  friend Expr operator+(const Expr& a, const Expr& b) {
    return combine(Node::kAdd, a, b);
  }
  friend Expr operator-(const Expr& a, const Expr& b) {
    return combine(Node::kSub, a, b);
  }
  friend Expr operator*(const Expr& a, const Expr& b) {
    return combine(Node::kMul, a, b);
  }
  friend Expr operator/(const Expr& a, const Expr& b) {
    return combine(Node::kDiv, a, b);
  }
  friend Expr operator-(const Expr& a) {
    auto n = std::make_shared<Node>(Node::kNeg, 0.0);
    n->kids = {a.node_};
    return Expr(n, a.dim_);
  }

  static Expr fun(const std::string& name, const Expr& arg) {
    auto n = std::make_shared<Node>(Node::kFun, 0.0);
    n->fun = fun_kind(name);
    n->kids = {arg.node_};
    return Expr(n, arg.dim_);
  }

  template <class S>
  S eval_with(const std::vector<S>& vars) const {
    if (static_cast<int>(vars.size()) != dim_)
      throw Error("evaluation arity mismatch");
    return eval_node<S>(*node_, vars);
  }

  double eval(const VectorXd& q) const {
    std::vector<double> v(q.data(), q.data() + q.size());
    return eval_with<double>(v);
  }

  JetValue eval_jet(const VectorXd& q, int order) const {
    if (order < 0 || order > 3) throw Error("jet order must be 0..3");
    if (q.size() != dim_) throw Error("evaluation arity mismatch");
    std::vector<TaylorN> v;
    v.reserve(dim_);
    for (int i = 0; i < dim_; ++i)
      v.push_back(TaylorN::variable(dim_, order, i, q[i]));
    TaylorN r = eval_with<TaylorN>(v);
    JetValue out;
    out.order = order;
    out.value = r.value();
    if (order >= 1) out.grad = r.grad();
    if (order >= 2) out.hess = r.hess();
    if (order >= 3) out.third = r.third();
    return out;
  }

  std::string to_string() const { return print(*node_, 0); }

  friend bool operator==(const Expr& a, const Expr& b) {
    return a.dim_ == b.dim_ && structurally_equal(*a.node_, *b.node_);
  }

 private:
  struct Node {
    enum Kind { kNum, kVar, kAdd, kSub, kMul, kDiv, kNeg, kPow, kFun };
    enum Fun { kSin, kCos, kExp, kSqrt };
    Node(Kind k, double v) : kind(k), num(v) {}
    Kind kind;
    double num;
    int var = 0;
    long pow = 0;
    Fun fun = kSin;
    std::vector<std::shared_ptr<const Node>> kids;
  };
  using NodePtr = std::shared_ptr<const Node>;

  Expr(NodePtr n, int dim) : node_(std::move(n)), dim_(dim) {}

  static Expr combine(Node::Kind k, const Expr& a, const Expr& b) {
    if (a.dim_ != b.dim_) throw Error("operand dimension mismatch");
    auto n = std::make_shared<Node>(k, 0.0);
    n->kids = {a.node_, b.node_};
    return Expr(n, a.dim_);
  }

  static Node::Fun fun_kind(const std::string& name) {
    if (name == "sin") return Node::kSin;
    if (name == "cos") return Node::kCos;
    if (name == "exp") return Node::kExp;
    if (name == "sqrt") return Node::kSqrt;
    throw Error("unknown function: " + name);
  }

  template <class S>
  static S eval_node(const Node& n, const std::vector<S>& vars) {
    switch (n.kind) {
      case Node::kNum:
        return vars[0] * 0.0 + n.num;
      case Node::kVar:
        return vars[n.var];
      case Node::kAdd:
        return eval_node(*n.kids[0], vars) + eval_node(*n.kids[1], vars);
      case Node::kSub:
        return eval_node(*n.kids[0], vars) - eval_node(*n.kids[1], vars);
      case Node::kMul:
        return eval_node(*n.kids[0], vars) * eval_node(*n.kids[1], vars);
      case Node::kDiv: {
        S den = eval_node(*n.kids[1], vars);
        if (primal(den) == 0.0) throw DomainError("division by zero");
        return eval_node(*n.kids[0], vars) / den;
      }
      case Node::kNeg:
        return -eval_node(*n.kids[0], vars);
      case Node::kPow:
        return powi(eval_node(*n.kids[0], vars), n.pow);
      case Node::kFun: {
        S a = eval_node(*n.kids[0], vars);
        switch (n.fun) {
          case Node::kSin:
            return sin(a);
          case Node::kCos:
            return cos(a);
          case Node::kExp:
            return exp(a);
          case Node::kSqrt:
            if (primal(a) < 0.0) throw DomainError("sqrt of negative value");
            return sqrt(a);
        }
      }
    }
    throw Error("corrupt expression node");
  }

  // Precedence levels for printing: 1 add, 2 mul, 3 unary, 4 pow/atom.
  static int prec(const Node& n) {
    switch (n.kind) {
      case Node::kAdd:
      case Node::kSub:
        return 1;
      case Node::kMul:
      case Node::kDiv:
        return 2;
      case Node::kNeg:
        return 3;
      case Node::kPow:
        return 4;
      default:
        return 5;
    }
  }

  static std::string print_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

  static std::string wrap(const Node& child, int parent_prec) {
    std::string s = print(child, 0);
    if (prec(child) < parent_prec) return "(" + s + ")";
    return s;
  }

  static std::string print(const Node& n, int) {
    switch (n.kind) {
      case Node::kNum:
        if (n.num < 0.0) return "(" + print_num(n.num) + ")";
        return print_num(n.num);
      case Node::kVar:
        return "q" + std::to_string(n.var + 1);
      case Node::kAdd:
        return wrap(*n.kids[0], 1) + " + " + wrap(*n.kids[1], 2);
      case Node::kSub:
        return wrap(*n.kids[0], 1) + " - " + wrap(*n.kids[1], 2);
      case Node::kMul:
        return wrap(*n.kids[0], 2) + "*" + wrap(*n.kids[1], 3);
      case Node::kDiv:
        return wrap(*n.kids[0], 2) + "/" + wrap(*n.kids[1], 3);
      case Node::kNeg:
        return "-" + wrap(*n.kids[0], 3);
      case Node::kPow:
        return wrap(*n.kids[0], 5) + "^" + std::to_string(n.pow);
      case Node::kFun: {
        static const char* names[] = {"sin", "cos", "exp", "sqrt"};
        return std::string(names[n.fun]) + "(" + print(*n.kids[0], 0) + ")";
      }
    }
    return "";
  }

  static bool structurally_equal(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Node::kNum:
        return a.num == b.num;
      case Node::kVar:
        return a.var == b.var;
      case Node::kPow:
        if (a.pow != b.pow) return false;
        break;
      case Node::kFun:
        if (a.fun != b.fun) return false;
        break;
      default:
        break;
    }
    if (a.kids.size() != b.kids.size()) return false;
    for (std::size_t i = 0; i < a.kids.size(); ++i)
      if (!structurally_equal(*a.kids[i], *b.kids[i])) return false;
    return true;
  }

  class Parser;

  NodePtr node_;
  int dim_ = 0;
};

class Expr::Parser {
 public:
  Parser(const std::string& src, int dim,
         const std::vector<std::string>* names = nullptr)
      : src_(src), dim_(dim), names_(names) {}

  NodePtr run() {
    NodePtr e = parse_sum();
    skip_ws();
    if (pos_ != src_.size())
      throw ParseError("unexpected trailing input", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (eat('+'))
        lhs = binary(Node::kAdd, lhs, parse_term());
      else if (eat('-'))
        lhs = binary(Node::kSub, lhs, parse_term());
      else
        return lhs;
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (eat('*'))
        lhs = binary(Node::kMul, lhs, parse_unary());
      else if (eat('/'))
        lhs = binary(Node::kDiv, lhs, parse_unary());
      else
        return lhs;
    }
  }

  NodePtr parse_unary() {
    if (eat('-')) {
      auto n = std::make_shared<Node>(Node::kNeg, 0.0);
      n->kids = {parse_unary()};
      return n;
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (eat('^')) {
      auto n = std::make_shared<Node>(Node::kPow, 0.0);
      n->pow = parse_int_exponent();
      n->kids = {base};
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == '^')
        throw ParseError("chained '^' requires parentheses", pos_);
      return n;
    }
    return base;
  }

  long parse_int_exponent() {
    skip_ws();
    std::size_t start = pos_;
    bool neg = false;
    if (pos_ < src_.size() && src_[pos_] == '-') {
      neg = true;
      ++pos_;
    }
    if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
      throw ParseError("expected integer exponent", start);
    long v = 0;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
      v = v * 10 + (src_[pos_] - '0');
      if (v > 1000000) throw ParseError("exponent too large", start);
      ++pos_;
    }
    if (pos_ < src_.size() && src_[pos_] == '.')
      throw ParseError("exponent must be an integer", pos_);
    return neg ? -v : v;
  }

  NodePtr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_sum();
      if (!eat(')')) throw ParseError("expected ')'", pos_);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
      return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
      ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
          ++pos_;
      } else {
        pos_ = mark;  // 'e' belonged to something else; not a valid exponent
      }
    }
    std::string text = src_.substr(start, pos_ - start);
    try {
      std::size_t used = 0;
      double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("");
      return std::make_shared<Node>(Node::kNum, v);
    } catch (const std::exception&) {
      throw ParseError("malformed numeric literal '" + text + "'", start);
    }
  }

  NodePtr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    std::string name = src_.substr(start, pos_ - start);
    if (names_) {
      for (std::size_t i = 0; i < names_->size(); ++i) {
        if ((*names_)[i] == name) {
          auto n = std::make_shared<Node>(Node::kVar, 0.0);
          n->var = static_cast<int>(i);
          return n;
        }
      }
    }
    if (!names_ && name.size() >= 2 && name[0] == 'q' &&
        std::all_of(name.begin() + 1, name.end(),
                    [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      int idx = std::stoi(name.substr(1));
      if (idx < 1 || idx > dim_)
        throw ParseError("unknown identifier '" + name + "' (chart has " +
                             std::to_string(dim_) + " coordinates)",
                         start);
      auto n = std::make_shared<Node>(Node::kVar, 0.0);
      n->var = idx - 1;
      return n;
    }
    if (name == "sin" || name == "cos" || name == "exp" || name == "sqrt") {
      if (!eat('(')) throw ParseError("expected '(' after " + name, pos_);
      NodePtr arg = parse_sum();
      if (peek() == ',')
        throw ParseError(name + " takes exactly one argument", pos_);
      if (!eat(')')) throw ParseError("expected ')'", pos_);
      auto n = std::make_shared<Node>(Node::kFun, 0.0);
      n->fun = fun_kind(name);
      n->kids = {arg};
      return n;
    }
    if (names_ && !names_->empty()) {
      std::string expect;
      for (std::size_t i = 0; i < names_->size(); ++i)
        expect += (i ? ", " : "") + (*names_)[i];
      throw ParseError(
          "unknown identifier '" + name + "' (expected one of: " + expect + ")",
          start);
    }
    throw ParseError("unknown identifier '" + name + "'", start);
  }

  static NodePtr binary(Node::Kind k, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>(k, 0.0);
    n->kids = {std::move(a), std::move(b)};
    return n;
  }

  const std::string& src_;
  int dim_;
  const std::vector<std::string>* names_;
  std::size_t pos_ = 0;
};

inline Expr Expr::parse(const std::string& src, int dim) {
  Parser p(src, dim);
  return Expr(p.run(), dim);
}

inline Expr Expr::parse(const std::string& src,
                        const std::vector<std::string>& names) {
  Parser p(src, static_cast<int>(names.size()), &names);
  return Expr(p.run(), static_cast<int>(names.size()));
}

}  // namespace subrq
