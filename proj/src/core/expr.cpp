#include "core/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <unordered_map>

namespace almreg {

namespace {

bool is_int(double x) { return std::isfinite(x) && x == std::floor(x); }

bool node_eq(const ExprNode* x, const ExprNode* y) {
  if (x == y) return true;
  if (!x || !y) return false;
  if (x->kind != y->kind) return false;
  switch (x->kind) {
    case NodeKind::Constant:
      return x->value == y->value;
    case NodeKind::Parameter:
      return x->name == y->name;
    case NodeKind::CoordQ:
    case NodeKind::CoordV:
      return x->index == y->index;
    default:
      break;
  }
  if (!node_eq(x->a.get(), y->a.get())) return false;
  return node_eq(x->b.get(), y->b.get());
}

}  // namespace

Expr Expr::make(ExprNode n) { return Expr(std::make_shared<const ExprNode>(std::move(n))); }

Expr Expr::constant(double c) {
  ExprNode n;
  n.kind = NodeKind::Constant;
  n.value = c;
  return make(std::move(n));
}

Expr Expr::parameter(std::string name) {
  ExprNode n;
  n.kind = NodeKind::Parameter;
  n.name = std::move(name);
  return make(std::move(n));
}

Expr Expr::coord_q(int index) {
  ExprNode n;
  n.kind = NodeKind::CoordQ;
  n.index = index;
  return make(std::move(n));
}

Expr Expr::coord_v(int index) {
  ExprNode n;
  n.kind = NodeKind::CoordV;
  n.index = index;
  return make(std::move(n));
}

bool Expr::same_as(const Expr& other) const { return node_eq(node_.get(), other.node_.get()); }

static bool cval(const Expr& e, double* out) {
  if (e.is_constant()) {
    *out = e.constant_value();
    return true;
  }
  return false;
}

Expr Expr::add(const Expr& x, const Expr& y) {
  double a, b;
  if (cval(x, &a) && cval(y, &b)) return constant(a + b);
  if (cval(x, &a) && a == 0.0) return y;
  if (cval(y, &b) && b == 0.0) return x;
  ExprNode n;
  n.kind = NodeKind::Add;
  n.a = x.ptr();
  n.b = y.ptr();
  return make(std::move(n));
}

Expr Expr::sub(const Expr& x, const Expr& y) {
  double a, b;
  if (cval(x, &a) && cval(y, &b)) return constant(a - b);
  if (cval(y, &b) && b == 0.0) return x;
  if (cval(x, &a) && a == 0.0) return neg(y);
  if (x.same_as(y)) return constant(0.0);
  ExprNode n;
  n.kind = NodeKind::Sub;
  n.a = x.ptr();
  n.b = y.ptr();
  return make(std::move(n));
}

Expr Expr::mul(const Expr& x, const Expr& y) {
  double a, b;
  if (cval(x, &a) && cval(y, &b)) return constant(a * b);
  if (cval(x, &a)) {
    if (a == 0.0) return constant(0.0);
    if (a == 1.0) return y;
  }
  if (cval(y, &b)) {
    if (b == 0.0) return constant(0.0);
    if (b == 1.0) return x;
  }
  ExprNode n;
  n.kind = NodeKind::Mul;
  n.a = x.ptr();
  n.b = y.ptr();
  return make(std::move(n));
}

Expr Expr::div(const Expr& x, const Expr& y) {
  double a, b;
  if (cval(y, &b) && b != 0.0) {
    if (cval(x, &a)) return constant(a / b);
    if (b == 1.0) return x;
  }
  if (cval(x, &a) && a == 0.0) return constant(0.0);
  ExprNode n;
  n.kind = NodeKind::Div;
  n.a = x.ptr();
  n.b = y.ptr();
  return make(std::move(n));
}

Expr Expr::pow(const Expr& x, const Expr& y) {
  double a, b;
  if (cval(y, &b)) {
    if (b == 0.0) return constant(1.0);
    if (b == 1.0) return x;
    if (cval(x, &a)) {
      double r = std::pow(a, b);
      if (std::isfinite(r)) return constant(r);
    }
  }
  ExprNode n;
  n.kind = NodeKind::Pow;
  n.a = x.ptr();
  n.b = y.ptr();
  return make(std::move(n));
}

Expr Expr::neg(const Expr& x) {
  double a;
  if (cval(x, &a)) return constant(-a);
  if (x.kind() == NodeKind::Neg) return Expr(x.node().a);
  ExprNode n;
  n.kind = NodeKind::Neg;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::sqrt(const Expr& x) {
  double a;
  if (cval(x, &a) && a >= 0.0) return constant(std::sqrt(a));
  ExprNode n;
  n.kind = NodeKind::Sqrt;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::sin(const Expr& x) {
  double a;
  if (cval(x, &a)) return constant(std::sin(a));
  ExprNode n;
  n.kind = NodeKind::Sin;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::cos(const Expr& x) {
  double a;
  if (cval(x, &a)) return constant(std::cos(a));
  ExprNode n;
  n.kind = NodeKind::Cos;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::exp(const Expr& x) {
  double a;
  if (cval(x, &a)) return constant(std::exp(a));
  ExprNode n;
  n.kind = NodeKind::Exp;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::ln(const Expr& x) {
  double a;
  if (cval(x, &a) && a > 0.0) return constant(std::log(a));
  ExprNode n;
  n.kind = NodeKind::Ln;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::abs(const Expr& x) {
  double a;
  if (cval(x, &a)) return constant(std::abs(a));
  ExprNode n;
  n.kind = NodeKind::Abs;
  n.a = x.ptr();
  return make(std::move(n));
}

Expr Expr::sign(const Expr& x) {
  double a;
  if (cval(x, &a)) return constant(a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0));
  ExprNode n;
  n.kind = NodeKind::Sign;
  n.a = x.ptr();
  return make(std::move(n));
}

// ---------------------------------------------------------------------------
// Differentiation

Expr Expr::derivative(const Var& wrt) const {
  const ExprNode& n = *node_;
  auto D = [&wrt](const Expr& e) { return e.derivative(wrt); };
  Expr A = n.a ? Expr(n.a) : Expr();
  Expr B = n.b ? Expr(n.b) : Expr();
  switch (n.kind) {
    case NodeKind::Constant:
      return constant(0.0);
    case NodeKind::Parameter:
      return constant(wrt.kind == NodeKind::Parameter && wrt.name == n.name ? 1.0 : 0.0);
    case NodeKind::CoordQ:
      return constant(wrt.kind == NodeKind::CoordQ && wrt.index == n.index ? 1.0 : 0.0);
    case NodeKind::CoordV:
      return constant(wrt.kind == NodeKind::CoordV && wrt.index == n.index ? 1.0 : 0.0);
    case NodeKind::Neg:
      return neg(D(A));
    case NodeKind::Sqrt:
      return div(D(A), mul(constant(2.0), sqrt(A)));
    case NodeKind::Sin:
      return mul(cos(A), D(A));
    case NodeKind::Cos:
      return neg(mul(sin(A), D(A)));
    case NodeKind::Exp:
      return mul(exp(A), D(A));
    case NodeKind::Ln:
      return div(D(A), A);
    case NodeKind::Abs:
      return mul(sign(A), D(A));
    case NodeKind::Sign:
      return constant(0.0);
    case NodeKind::Add:
      return add(D(A), D(B));
    case NodeKind::Sub:
      return sub(D(A), D(B));
    case NodeKind::Mul:
      return add(mul(D(A), B), mul(A, D(B)));
    case NodeKind::Div:
      return div(sub(mul(D(A), B), mul(A, D(B))), pow(B, constant(2.0)));
    case NodeKind::Pow: {
      double c;
      if (cval(B, &c)) {
        // d(a^c) = c*a^(c-1)*a'
        return mul(mul(B, pow(A, constant(c - 1.0))), D(A));
      }
      // d(a^b) = a^b * (b' ln a + b a'/a)
      return mul(pow(A, B), add(mul(D(B), ln(A)), mul(B, div(D(A), A))));
    }
  }
  return Expr();  // unreachable
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct EvalCtx {
  const Bindings* b;
  double margin = std::numeric_limits<double>::infinity();
};

double eval_node(const ExprNode* n, EvalCtx& ctx);

std::string subtree_str(const ExprNode* n);

double eval_node(const ExprNode* n, EvalCtx& ctx) {
  switch (n->kind) {
    case NodeKind::Constant:
      return n->value;
    case NodeKind::Parameter: {
      auto it = ctx.b->params.find(n->name);
      if (it == ctx.b->params.end())
        throw EvalDomainError("unbound parameter '" + n->name + "'", n->name);
      return it->second;
    }
    case NodeKind::CoordQ:
      if (n->index < 1 || n->index > ctx.b->q.size())
        throw EvalDomainError("coordinate index out of range", subtree_str(n));
      return ctx.b->q[n->index - 1];
    case NodeKind::CoordV:
      if (n->index < 1 || n->index > ctx.b->v.size())
        throw EvalDomainError("coordinate index out of range", subtree_str(n));
      return ctx.b->v[n->index - 1];
    default:
      break;
  }
  double a = eval_node(n->a.get(), ctx);
  switch (n->kind) {
    case NodeKind::Neg:
      return -a;
    case NodeKind::Sqrt:
      ctx.margin = std::min(ctx.margin, a);
      if (a < 0.0) throw EvalDomainError("sqrt of negative value", subtree_str(n));
      return std::sqrt(a);
    case NodeKind::Sin:
      return std::sin(a);
    case NodeKind::Cos:
      return std::cos(a);
    case NodeKind::Exp:
      return std::exp(a);
    case NodeKind::Ln:
      ctx.margin = std::min(ctx.margin, a);
      if (a <= 0.0) throw EvalDomainError("log of non-positive value", subtree_str(n));
      return std::log(a);
    case NodeKind::Abs:
      ctx.margin = std::min(ctx.margin, std::abs(a));
      return std::abs(a);
    case NodeKind::Sign:
      ctx.margin = std::min(ctx.margin, std::abs(a));
      return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    default:
      break;
  }
  double b = eval_node(n->b.get(), ctx);
  switch (n->kind) {
    case NodeKind::Add:
      return a + b;
    case NodeKind::Sub:
      return a - b;
    case NodeKind::Mul:
      return a * b;
    case NodeKind::Div:
      ctx.margin = std::min(ctx.margin, std::abs(b));
      if (b == 0.0) throw EvalDomainError("division by zero", subtree_str(n));
      return a / b;
    case NodeKind::Pow: {
      if (a < 0.0 && !is_int(b))
        throw EvalDomainError("negative base with non-integer exponent", subtree_str(n));
      if (a == 0.0 && b < 0.0)
        throw EvalDomainError("zero base with negative exponent", subtree_str(n));
      if (!is_int(b)) ctx.margin = std::min(ctx.margin, a);
      return std::pow(a, b);
    }
    default:
      break;
  }
  throw EvalDomainError("malformed expression node", "?");
}

}  // namespace

double Expr::evaluate(const Bindings& b, double* min_margin) const {
  EvalCtx ctx{&b};
  double r = eval_node(node_.get(), ctx);
  if (min_margin) *min_margin = ctx.margin;
  return r;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

// precedence: add/sub 1, mul/div 2, neg 3, pow 4, atom 5
int precedence(NodeKind k) {
  switch (k) {
    case NodeKind::Add:
    case NodeKind::Sub:
      return 1;
    case NodeKind::Mul:
    case NodeKind::Div:
      return 2;
    case NodeKind::Neg:
      return 3;
    case NodeKind::Pow:
      return 4;
    default:
      return 5;
  }
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void print_node(const ExprNode* n, const Families& fam, std::string& out);

void print_wrapped(const ExprNode* n, const Families& fam, int min_prec, std::string& out) {
  bool need = precedence(n->kind) < min_prec ||
              (n->kind == NodeKind::Constant && n->value < 0.0 && min_prec > 1);
  if (need) out += '(';
  print_node(n, fam, out);
  if (need) out += ')';
}

// pow operands must be atoms per the grammar
void print_atom(const ExprNode* n, const Families& fam, std::string& out) {
  bool atom = precedence(n->kind) == 5 && !(n->kind == NodeKind::Constant && n->value < 0.0);
  if (!atom) out += '(';
  print_node(n, fam, out);
  if (!atom) out += ')';
}

void print_node(const ExprNode* n, const Families& fam, std::string& out) {
  switch (n->kind) {
    case NodeKind::Constant:
      out += fmt_double(n->value);
      return;
    case NodeKind::Parameter:
      out += n->name;
      return;
    case NodeKind::CoordQ:
      out += fam.first + std::to_string(n->index);
      return;
    case NodeKind::CoordV:
      out += fam.second + std::to_string(n->index);
      return;
    case NodeKind::Neg:
      out += '-';
      print_wrapped(n->a.get(), fam, 3, out);
      return;
    case NodeKind::Sqrt:
    case NodeKind::Sin:
    case NodeKind::Cos:
    case NodeKind::Exp:
    case NodeKind::Ln:
    case NodeKind::Abs:
    case NodeKind::Sign: {
      const char* f = n->kind == NodeKind::Sqrt  ? "sqrt"
                      : n->kind == NodeKind::Sin ? "sin"
                      : n->kind == NodeKind::Cos ? "cos"
                      : n->kind == NodeKind::Exp ? "exp"
                      : n->kind == NodeKind::Ln  ? "ln"
                      : n->kind == NodeKind::Abs ? "abs"
                                                 : "sign";
      out += f;
      out += '(';
      print_node(n->a.get(), fam, out);
      out += ')';
      return;
    }
    case NodeKind::Add:
      print_wrapped(n->a.get(), fam, 1, out);
      out += '+';
      print_wrapped(n->b.get(), fam, 2, out);
      return;
    case NodeKind::Sub:
      print_wrapped(n->a.get(), fam, 1, out);
      out += '-';
      print_wrapped(n->b.get(), fam, 2, out);
      return;
    case NodeKind::Mul:
      print_wrapped(n->a.get(), fam, 2, out);
      out += '*';
      print_wrapped(n->b.get(), fam, 3, out);
      return;
    case NodeKind::Div:
      print_wrapped(n->a.get(), fam, 2, out);
      out += '/';
      print_wrapped(n->b.get(), fam, 3, out);
      return;
    case NodeKind::Pow:
      print_atom(n->a.get(), fam, out);
      out += '^';
      print_atom(n->b.get(), fam, out);
      return;
  }
}

std::string subtree_str(const ExprNode* n) {
  std::string s;
  print_node(n, Families{}, s);
  return s;
}

}  // namespace

std::string Expr::str(const Families& fam) const {
  std::string out;
  print_node(node_.get(), fam, out);
  return out;
}

int Expr::max_coord_index() const {
  int m = 0;
  struct Walk {
    static void go(const ExprNode* n, int& m) {
      if (!n) return;
      if (n->kind == NodeKind::CoordQ || n->kind == NodeKind::CoordV)
        m = std::max(m, n->index);
      go(n->a.get(), m);
      go(n->b.get(), m);
    }
  };
  Walk::go(node_.get(), m);
  return m;
}

void Expr::collect_params(std::vector<std::string>& out) const {
  struct Walk {
    static void go(const ExprNode* n, std::vector<std::string>& out) {
      if (!n) return;
      if (n->kind == NodeKind::Parameter &&
          std::find(out.begin(), out.end(), n->name) == out.end())
        out.push_back(n->name);
      go(n->a.get(), out);
      go(n->b.get(), out);
    }
  };
  Walk::go(node_.get(), out);
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Lexer {
  std::string_view text;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  bool eat(char c) {
    if (peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }
};

struct Parser {
  Lexer lex;
  const ParseOptions* opts;

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, lex.pos); }

  bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  std::string read_ident() {
    lex.skip_ws();
    size_t start = lex.pos;
    while (lex.pos < lex.text.size() && ident_char(lex.text[lex.pos])) ++lex.pos;
    return std::string(lex.text.substr(start, lex.pos - start));
  }

  double read_number() {
    lex.skip_ws();
    size_t start = lex.pos;
    const char* begin = lex.text.data() + start;
    const char* end = lex.text.data() + lex.text.size();
    double value = 0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{}) fail("malformed number");
    // reject from_chars eating a leading sign; the grammar handles '-' itself
    lex.pos = static_cast<size_t>(res.ptr - lex.text.data());
    return value;
  }

  // Returns coordinate index if name is family+digits (q1, v12), else 0.
  int coord_suffix(const std::string& name, const std::string& family) {
    if (name.size() <= family.size() || name.compare(0, family.size(), family) != 0) return 0;
    int idx = 0;
    for (size_t i = family.size(); i < name.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(name[i]))) return 0;
      idx = idx * 10 + (name[i] - '0');
    }
    return idx;
  }

  Expr coord(NodeKind kind, int index, size_t at) {
    if (index < 1 || index > opts->dim)
      throw ParseError("coordinate index out of range 1.." + std::to_string(opts->dim), at);
    return kind == NodeKind::CoordQ ? Expr::coord_q(index) : Expr::coord_v(index);
  }

  Expr dot_product(const std::string& an, const std::string& bn, size_t at) {
    auto fam_kind = [&](const std::string& s) -> NodeKind {
      if (s == opts->families.first) return NodeKind::CoordQ;
      if (s == opts->families.second) return NodeKind::CoordV;
      throw ParseError("dot() arguments must be coordinate families '" + opts->families.first +
                           "' or '" + opts->families.second + "'",
                       at);
    };
    NodeKind ka = fam_kind(an), kb = fam_kind(bn);
    Expr sum = Expr::constant(0.0);
    for (int i = 1; i <= opts->dim; ++i) {
      Expr xa = ka == NodeKind::CoordQ ? Expr::coord_q(i) : Expr::coord_v(i);
      Expr xb = kb == NodeKind::CoordQ ? Expr::coord_q(i) : Expr::coord_v(i);
      sum = Expr::add(sum, Expr::mul(xa, xb));
    }
    return sum;
  }

  Expr atom() {
    lex.skip_ws();
    size_t at = lex.pos;
    char c = lex.peek();
    if (c == '(') {
      lex.eat('(');
      Expr e = expr();
      if (!lex.eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return Expr::constant(read_number());
    }
    if (!ident_start(c)) fail("expected a number, symbol, or '('");
    std::string name = read_ident();

    if (lex.peek() == '(') {
      lex.eat('(');
      if (name == "dot") {
        size_t a1 = lex.pos;
        std::string an = read_ident();
        if (!lex.eat(',')) fail("dot() expects two arguments");
        std::string bn = read_ident();
        if (!lex.eat(')')) fail("expected ')'");
        return dot_product(an, bn, a1);
      }
      Expr arg = expr();
      if (lex.peek() == ',') fail("function '" + name + "' takes one argument");
      if (!lex.eat(')')) fail("expected ')'");
      if (name == "sqrt") return Expr::sqrt(arg);
      if (name == "sin") return Expr::sin(arg);
      if (name == "cos") return Expr::cos(arg);
      if (name == "exp") return Expr::exp(arg);
      if (name == "ln") return Expr::ln(arg);
      if (name == "abs") return Expr::abs(arg);
      if (name == "sign") return Expr::sign(arg);
      throw ParseError("unknown function '" + name + "'", at);
    }

    if (name == opts->families.first || name == opts->families.second) {
      NodeKind kind = name == opts->families.first ? NodeKind::CoordQ : NodeKind::CoordV;
      if (lex.eat('[')) {
        lex.skip_ws();
        size_t ia = lex.pos;
        double d = read_number();
        if (!is_int(d)) throw ParseError("index must be an integer", ia);
        if (!lex.eat(']')) fail("expected ']'");
        return coord(kind, static_cast<int>(d), ia);
      }
      fail("bare '" + name + "' needs an index: " + name + "1 or " + name + "[1]");
    }
    if (int idx = coord_suffix(name, opts->families.first))
      return coord(NodeKind::CoordQ, idx, at);
    if (int idx = coord_suffix(name, opts->families.second))
      return coord(NodeKind::CoordV, idx, at);

    if (name == "norm" + opts->families.first)
      return Expr::sqrt(dot_product(opts->families.first, opts->families.first, at));
    if (name == "norm" + opts->families.second)
      return Expr::sqrt(dot_product(opts->families.second, opts->families.second, at));

    if (std::find(opts->params.begin(), opts->params.end(), name) != opts->params.end())
      return Expr::parameter(name);
    throw ParseError("undeclared symbol '" + name + "'", at);
  }

  Expr factor() {
    if (lex.peek() == '-') {
      lex.eat('-');
      return Expr::neg(factor());
    }
    Expr base = atom();
    if (lex.peek() == '^') {
      lex.eat('^');
      Expr e = atom();
      return Expr::pow(base, e);
    }
    return base;
  }

  Expr term() {
    Expr e = factor();
    for (;;) {
      char c = lex.peek();
      if (c == '*') {
        lex.eat('*');
        e = Expr::mul(e, factor());
      } else if (c == '/') {
        lex.eat('/');
        e = Expr::div(e, factor());
      } else {
        return e;
      }
    }
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      char c = lex.peek();
      if (c == '+') {
        lex.eat('+');
        e = Expr::add(e, term());
      } else if (c == '-') {
        lex.eat('-');
        e = Expr::sub(e, term());
      } else {
        return e;
      }
    }
  }
};

}  // namespace

Expr parse_expression(std::string_view text, const ParseOptions& opts) {
  Parser p{Lexer{text}, &opts};
  Expr e = p.expr();
  p.lex.skip_ws();
  if (p.lex.pos != text.size()) throw ParseError("unexpected trailing input", p.lex.pos);
  return e;
}

// ---------------------------------------------------------------------------
// Tape

ExprTape::ExprTape(const std::vector<Expr>& roots, const std::map<std::string, double>& params) {
  std::unordered_map<const ExprNode*, std::int32_t> slot;
  // Post-order emit, deduplicating shared subtrees by node pointer.
  struct Item {
    const ExprNode* n;
    bool expand;
  };
  auto emit = [&](const ExprNode* root) -> std::int32_t {
    std::vector<Item> stack{{root, true}};
    std::int32_t last = -1;
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      auto found = slot.find(it.n);
      if (found != slot.end()) {
        last = found->second;
        continue;
      }
      if (it.expand) {
        stack.push_back({it.n, false});
        if (it.n->b) stack.push_back({it.n->b.get(), true});
        if (it.n->a) stack.push_back({it.n->a.get(), true});
        continue;
      }
      Op op;
      op.kind = it.n->kind;
      op.origin = it.n;
      switch (it.n->kind) {
        case NodeKind::Constant:
          op.value = it.n->value;
          break;
        case NodeKind::Parameter: {
          auto pit = params.find(it.n->name);
          if (pit == params.end())
            throw std::runtime_error("tape: unbound parameter '" + it.n->name + "'");
          op.kind = NodeKind::Constant;
          op.value = pit->second;
          break;
        }
        case NodeKind::CoordQ:
        case NodeKind::CoordV:
          op.index = it.n->index;
          break;
        default:
          op.a = slot.at(it.n->a.get());
          if (it.n->b) op.b = slot.at(it.n->b.get());
          break;
      }
      std::int32_t id = static_cast<std::int32_t>(ops_.size());
      ops_.push_back(op);
      slot.emplace(it.n, id);
      last = id;
    }
    return last;
  };
  for (const Expr& r : roots) roots_.push_back(emit(&r.node()));
}

void ExprTape::eval(const Eigen::VectorXd& q, const Eigen::VectorXd& v, double* out,
                    std::vector<double>& scratch) const {
  scratch.resize(ops_.size());
  double* s = scratch.data();
  for (size_t i = 0; i < ops_.size(); ++i) {
    const Op& op = ops_[i];
    switch (op.kind) {
      case NodeKind::Constant:
        s[i] = op.value;
        break;
      case NodeKind::CoordQ:
        s[i] = q[op.index - 1];
        break;
      case NodeKind::CoordV:
        s[i] = v[op.index - 1];
        break;
      case NodeKind::Neg:
        s[i] = -s[op.a];
        break;
      case NodeKind::Sqrt:
        if (s[op.a] < 0.0)
          throw EvalDomainError("sqrt of negative value", subtree_str(op.origin));
        s[i] = std::sqrt(s[op.a]);
        break;
      case NodeKind::Sin:
        s[i] = std::sin(s[op.a]);
        break;
      case NodeKind::Cos:
        s[i] = std::cos(s[op.a]);
        break;
      case NodeKind::Exp:
        s[i] = std::exp(s[op.a]);
        break;
      case NodeKind::Ln:
        if (s[op.a] <= 0.0)
          throw EvalDomainError("log of non-positive value", subtree_str(op.origin));
        s[i] = std::log(s[op.a]);
        break;
      case NodeKind::Abs:
        s[i] = std::abs(s[op.a]);
        break;
      case NodeKind::Sign:
        s[i] = s[op.a] > 0.0 ? 1.0 : (s[op.a] < 0.0 ? -1.0 : 0.0);
        break;
      case NodeKind::Add:
        s[i] = s[op.a] + s[op.b];
        break;
      case NodeKind::Sub:
        s[i] = s[op.a] - s[op.b];
        break;
      case NodeKind::Mul:
        s[i] = s[op.a] * s[op.b];
        break;
      case NodeKind::Div:
        if (s[op.b] == 0.0)
          throw EvalDomainError("division by zero", subtree_str(op.origin));
        s[i] = s[op.a] / s[op.b];
        break;
      case NodeKind::Pow: {
        double a = s[op.a], b = s[op.b];
        if (a < 0.0 && !is_int(b))
          throw EvalDomainError("negative base with non-integer exponent",
                                subtree_str(op.origin));
        if (a == 0.0 && b < 0.0)
          throw EvalDomainError("zero base with negative exponent", subtree_str(op.origin));
        s[i] = std::pow(a, b);
        break;
      }
      default:
        throw std::runtime_error("tape: malformed op");
    }
  }
  for (size_t r = 0; r < roots_.size(); ++r) out[r] = s[roots_[r]];
}

}  // namespace almreg
