#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace almreg {

enum class NodeKind : std::uint8_t {
  Constant,
  Parameter,
  CoordQ,
  CoordV,
  Neg,
  Sqrt,
  Sin,
  Cos,
  Exp,
  Ln,
  Abs,
  Sign,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  NodeKind kind;
  double value = 0.0;  // Constant
  int index = 0;       // CoordQ / CoordV, 1-based
  std::string name;    // Parameter
  ExprPtr a, b;
};

/// A point in velocity phase space plus parameter values.
struct Bindings {
  Eigen::VectorXd q, v;
  std::map<std::string, double> params;
};

/// Identifies a symbol to differentiate with respect to.
struct Var {
  NodeKind kind = NodeKind::CoordQ;  // CoordQ, CoordV or Parameter
  int index = 0;
  std::string name;

  static Var q(int i) { return {NodeKind::CoordQ, i, {}}; }
  static Var v(int i) { return {NodeKind::CoordV, i, {}}; }
  static Var param(std::string n) { return {NodeKind::Parameter, 0, std::move(n)}; }
};

class EvalDomainError : public std::runtime_error {
 public:
  EvalDomainError(const std::string& what, std::string subtree_str)
      : std::runtime_error(what + " in subtree: " + subtree_str),
        subtree(std::move(subtree_str)) {}
  std::string subtree;
};

/// Names used when printing/parsing the two coordinate families.
/// Defaults to (q, v); the Hamiltonian side uses (q, p).
struct Families {
  std::string first = "q";
  std::string second = "v";
};

/// Immutable expression tree with value semantics. Construction goes
/// through the static factories, which apply local simplification rules
/// (constant folding, 0/1 identities, x-x -> 0).
class Expr {
 public:
  Expr() = default;  // empty; only valid as a placeholder

  static Expr constant(double c);
  static Expr parameter(std::string name);
  static Expr coord_q(int index);
  static Expr coord_v(int index);

  static Expr add(const Expr& x, const Expr& y);
  static Expr sub(const Expr& x, const Expr& y);
  static Expr mul(const Expr& x, const Expr& y);
  static Expr div(const Expr& x, const Expr& y);
  static Expr pow(const Expr& x, const Expr& y);
  static Expr neg(const Expr& x);
  static Expr sqrt(const Expr& x);
  static Expr sin(const Expr& x);
  static Expr cos(const Expr& x);
  static Expr exp(const Expr& x);
  static Expr ln(const Expr& x);
  static Expr abs(const Expr& x);
  static Expr sign(const Expr& x);

  bool empty() const { return !node_; }
  const ExprNode& node() const { return *node_; }
  const ExprPtr& ptr() const { return node_; }
  NodeKind kind() const { return node_->kind; }

  bool is_constant() const { return node_ && node_->kind == NodeKind::Constant; }
  double constant_value() const { return node_->value; }

  /// Structural equality (same shape, same symbols, same constants).
  bool same_as(const Expr& other) const;

  /// Exact partial derivative, constant-folded.
  Expr derivative(const Var& wrt) const;

  /// Evaluate at a point. Throws EvalDomainError on sqrt of a negative,
  /// division by zero, log of a non-positive, or an invalid power.
  /// If min_margin is non-null it receives the smallest distance to a
  /// domain singularity encountered anywhere in the tree (used by the
  /// finite-difference property tests to skip near-singular points).
  double evaluate(const Bindings& b, double* min_margin = nullptr) const;

  /// Grammar-conforming text; print -> parse -> print is a fixed point.
  std::string str(const Families& fam = {}) const;

  /// Largest coordinate index appearing in the tree (0 if none).
  int max_coord_index() const;

  /// Collect parameter names appearing in the tree.
  void collect_params(std::vector<std::string>& out) const;

 private:
  explicit Expr(ExprPtr n) : node_(std::move(n)) {}
  static Expr make(ExprNode n);
  ExprPtr node_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, size_t at)
      : std::runtime_error(what + " (at byte " + std::to_string(at) + ")"),
        offset(at) {}
  size_t offset;
};

struct ParseOptions {
  int dim = 0;
  std::vector<std::string> params;
  Families families;
};

/// Recursive-descent parser for the expression grammar:
///   expr   := term (("+"|"-") term)*
///   term   := factor (("*"|"/") factor)*
///   factor := atom ("^" atom)? | "-" factor
///   atom   := NUMBER | IDENT | IDENT "[" INT "]"
///           | func "(" expr ("," expr)* ")" | "(" expr ")"
///   func   := sqrt|sin|cos|exp|ln|abs|sign|dot
/// Coordinates are written q1/v3 or q[1]/v[3]; dot(q,q), dot(q,v), dot(v,v)
/// expand to sums of products, and normq/normv to sqrt(dot(.,.)).
Expr parse_expression(std::string_view text, const ParseOptions& opts);

/// Compiled evaluation tape over the shared DAG of several expressions.
/// Parameters are folded to fixed values at compile time. Evaluation is
/// a linear sweep; reentrant (scratch is caller-provided).
class ExprTape {
 public:
  ExprTape(const std::vector<Expr>& roots, const std::map<std::string, double>& params);

  int n_roots() const { return static_cast<int>(roots_.size()); }
  size_t n_ops() const { return ops_.size(); }

  void eval(const Eigen::VectorXd& q, const Eigen::VectorXd& v, double* out,
            std::vector<double>& scratch) const;

 private:
  struct Op {
    NodeKind kind;
    std::int32_t a = -1, b = -1;
    double value = 0.0;
    std::int32_t index = 0;
    const ExprNode* origin = nullptr;
  };
  std::vector<Op> ops_;
  std::vector<std::int32_t> roots_;
};

}  // namespace almreg
