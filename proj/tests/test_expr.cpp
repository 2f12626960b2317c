#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "core/expr.hpp"

using namespace almreg;

namespace {

Expr parse2(const std::string& s, int dim = 2,
            std::vector<std::string> params = {}) {
  ParseOptions o;
  o.dim = dim;
  o.params = std::move(params);
  return parse_expression(s, o);
}

Bindings bind(std::initializer_list<double> q, std::initializer_list<double> v,
              std::map<std::string, double> params = {}) {
  Bindings b;
  b.q = Eigen::VectorXd(q.size());
  int i = 0;
  for (double x : q) b.q[i++] = x;
  b.v = Eigen::VectorXd(v.size());
  i = 0;
  for (double x : v) b.v[i++] = x;
  b.params = std::move(params);
  return b;
}

int count_kind(const ExprNode* n, NodeKind k) {
  if (!n) return 0;
  return (n->kind == k ? 1 : 0) + count_kind(n->a.get(), k) + count_kind(n->b.get(), k);
}

// Central finite difference of e along the given variable.
double fd_derivative(const Expr& e, const Bindings& b, const Var& var, double h = 1e-5) {
  Bindings lo = b, hi = b;
  if (var.kind == NodeKind::CoordQ) {
    hi.q[var.index - 1] += h;
    lo.q[var.index - 1] -= h;
  } else if (var.kind == NodeKind::CoordV) {
    hi.v[var.index - 1] += h;
    lo.v[var.index - 1] -= h;
  } else {
    hi.params[var.name] += h;
    lo.params[var.name] -= h;
  }
  return (e.evaluate(hi) - e.evaluate(lo)) / (2 * h);
}

// Random expression generator for the differentiation property test.
struct Gen {
  std::mt19937_64 rng;
  int dim;
  double uniform(double a, double b) {
    return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
  }
  int pick(int n) { return static_cast<int>(rng() % n); }

  Expr leaf() {
    switch (pick(4)) {
      case 0:
        return Expr::constant(uniform(-2.0, 2.0));
      case 1:
        return Expr::parameter("c");
      case 2:
        return Expr::coord_q(1 + pick(dim));
      default:
        return Expr::coord_v(1 + pick(dim));
    }
  }

  Expr tree(int depth) {
    if (depth == 0) return leaf();
    switch (pick(12)) {
      case 0:
        return Expr::add(tree(depth - 1), tree(depth - 1));
      case 1:
        return Expr::sub(tree(depth - 1), tree(depth - 1));
      case 2:
        return Expr::mul(tree(depth - 1), tree(depth - 1));
      case 3:
        return Expr::div(tree(depth - 1), tree(depth - 1));
      case 4:
        return Expr::pow(tree(depth - 1), Expr::constant(static_cast<double>(1 + pick(3))));
      case 5:
        return Expr::neg(tree(depth - 1));
      case 6:
        return Expr::sqrt(tree(depth - 1));
      case 7:
        return Expr::sin(tree(depth - 1));
      case 8:
        return Expr::cos(tree(depth - 1));
      case 9:
        return Expr::exp(tree(depth - 1));
      case 10:
        return Expr::ln(tree(depth - 1));
      default:
        return Expr::abs(tree(depth - 1));
    }
  }
};

}  // namespace

TEST_CASE("parse: direct grammar cases") {
  Expr e = parse2("v1^2/2 + v2^2/2");
  CHECK(count_kind(&e.node(), NodeKind::Pow) == 2);

  Expr f = parse2("q1*v2 - q2*v1");
  CHECK(f.kind() == NodeKind::Sub);
  Bindings b = bind({1.0, 2.0}, {3.0, 4.0});
  CHECK(f.evaluate(b) == doctest::Approx(1.0 * 4.0 - 2.0 * 3.0));

  Expr g = parse2("sqrt(v1^2+v2^2)/norm_q", 2, {"norm_q"});
  CHECK(count_kind(&g.node(), NodeKind::Sqrt) == 1);
  CHECK(count_kind(&g.node(), NodeKind::Parameter) == 1);
}

TEST_CASE("parse: macros, brackets, families") {
  Bindings b = bind({1.0, 2.0}, {3.0, 4.0});
  CHECK(parse2("dot(q,q)").evaluate(b) == doctest::Approx(5.0));
  CHECK(parse2("dot(q,v)").evaluate(b) == doctest::Approx(11.0));
  CHECK(parse2("dot(v,v)").evaluate(b) == doctest::Approx(25.0));
  CHECK(parse2("normq").evaluate(b) == doctest::Approx(std::sqrt(5.0)));
  CHECK(parse2("normv").evaluate(b) == doctest::Approx(5.0));
  CHECK(parse2("q[2]+v[1]").evaluate(b) == doctest::Approx(5.0));

  ParseOptions o;
  o.dim = 2;
  o.families = {"q", "p"};
  Expr c = parse_expression("dot(q,p)", o);
  CHECK(c.evaluate(b) == doctest::Approx(11.0));  // v slots hold p values
}

TEST_CASE("parse: errors carry byte offsets") {
  CHECK_THROWS_AS(parse2("q1 + + q2"), ParseError);
  try {
    parse2("q1 + undeclared");
  } catch (const ParseError& e) {
    CHECK(e.offset == 5);
  }
  CHECK_THROWS_AS(parse2("q3", 2), ParseError);          // index out of range
  CHECK_THROWS_AS(parse2("q1 + t"), ParseError);         // explicit time
  CHECK_THROWS_AS(parse2("frobnicate(q1)"), ParseError); // unknown function
  CHECK_THROWS_AS(parse2("q1)"), ParseError);            // trailing input
}

TEST_CASE("differentiate: simple rules") {
  Expr e = parse2("v1^2/2");
  Expr d = e.derivative(Var::v(1));
  std::mt19937_64 rng(1);
  auto u = [&] { return -2.0 + 4.0 * ((rng() >> 11) * 0x1.0p-53); };
  for (int k = 0; k < 20; ++k) {
    Bindings b = bind({u(), u()}, {u(), u()});
    CHECK(d.evaluate(b) == doctest::Approx(b.v[0]).epsilon(1e-14));
  }

  Expr f = parse2("q1*q2", 3);
  CHECK(f.derivative(Var::q(3)).same_as(Expr::constant(0.0)));
}

TEST_CASE("differentiate: chain rule matches independent evaluation") {
  Expr e = parse2("sin(q1*v1)");
  Expr d = e.derivative(Var::q(1));
  Bindings b = bind({0.7, 0.0}, {1.3, 0.0});
  CHECK(d.evaluate(b) == doctest::Approx(1.3 * std::cos(0.91)).epsilon(1e-12));
}

TEST_CASE("differentiate: finite-difference oracle on a catalog Lagrangian") {
  // kinetic part of the conformal particle, m=1
  Expr L = parse2("(dot(v,v) - dot(q,v)^2/dot(q,q))/(2*dot(q,q))");
  Expr dLdv1 = L.derivative(Var::v(1));
  std::mt19937_64 rng(7);
  auto u = [&] { return -2.0 + 4.0 * ((rng() >> 11) * 0x1.0p-53); };
  int tested = 0;
  for (int k = 0; k < 200 && tested < 100; ++k) {
    Bindings b = bind({u(), u()}, {u(), u()});
    if (b.q.norm() < 0.3) continue;
    double sym = dLdv1.evaluate(b);
    double fd = fd_derivative(L, b, Var::v(1));
    CHECK(std::abs(sym - fd) <= 1e-6 * std::max(1.0, std::abs(sym)));
    ++tested;
  }
  CHECK(tested == 100);
}

TEST_CASE("evaluate: basics and domain errors") {
  Bindings b = bind({2.0, 0.0}, {3.0, 0.0});
  CHECK(parse2("q1+v1").evaluate(b) == doctest::Approx(5.0));

  Bindings neg = bind({-1.0, 0.0}, {0.0, 0.0});
  CHECK_THROWS_AS(parse2("sqrt(q1)").evaluate(neg), EvalDomainError);
  try {
    parse2("sqrt(q1)").evaluate(neg);
  } catch (const EvalDomainError& e) {
    CHECK(e.subtree == "sqrt(q1)");
  }
  CHECK_THROWS_AS(parse2("q1/v1").evaluate(bind({1.0, 0.0}, {0.0, 0.0})), EvalDomainError);
  CHECK_THROWS_AS(parse2("ln(q1)").evaluate(neg), EvalDomainError);
}

TEST_CASE("property: derivative linearity") {
  Expr e1 = parse2("sin(q1)*v1");
  Expr e2 = parse2("q2^2 + exp(v2/2)");
  Expr combo = Expr::add(Expr::mul(Expr::constant(2.5), e1),
                         Expr::mul(Expr::constant(-1.25), e2));
  Expr dc = combo.derivative(Var::v(2));
  Expr expected = Expr::add(Expr::mul(Expr::constant(2.5), e1.derivative(Var::v(2))),
                            Expr::mul(Expr::constant(-1.25), e2.derivative(Var::v(2))));
  std::mt19937_64 rng(11);
  auto u = [&] { return -2.0 + 4.0 * ((rng() >> 11) * 0x1.0p-53); };
  for (int k = 0; k < 50; ++k) {
    Bindings b = bind({u(), u()}, {u(), u()});
    CHECK(dc.evaluate(b) == doctest::Approx(expected.evaluate(b)).epsilon(1e-12));
  }
}

TEST_CASE("property: 1000 random trees, symbolic vs finite difference") {
  Gen gen{std::mt19937_64(42), 2};
  int accepted = 0, trees = 0;
  while (accepted < 1000 && trees < 20000) {
    ++trees;
    Expr e = gen.tree(1 + gen.pick(5));  // depth <= 6 counting the leaf level
    Var vars[4] = {Var::q(1), Var::q(2), Var::v(1), Var::v(2)};
    const Var& var = vars[gen.pick(4)];
    Expr d;
    try {
      d = e.derivative(var);
    } catch (...) {
      continue;
    }
    Bindings b = bind({gen.uniform(-2, 2), gen.uniform(-2, 2)},
                      {gen.uniform(-2, 2), gen.uniform(-2, 2)}, {{"c", gen.uniform(-2, 2)}});
    double margin = 0, val, sym;
    try {
      val = e.evaluate(b, &margin);
      double m2 = 0;
      sym = d.evaluate(b, &m2);
      margin = std::min(margin, m2);
    } catch (const EvalDomainError&) {
      continue;
    }
    // skip points too close to a domain singularity or with huge values,
    // where a finite difference stencil is meaningless
    if (margin < 1e-3) continue;
    if (!std::isfinite(val) || !std::isfinite(sym)) continue;
    if (std::abs(val) > 1e6 || std::abs(sym) > 1e6) continue;
    double fd;
    try {
      fd = fd_derivative(e, b, var);
    } catch (const EvalDomainError&) {
      continue;
    }
    ++accepted;
    CHECK(std::abs(sym - fd) <= 1e-5 * std::max(1.0, std::max(std::abs(sym), std::abs(fd))));
  }
  CHECK(accepted == 1000);
}

TEST_CASE("print -> parse -> print is a fixed point") {
  std::vector<std::string> inputs = {
      "v1^2/2 + v2^2/2",
      "q1*v2 - q2*v1",
      "sqrt(v1^2+v2^2)/c",
      "-(q1+q2)*v1",
      "q1^(-2)",
      "1e-05*q1 + 2.5",
      "abs(q1) - sign(v2)",
      "(dot(v,v) - dot(q,v)^2/dot(q,q))/(2*dot(q,q))",
  };
  for (const auto& s : inputs) {
    Expr e = parse2(s, 2, {"c"});
    std::string p1 = e.str();
    Expr e2 = parse2(p1, 2, {"c"});
    CHECK(e.same_as(e2));
    CHECK(e2.str() == p1);
  }

  Gen gen{std::mt19937_64(3), 2};
  for (int k = 0; k < 300; ++k) {
    Expr e = gen.tree(1 + gen.pick(4));
    std::string p1 = e.str();
    Expr e2;
    try {
      e2 = parse2(p1, 2, {"c"});
    } catch (const ParseError&) {
      FAIL("printed form failed to parse: " << p1);
      continue;
    }
    CHECK(e.same_as(e2));
    CHECK(e2.str() == p1);
  }
}

TEST_CASE("tape evaluation agrees with tree evaluation") {
  Expr L = parse2("(dot(v,v) - dot(q,v)^2/dot(q,q))/(2*dot(q,q)) + c*q1*q2", 2, {"c"});
  std::vector<Expr> roots = {L, L.derivative(Var::v(1)), L.derivative(Var::q(2))};
  ExprTape tape(roots, {{"c", 0.7}});
  std::vector<double> scratch;
  std::mt19937_64 rng(5);
  auto u = [&] { return 0.5 + ((rng() >> 11) * 0x1.0p-53); };
  for (int k = 0; k < 20; ++k) {
    Bindings b = bind({u(), u()}, {u(), u()}, {{"c", 0.7}});
    double out[3];
    tape.eval(b.q, b.v, out, scratch);
    for (int r = 0; r < 3; ++r)
      CHECK(out[r] == doctest::Approx(roots[r].evaluate(b)).epsilon(1e-14));
  }
}
