#include "core/catalog.hpp"

namespace almreg {

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(xs.size());
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

std::vector<SystemSpec> make_catalog() {
  std::vector<SystemSpec> all;

  {
    SystemSpec s;
    s.name = "free_particle";
    s.blurb = "regular free particle, D=2; empty kernel, no constraints";
    s.dim = 2;
    s.params = {{"m", 1.0}};
    s.lagrangian = "m*dot(v,v)/2";
    s.primary_candidates = {};
    s.seed_q = vec({0.2, -0.4});
    s.seed_v = vec({1.0, 0.5});
    s.t0 = 0.0;
    s.t1 = 1.0;
    s.dt = 1e-3;
    all.push_back(s);
  }

  // Unit-direction particle: L = (m/2)(d qhat/dt)^2 - V(q).
  // Kinetic term (m/2) v.Pi(q).v / |q|^2 with Pi = I - qhat qhat^T.
  const std::string kin1 = "m*(dot(v,v) - dot(q,v)^2/dot(q,q))/(2*dot(q,q))";

  {
    SystemSpec s;
    s.name = "ex1_conformal_symmetric";
    s.blurb = "unit-direction particle, angular potential only; conformal gauge freedom";
    s.dim = 2;
    s.params = {{"m", 1.0}};
    s.lagrangian = kin1 + " - 0.3*q1*q2/dot(q,q)";
    s.primary_candidates = {"dot(q,p)"};
    s.seed_q = vec({1.1, 0.4});
    s.seed_v = vec({0.3, 0.9});
    s.t1 = 5.0;
    all.push_back(s);
  }

  {
    SystemSpec s;
    s.name = "ex1_mexican_hat";
    s.blurb = "unit-direction particle in a Mexican hat; dynamics pinned to |q|=sqrt(lambda/beta)";
    s.dim = 2;
    s.params = {{"m", 1.0}, {"lambda", 1.0}, {"beta", 1.0}};
    s.lagrangian = kin1 + " + lambda*dot(q,q)/2 - beta*dot(q,q)^2/4";
    s.primary_candidates = {"dot(q,p)"};
    s.seed_q = vec({2.0, 0.0});
    s.seed_v = vec({0.0, 1.0});
    s.t1 = 10.0;
    all.push_back(s);
  }

  {
    SystemSpec s;
    s.name = "ex1_asymmetric";
    s.blurb = "unit-direction particle with an asymmetric potential; multiplier fixed by the constraint cascade";
    s.dim = 2;
    s.params = {{"m", 1.0}};
    s.lagrangian = kin1 + " - (q1 + 0.3*q1*q2/dot(q,q))";
    s.primary_candidates = {"dot(q,p)"};
    s.seed_q = vec({0.4, -1.1});
    s.seed_v = vec({0.5, 0.8});
    s.t1 = 5.0;
    all.push_back(s);
  }

  {
    SystemSpec s;
    s.name = "ex2_conformal_pair";
    s.blurb = "two interacting unit-direction particles with a shared conformal symmetry, D=4";
    s.dim = 4;
    s.params = {{"m", 1.0}, {"lambda", 1.0}};
    // Per-particle norms spelled out: particle 1 = (q1,q2), particle 2 = (q3,q4).
    const std::string n1sq = "(q1^2+q2^2)";
    const std::string n2sq = "(q3^2+q4^2)";
    const std::string n1 = "sqrt" + n1sq;
    const std::string n2 = "sqrt" + n2sq;
    const std::string kin =
        "m*((v1^2+v2^2) - (q1*v1+q2*v2)^2/" + n1sq + ")/(2*" + n1sq + ")"
        " + m*((v3^2+v4^2) - (q3*v3+q4*v4)^2/" + n2sq + ")/(2*" + n2sq + ")";
    const std::string inter =
        "lambda/2*((q1*v3+q2*v4)/(" + n1 + "*" + n2 + ")"
        " - (q3*v1+q4*v2)/(" + n1 + "*" + n2 + ")"
        " - (q1*q3+q2*q4)/(" + n1 + "*" + n2 + ")"
        "*((q1*v1+q2*v2)/" + n1sq + " - (q3*v3+q4*v4)/" + n2sq + "))";
    s.lagrangian = kin + " + " + inter;
    s.primary_candidates = {
        "q1*p1+q2*p2+q3*p3+q4*p4",
        "q1*p1+q2*p2-q3*p3-q4*p4 + lambda*(q1*q3+q2*q4)/(" + n1 + "*" + n2 + ")"};
    s.seed_q = vec({1.0, 0.15, 0.25, 1.05});
    s.seed_v = vec({0.35, 0.6, 0.55, -0.3});
    s.t1 = 5.0;
    all.push_back(s);
  }

  {
    SystemSpec s;
    s.name = "ex3_conformal_relativistic";
    s.blurb = "conformally invariant reparametrization-invariant particle, D=3; fully constrained";
    s.dim = 3;
    s.params = {{"m", 1.0}, {"s", 1.0}};
    s.lagrangian = "s*m*sqrt(s*(dot(v,v) - dot(q,v)^2/dot(q,q)))/normq";
    s.primary_candidates = {"dot(q,p)", "dot(q,q)*dot(p,p) - s*m^2"};
    s.seed_q = vec({0.9, 0.35, 0.2});
    s.seed_v = vec({0.25, 0.8, -0.45});
    s.t1 = 5.0;
    all.push_back(s);
  }

  return all;
}

}  // namespace

const std::vector<SystemSpec>& catalog() {
  static const std::vector<SystemSpec> c = make_catalog();
  return c;
}

const SystemSpec* catalog_find(const std::string& name) {
  for (const auto& e : catalog())
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace almreg
