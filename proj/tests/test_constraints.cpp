#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "core/catalog.hpp"
#include "core/constraints.hpp"
#include "core/dynamics.hpp"

using namespace almreg;

namespace {

double runif(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
}

LagrangianSystem catalog_system(const std::string& name) {
  return build_from_spec(*catalog_find(name));
}

std::vector<Bindings> samples(const LagrangianSystem& sys, const SystemSpec& spec, int n,
                              unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<Bindings> out;
  while (static_cast<int>(out.size()) < n) {
    Eigen::VectorXd q = spec.seed_q, v = spec.seed_v;
    for (int i = 0; i < spec.dim; ++i) {
      q[i] += 0.3 * runif(rng, -1, 1) * (1 + std::abs(q[i]));
      v[i] += 0.4 * runif(rng, -1, 1) * (1 + std::abs(v[i]));
    }
    try {
      sys.tableau(q, v);
      out.push_back(sys.bindings(q, v));
    } catch (const EvalDomainError&) {
    }
  }
  return out;
}

Eigen::MatrixXd proj_perp(const Eigen::VectorXd& q) {
  Eigen::VectorXd qh = q.normalized();
  return Eigen::MatrixXd::Identity(q.size(), q.size()) - qh * qh.transpose();
}

}  // namespace

TEST_CASE("gamma1: Mexican hat closed form at |q| = 2") {
  LagrangianSystem sys = catalog_system("ex1_mexican_hat");
  Eigen::VectorXd q(2), v(2);
  q << 2, 0;
  v << 0, 1;
  Tableau tab = sys.tableau(q, v);
  KernelData kd = kernel_basis(tab);
  Eigen::VectorXd g = gamma1(kd, tab);
  REQUIRE(g.size() == 1);
  // -lambda |q| + beta |q|^3 = 6, up to the orthonormal-basis sign gauge
  CHECK(std::abs(g[0]) == doctest::Approx(6.0).epsilon(1e-10));
}

TEST_CASE("gamma1: vanishes identically for the angular potential and the fully constrained system") {
  for (const char* name : {"ex1_conformal_symmetric", "ex3_conformal_relativistic"}) {
    const SystemSpec& spec = *catalog_find(name);
    LagrangianSystem sys = build_from_spec(spec);
    for (const auto& pt : samples(sys, spec, 100, 21)) {
      Tableau tab = sys.tableau(pt.q, pt.v);
      KernelData kd = kernel_basis(tab);
      CHECK(gamma1(kd, tab).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
  }
}

TEST_CASE("beta residual: vanishes on solutions, invariant under kernel shifts") {
  const SystemSpec& spec = *catalog_find("ex1_mexican_hat");
  LagrangianSystem sys = build_from_spec(spec);
  TolConfig tol;
  Eigen::VectorXd q(2), v(2);
  q << std::sqrt(0.5), std::sqrt(0.5);
  v << 0.4, -0.4;  // on |q| = 1
  Tableau tab = sys.tableau(q, v);
  KernelData kd = kernel_basis(tab, tol);
  Eigen::VectorXd X = soelvf(sys, kd, tab, Eigen::VectorXd::Zero(1), tol);
  Eigen::VectorXd b0 = beta_residual(tab, X);
  CHECK(b0.lpNorm<Eigen::Infinity>() <= 1e-8);
  Eigen::VectorXd b1 = beta_residual(tab, X + 0.7 * kd.P.row(0).transpose());
  CHECK((b1 - b0).lpNorm<Eigen::Infinity>() <= 1e-10);
  Eigen::VectorXd b2 = beta_residual(tab, X - 1.3 * kd.G.row(0).transpose());
  CHECK((b2 - b0).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("beta residual: norm equals |gamma| off the surface") {
  const SystemSpec& spec = *catalog_find("ex1_asymmetric");
  LagrangianSystem sys = build_from_spec(spec);
  TolConfig tol;
  for (const auto& pt : samples(sys, spec, 20, 22)) {
    Tableau tab = sys.tableau(pt.q, pt.v);
    KernelData kd = kernel_basis(tab, tol);
    // reduced field with the minimal-norm acceleration (smooth off-surface
    // extension; beta picks up exactly the gamma components)
    Eigen::VectorXd rhs = -tab.dEdq - tab.F * tab.v;
    Eigen::VectorXd a = solve_in_rangeM(tab, rhs, tol);
    Eigen::VectorXd X(4);
    X.head(2) = tab.v - kd.PkerM * tab.v;
    X.tail(2) = a - solve_in_rangeM(tab, -tab.F * (kd.PkerM * tab.v), tol);
    Eigen::VectorXd beta = beta_residual(tab, X);
    Eigen::VectorXd g = gamma1(kd, tab);
    CHECK(beta.norm() == doctest::Approx(g.norm()).epsilon(1e-8));
  }
}

TEST_CASE("find_surface_point: Mexican hat from |q| = 2 lands on |q| = 1") {
  LagrangianSystem sys = catalog_system("ex1_mexican_hat");
  TolConfig tol;
  auto res = [&sys, &tol](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    return first_order_residual(sys, q, v, tol);
  };
  Eigen::VectorXd q(2), v(2);
  q << 2, 0;
  v << 0, 1;
  SurfaceResult sr = find_surface_point(res, q, v, tol);
  REQUIRE(sr.ok);
  CHECK(std::abs(sr.q.norm() - 1.0) <= 1e-8);
}

TEST_CASE("find_surface_point: free particle returns the seed, constant constraint fails") {
  LagrangianSystem sys = catalog_system("free_particle");
  TolConfig tol;
  auto res = [&sys, &tol](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    return first_order_residual(sys, q, v, tol);
  };
  Eigen::VectorXd q(2), v(2);
  q << 0.3, 0.4;
  v << 1.0, -1.0;
  SurfaceResult sr = find_surface_point(res, q, v, tol);
  REQUIRE(sr.ok);
  CHECK((sr.q - q).norm() <= 1e-14);
  CHECK((sr.v - v).norm() <= 1e-14);

  // L = q1 v1 + q1 has gamma = -1 identically: no zero locus
  ParseOptions po;
  po.dim = 1;
  LagrangianSystem bad = build_system(parse_expression("q1*v1 + q1", po), 1, {}, "pathology");
  auto bres = [&bad, &tol](const Eigen::VectorXd& qq, const Eigen::VectorXd& vv) {
    return first_order_residual(bad, qq, vv, tol);
  };
  Eigen::VectorXd q1(1), v1(1);
  q1 << 0.5;
  v1 << 0.5;
  SurfaceResult bs = find_surface_point(bres, q1, v1, tol);
  CHECK_FALSE(bs.ok);

  std::vector<Bindings> pts = {bad.bindings(q1, v1)};
  ConstraintLedger led = run_constraint_algorithm(bad, pts, tol);
  CHECK(led.status == LedgerStatus::Inconsistent);
}

TEST_CASE("algorithm: stationarity of every active constraint along the determined flow") {
  // the real oracle: with the determined multipliers, d(gamma)/dt = 0 on
  // the final surface
  for (const char* name : {"ex1_mexican_hat", "ex1_asymmetric", "ex2_conformal_pair"}) {
    const SystemSpec& spec = *catalog_find(name);
    LagrangianSystem sys = build_from_spec(spec);
    TolConfig tol;
    ConstraintLedger led = run_constraint_algorithm(sys, samples(sys, spec, 12, 23), tol);
    REQUIRE(led.status == LedgerStatus::TerminatedStable);
    AnchoredKernel ak(sys, led.Z0, tol);
    int checked = 0;
    for (size_t i = 0; i < led.points.size() && checked < 5; ++i, ++checked) {
      const auto& pt = led.points[i];
      Eigen::VectorXd X = led.soelvf_eval(pt.q, pt.v, Eigen::VectorXd::Zero(led.n_free));
      for (const auto& f : led.funcs) {
        if (!f.active) continue;
        double drift = ak.dir_derivative(f.eval, pt.q, pt.v, X);
        CHECK(std::abs(drift) <= 1e-6);
      }
    }
  }
}

TEST_CASE("algorithm: Mexican hat determines u = 0") {
  const SystemSpec& spec = *catalog_find("ex1_mexican_hat");
  LagrangianSystem sys = build_from_spec(spec);
  ConstraintLedger led = run_constraint_algorithm(sys, samples(sys, spec, 10, 24), {});
  CHECK(led.n_F == 2);
  CHECK(led.n_determined == 1);
  CHECK(led.n_free == 0);
  for (const auto& pt : led.points)
    CHECK(led.u_determined(pt.q, pt.v).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("algorithm: asymmetric potential cascade determines the multiplier") {
  const SystemSpec& spec = *catalog_find("ex1_asymmetric");
  LagrangianSystem sys = build_from_spec(spec);
  ConstraintLedger led = run_constraint_algorithm(sys, samples(sys, spec, 12, 25), {});
  CHECK(led.status == LedgerStatus::TerminatedStable);
  CHECK(led.n_determined == 1);
  CHECK(led.n_free == 0);
  // orders 1..3 recorded, independent count grows 1 -> 2 -> 3 and stabilizes
  REQUIRE(led.I_seq.size() >= 3);
  CHECK(led.I_seq[0] == 1);
  CHECK(led.I_seq[1] == 2);
  CHECK(led.I_seq[2] == 3);
  // the final surface pins q to the lower pole at radius 0.3 with radial v
  for (const auto& pt : led.points) {
    CHECK(std::abs(pt.q[0]) <= 1e-7);
    CHECK(pt.q[1] == doctest::Approx(-0.3).epsilon(1e-6));
    CHECK(std::abs(pt.v[0]) <= 1e-6);
  }
}

TEST_CASE("algorithm: pair system matches the published multiplier") {
  const SystemSpec& spec = *catalog_find("ex2_conformal_pair");
  LagrangianSystem sys = build_from_spec(spec);
  TolConfig tol;
  ConstraintLedger led = run_constraint_algorithm(sys, samples(sys, spec, 16, 26), tol);
  REQUIRE(led.status == LedgerStatus::TerminatedStable);
  CHECK(led.N0 == 2);
  CHECK(led.n_F == 2);
  CHECK(led.n_determined == 1);
  CHECK(led.n_free == 1);
  // exactly one independent first-order constraint
  CHECK(led.I_seq[0] == 1);

  const double m = 1.0, lambda = 1.0;
  AnchoredKernel ak(sys, led.Z0, tol);
  int tested = 0;
  for (const auto& pt : led.points) {
    if (tested >= 20) break;
    ++tested;
    Eigen::VectorXd q1 = pt.q.head(2), q2 = pt.q.tail(2);
    Eigen::VectorXd v1 = pt.v.head(2), v2 = pt.v.tail(2);
    double n1 = q1.norm(), n2 = q2.norm();
    Eigen::VectorXd h1 = q1 / n1, h2 = q2 / n2;
    Eigen::MatrixXd P1 = proj_perp(q1), P2 = proj_perp(q2);
    double c = h1.dot(h2);
    double E = 0.5 * m * (v1.transpose() * P1 * v1)(0) / (n1 * n1) +
               0.5 * m * (v2.transpose() * P2 * v2)(0) / (n2 * n2);

    // drift of the first-order constraint along the reduced field
    double g2 = -2 * c * E / m + (2 / (n1 * n2)) * (v1.transpose() * P1 * P2 * v2)(0) -
                (lambda / m) * c *
                    ((v2.transpose() * P2 * h1)(0) - (v1.transpose() * P1 * h2)(0));
    double u_minus_expected = (m / (4 * lambda)) * g2 / (1 - c * c);

    // extract the coefficient along (q1 | -q2) from the determined part of
    // the field: it is pinned by the algorithm whatever basis is used
    Eigen::VectorXd ustar = led.u_determined(pt.q, pt.v);
    Eigen::MatrixXd P = ak.Pfields(pt.q, pt.v);
    Eigen::VectorXd dX = P.transpose() * ustar;
    Eigen::MatrixXd B(4, 2);
    B.col(0).head(2) = q1;
    B.col(0).tail(2) = -q2;
    B.col(1).head(2) = q1;
    B.col(1).tail(2) = q2;
    Eigen::VectorXd coef = B.colPivHouseholderQr().solve(dX.head(4));
    CHECK(std::abs(coef[0] - u_minus_expected) <=
          1e-6 * std::max(1.0, std::abs(u_minus_expected)));
  }
  CHECK(tested >= 10);
}

TEST_CASE("algorithm: fully constrained system has an empty ledger") {
  const SystemSpec& spec = *catalog_find("ex3_conformal_relativistic");
  LagrangianSystem sys = build_from_spec(spec);
  ConstraintLedger led = run_constraint_algorithm(sys, samples(sys, spec, 10, 27), {});
  CHECK(led.empty());
  CHECK(led.n_F == 1);
  CHECK(led.n_determined == 0);
  CHECK(led.n_free == 2);
  CHECK(led.I_seq == std::vector<int>{0});
}

TEST_CASE("gamma gauge invariance: vertical kernel directions annihilate the constraints") {
  for (const char* name : {"ex1_mexican_hat", "ex2_conformal_pair"}) {
    const SystemSpec& spec = *catalog_find(name);
    LagrangianSystem sys = build_from_spec(spec);
    TolConfig tol;
    ConstraintLedger led = run_constraint_algorithm(sys, samples(sys, spec, 10, 28), tol);
    AnchoredKernel ak(sys, led.Z0, tol);
    for (size_t i = 0; i < std::min<size_t>(4, led.points.size()); ++i) {
      const auto& pt = led.points[i];
      for (int n = 0; n < led.N0; ++n) {
        Eigen::VectorXd Gdir = ak.Gfield(n, pt.q, pt.v);
        for (const auto& f : led.funcs) {
          if (!f.active || f.order > 1) continue;
          CHECK(std::abs(ak.dir_derivative(f.eval, pt.q, pt.v, Gdir)) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("algorithm: counts are independent of the sampling (anchor) choice") {
  const SystemSpec& spec = *catalog_find("ex2_conformal_pair");
  LagrangianSystem sys = build_from_spec(spec);
  ConstraintLedger a = run_constraint_algorithm(sys, samples(sys, spec, 12, 30), {});
  ConstraintLedger b = run_constraint_algorithm(sys, samples(sys, spec, 12, 31), {});
  CHECK(a.n_F == b.n_F);
  CHECK(a.n_determined == b.n_determined);
  CHECK(a.I_seq == b.I_seq);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (size_t i = 0; i < a.rounds.size(); ++i) CHECK(a.rounds[i].rank == b.rounds[i].rank);
}
