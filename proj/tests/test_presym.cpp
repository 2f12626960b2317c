#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "core/catalog.hpp"
#include "core/constraints.hpp"

using namespace almreg;

namespace {

double runif(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
}

LagrangianSystem catalog_system(const std::string& name) {
  const SystemSpec* spec = catalog_find(name);
  REQUIRE(spec != nullptr);
  return build_from_spec(*spec);
}

// deterministic perturbed samples near a spec's seed, rejecting domain errors
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

}  // namespace

TEST_CASE("free particle: empty kernel") {
  LagrangianSystem sys = catalog_system("free_particle");
  Eigen::VectorXd q(2), v(2);
  q << 0.3, -0.8;
  v << 1.1, 0.2;
  KernelData kd = kernel_basis(sys.tableau(q, v));
  CHECK(kd.N0 == 0);
  CHECK(kd.Dbar == 0);
  CHECK(kd.Z.rows() == 0);
  CHECK(kd.P.rows() == 0);
  CHECK(kd.PkerM.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("unit-direction particle: kernel row is the radial direction") {
  LagrangianSystem sys = catalog_system("ex1_conformal_symmetric");
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd q(2), v(2);
    q << runif(rng, 0.5, 1.5), runif(rng, -1.5, 1.5);
    v << runif(rng, -2, 2), runif(rng, -2, 2);
    Tableau tab = sys.tableau(q, v);
    KernelData kd = kernel_basis(tab);
    REQUIRE(kd.N0 == 1);
    Eigen::VectorXd qh = q.normalized();
    Eigen::VectorXd z = kd.Z.row(0).transpose();
    double s = z.dot(qh) > 0 ? 1.0 : -1.0;  // sign gauge
    CHECK((s * z - qh).lpNorm<Eigen::Infinity>() <= 1e-10);

    // Pi (Chat - v/|q|) = 0: the kernel vector matches (qhat, v/|q|) up to
    // the vertical gauge direction
    Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(2, 2) - qh * qh.transpose();
    Eigen::VectorXd chat = s * kd.Chat.row(0).transpose();
    CHECK((Pi * (chat - v / q.norm())).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("pair system: N0 = 2 and the reduced matrix vanishes") {
  const SystemSpec& spec = *catalog_find("ex2_conformal_pair");
  LagrangianSystem sys = build_from_spec(spec);
  for (const auto& pt : samples(sys, spec, 20, 12)) {
    KernelData kd = kernel_basis(sys.tableau(pt.q, pt.v));
    CHECK(kd.N0 == 2);
    CHECK(kd.fbar_max <= 1e-9);
    CHECK(kd.almost_regular);
  }
}

TEST_CASE("omega matrix: free particle block form") {
  LagrangianSystem sys = catalog_system("free_particle");
  Eigen::VectorXd q(2), v(2);
  q << 0.1, 0.2;
  v << 0.3, 0.4;
  Eigen::MatrixXd W = omega_matrix(sys.tableau(q, v));
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(4, 4);
  expect.topRightCorner(2, 2) = -Eigen::MatrixXd::Identity(2, 2);
  expect.bottomLeftCorner(2, 2) = Eigen::MatrixXd::Identity(2, 2);
  CHECK((W - expect).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("omega contraction with every kernel vector vanishes; rank = 2D - 2 N0") {
  for (const auto& spec : catalog()) {
    LagrangianSystem sys = build_from_spec(spec);
    for (const auto& pt : samples(sys, spec, 10, 13)) {
      Tableau tab = sys.tableau(pt.q, pt.v);
      KernelData kd = kernel_basis(tab);
      Eigen::MatrixXd W = omega_matrix(tab);
      CHECK((W + W.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      double wnorm = std::max(W.norm(), 1e-30);
      for (int n = 0; n < kd.Dbar; ++n)
        CHECK((W * kd.P.row(n).transpose()).norm() <= 1e-8 * wnorm);
      for (int n = 0; n < kd.N0; ++n)
        CHECK((W * kd.G.row(n).transpose()).norm() <= 1e-8 * wnorm);
      CHECK(omega_rank(tab) == 2 * spec.dim - 2 * kd.N0);
    }
  }
}

TEST_CASE("projector onto ker M: closed forms and idempotency") {
  LagrangianSystem free_sys = catalog_system("free_particle");
  Eigen::VectorXd q(2), v(2);
  q << 0.5, 0.6;
  v << 0.7, 0.8;
  CHECK(projector_kerM(free_sys.tableau(q, v)).cwiseAbs().maxCoeff() <= 1e-15);

  LagrangianSystem sys = catalog_system("ex1_mexican_hat");
  std::mt19937_64 rng(14);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd qq(2), vv(2);
    qq << runif(rng, 0.4, 2.0), runif(rng, -2.0, 2.0);
    vv << runif(rng, -2, 2), runif(rng, -2, 2);
    Eigen::MatrixXd P = projector_kerM(sys.tableau(qq, vv));
    Eigen::VectorXd qh = qq.normalized();
    CHECK((P - qh * qh.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((P * P - P).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("duality and basis independence of the constraint residual") {
  const SystemSpec& spec = *catalog_find("ex2_conformal_pair");
  LagrangianSystem sys = build_from_spec(spec);
  std::mt19937_64 rng(15);
  for (const auto& pt : samples(sys, spec, 10, 16)) {
    Tableau tab = sys.tableau(pt.q, pt.v);
    KernelData kd = kernel_basis(tab);
    CHECK((kd.ThetaQ * kd.Z.transpose() - Eigen::MatrixXd::Identity(kd.N0, kd.N0))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
    Eigen::VectorXd g = gamma1(kd, tab);
    // random rotation of the kernel rows leaves |gamma| unchanged
    double a = runif(rng, 0, 6.283185307179586);
    Eigen::MatrixXd R(2, 2);
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    Eigen::VectorXd g2 = (R * kd.Z) * (tab.dEdq + tab.F * tab.v);
    CHECK(g2.norm() == doctest::Approx(g.norm()).epsilon(1e-9));
  }
}

TEST_CASE("generator check: radial scaling passes, arbitrary directions fail") {
  // rho = q, rhodot = v on the conformally invariant systems
  for (const char* name : {"ex1_conformal_symmetric", "ex3_conformal_relativistic"}) {
    const SystemSpec& spec = *catalog_find(name);
    LagrangianSystem sys = build_from_spec(spec);
    std::vector<Expr> rho, rhodot;
    for (int a = 1; a <= spec.dim; ++a) {
      rho.push_back(Expr::coord_q(a));
      rhodot.push_back(Expr::coord_v(a));
    }
    GeneratorCheck gc = symmetry_generator_check(sys, rho, rhodot, samples(sys, spec, 10, 17));
    CHECK(gc.pass);
  }

  const SystemSpec& spec = *catalog_find("ex1_conformal_symmetric");
  LagrangianSystem sys = build_from_spec(spec);
  std::vector<Expr> rho = {Expr::constant(1.0), Expr::constant(0.0)};
  std::vector<Expr> rhodot = {Expr::constant(0.0), Expr::constant(0.0)};
  GeneratorCheck gc = symmetry_generator_check(sys, rho, rhodot, samples(sys, spec, 5, 18));
  CHECK_FALSE(gc.pass);
  CHECK(gc.points[0].res_kernel > 1e-8);
}

TEST_CASE("velocity-linear Lagrangian: nonzero reduced matrix is flagged") {
  // L = q2 v1 - q1 v2: M = 0 (N0 = 2) but Fbar != 0, so Dbar = 0
  ParseOptions po;
  po.dim = 2;
  Expr L = parse_expression("q2*v1 - q1*v2", po);
  LagrangianSystem sys = build_system(L, 2, {}, "velocity_linear");
  Eigen::VectorXd q(2), v(2);
  q << 0.4, 1.2;
  v << -0.3, 0.9;
  Tableau tab = sys.tableau(q, v);
  KernelData kd = kernel_basis(tab);
  CHECK(kd.N0 == 2);
  CHECK_FALSE(kd.almost_regular);
  CHECK(kd.Dbar == 0);
  CHECK(kd.dim_ker_omega() == 2);
  CHECK_THROWS_AS(barred_solvf(sys, kd, tab), NotAlmostRegularError);
}

TEST_CASE("dim ker Omega = N0 + Dbar = 2 N0 on the almost regular catalog") {
  for (const auto& spec : catalog()) {
    LagrangianSystem sys = build_from_spec(spec);
    for (const auto& pt : samples(sys, spec, 5, 19)) {
      Tableau tab = sys.tableau(pt.q, pt.v);
      KernelData kd = kernel_basis(tab);
      CHECK(kd.Dbar == kd.N0);
      CHECK(kd.dim_ker_omega() == 2 * kd.N0);
    }
  }
}
