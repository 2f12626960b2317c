#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "core/catalog.hpp"
#include "core/presym.hpp"
#include "core/sysfile.hpp"

using namespace almreg;

namespace {

double runif(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
}

Eigen::VectorXd rvec(std::mt19937_64& rng, int n, double a, double b) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = runif(rng, a, b);
  return v;
}

LagrangianSystem catalog_system(const std::string& name) {
  const SystemSpec* spec = catalog_find(name);
  REQUIRE(spec != nullptr);
  return build_from_spec(*spec);
}

Eigen::MatrixXd proj_perp(const Eigen::VectorXd& q) {
  Eigen::VectorXd qh = q.normalized();
  return Eigen::MatrixXd::Identity(q.size(), q.size()) - qh * qh.transpose();
}

}  // namespace

TEST_CASE("free particle: identity Hessian, zero force form") {
  LagrangianSystem sys = catalog_system("free_particle");
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd q = rvec(rng, 2, -2, 2), v = rvec(rng, 2, -2, 2);
    Tableau tab = sys.tableau(q, v);
    CHECK((tab.M - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(tab.F.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(tab.dEdq.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(tab.E == doctest::Approx(0.5 * v.squaredNorm()).epsilon(1e-14));
  }
}

TEST_CASE("build rejects explicit time dependence and bad dimensions") {
  ParseOptions po;
  po.dim = 2;
  CHECK_THROWS_AS(parse_expression("q1*v1 + t", po), ParseError);
  // coordinate beyond dim is caught at parse; a hand-built tree at build
  Expr bad = Expr::mul(Expr::coord_q(3), Expr::coord_v(1));
  CHECK_THROWS(build_system(bad, 2, {}, "bad"));
}

TEST_CASE("unit-direction particle: energy matches the closed form") {
  ParseOptions po;
  po.dim = 2;
  po.params = {"m"};
  Expr L = parse_expression("m*(dot(v,v) - dot(q,v)^2/dot(q,q))/(2*dot(q,q))", po);
  LagrangianSystem sys = build_system(L, 2, {{"m", 1.0}}, "kinetic");
  std::mt19937_64 rng(3);
  int done = 0;
  while (done < 100) {
    Eigen::VectorXd q = rvec(rng, 2, -1.5, 1.5), v = rvec(rng, 2, -2, 2);
    if (q.norm() < 0.4) continue;
    ++done;
    double expect = 0.5 * (v.transpose() * proj_perp(q) * v)(0) / q.squaredNorm();
    CHECK(sys.tableau(q, v).E == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("pair system: energy matches the two-particle closed form") {
  LagrangianSystem sys = catalog_system("ex2_conformal_pair");
  std::mt19937_64 rng(4);
  int done = 0;
  while (done < 50) {
    Eigen::VectorXd q = rvec(rng, 4, -1.5, 1.5), v = rvec(rng, 4, -2, 2);
    if (q.head(2).norm() < 0.4 || q.tail(2).norm() < 0.4) continue;
    ++done;
    Eigen::VectorXd q1 = q.head(2), q2 = q.tail(2), v1 = v.head(2), v2 = v.tail(2);
    double expect = 0.5 * (v1.transpose() * proj_perp(q1) * v1)(0) / q1.squaredNorm() +
                    0.5 * (v2.transpose() * proj_perp(q2) * v2)(0) / q2.squaredNorm();
    CHECK(sys.tableau(q, v).E == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("tableau: Mexican hat point, M = Pi(q)/|q|^2") {
  LagrangianSystem sys = catalog_system("ex1_mexican_hat");
  Eigen::VectorXd q(2), v(2);
  q << 1, 0;
  v << 0, 1;
  Tableau tab = sys.tableau(q, v);
  Eigen::MatrixXd expect(2, 2);
  expect << 0, 0, 0, 1;
  CHECK((tab.M - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("reparametrization-invariant particle: M closed form, rank D-2") {
  LagrangianSystem sys = catalog_system("ex3_conformal_relativistic");
  std::mt19937_64 rng(5);
  const double m = 1.0;
  int done = 0;
  while (done < 25) {
    Eigen::VectorXd q = rvec(rng, 3, -1.5, 1.5), v = rvec(rng, 3, -2, 2);
    if (q.norm() < 0.5) continue;
    Eigen::MatrixXd Pi = proj_perp(q);
    double vPv = (v.transpose() * Pi * v)(0);
    if (vPv < 0.1) continue;
    ++done;
    Eigen::VectorXd u = (Pi * v) / std::sqrt(vPv);
    Eigen::MatrixXd Pu = Pi - u * u.transpose();
    Eigen::MatrixXd expect = (m / q.norm()) * Pu / std::sqrt(vPv);
    Tableau tab = sys.tableau(q, v);
    CHECK((tab.M - expect).cwiseAbs().maxCoeff() <= 1e-9);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(tab.M);
    int rank = 0;
    for (int i = 0; i < 3; ++i)
      if (svd.singularValues()[i] > 1e-9 * svd.singularValues()[0]) ++rank;
    CHECK(rank == 1);  // D - 2
  }
}

TEST_CASE("symbolic M, F, N agree with finite differences of L on every catalog system") {
  std::mt19937_64 rng(6);
  for (const auto& spec : catalog()) {
    LagrangianSystem sys = build_from_spec(spec);
    const int D = spec.dim;
    Bindings base = sys.bindings(spec.seed_q, spec.seed_v);
    auto Lat = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      Bindings b = base;
      b.q = q;
      b.v = v;
      return sys.L().evaluate(b);
    };
    int done = 0;
    for (int trial = 0; trial < 500 && done < 50; ++trial) {
      Eigen::VectorXd q = spec.seed_q, v = spec.seed_v;
      for (int i = 0; i < D; ++i) {
        q[i] += 0.25 * runif(rng, -1, 1) * (1 + std::abs(q[i]));
        v[i] += 0.35 * runif(rng, -1, 1) * (1 + std::abs(v[i]));
      }
      Tableau tab;
      try {
        tab = sys.tableau(q, v);
      } catch (const EvalDomainError&) {
        continue;
      }
      ++done;
      const double h = 1e-4;
      double worst = 0;
      for (int a = 0; a < D; ++a) {
        for (int b = 0; b < D; ++b) {
          double mfd;
          if (a == b) {
            Eigen::VectorXd vp = v, vm = v;
            vp[a] += h;
            vm[a] -= h;
            mfd = (Lat(q, vp) - 2 * Lat(q, v) + Lat(q, vm)) / (h * h);
          } else {
            Eigen::VectorXd vpp = v, vpm = v, vmp = v, vmm = v;
            vpp[a] += h;
            vpp[b] += h;
            vpm[a] += h;
            vpm[b] -= h;
            vmp[a] -= h;
            vmp[b] += h;
            vmm[a] -= h;
            vmm[b] -= h;
            mfd = (Lat(q, vpp) - Lat(q, vpm) - Lat(q, vmp) + Lat(q, vmm)) / (4 * h * h);
          }
          worst = std::max(worst,
                           std::abs(mfd - tab.M(a, b)) / std::max(1.0, std::abs(tab.M(a, b))));
          Eigen::VectorXd vp = v, vm = v, qp = q, qm = q;
          vp[a] += h;
          vm[a] -= h;
          qp[b] += h;
          qm[b] -= h;
          double nfd = (Lat(qp, vp) - Lat(qm, vp) - Lat(qp, vm) + Lat(qm, vm)) / (4 * h * h);
          worst = std::max(worst,
                           std::abs(nfd - tab.N(a, b)) / std::max(1.0, std::abs(tab.N(a, b))));
          double ffd = tab.N(a, b) - tab.N(b, a);
          worst = std::max(worst, std::abs(ffd - tab.F(a, b)));
        }
      }
      CHECK(worst <= 1e-5);
    }
    CHECK(done == 50);
  }
}

TEST_CASE("M symmetric, F antisymmetric on every catalog system") {
  std::mt19937_64 rng(7);
  for (const auto& spec : catalog()) {
    LagrangianSystem sys = build_from_spec(spec);
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd q = spec.seed_q, v = spec.seed_v;
      for (int i = 0; i < spec.dim; ++i) {
        q[i] += 0.2 * runif(rng, -1, 1);
        v[i] += 0.3 * runif(rng, -1, 1);
      }
      Tableau tab;
      try {
        tab = sys.tableau(q, v);
      } catch (const EvalDomainError&) {
        continue;
      }
      CHECK((tab.M - tab.M.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((tab.F + tab.F.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("energy pairs to zero with kernel vectors on the constraint surface") {
  LagrangianSystem sys = catalog_system("ex1_mexican_hat");
  TolConfig tol;
  Eigen::VectorXd q(2), v(2);
  q << 1, 0;
  v << 0, 0.7;  // on |q| = 1, the first-order surface
  Tableau tab = sys.tableau(q, v);
  KernelData kd = kernel_basis(tab, tol);
  REQUIRE(kd.Dbar == 1);
  for (int n = 0; n < kd.Dbar; ++n) {
    Eigen::VectorXd P = kd.P.row(n).transpose();
    double de = tab.dEdq.dot(P.head(2)) + tab.dEdv.dot(P.tail(2));
    CHECK(std::abs(de) <= 1e-8);
  }
  for (int n = 0; n < kd.N0; ++n) {
    Eigen::VectorXd G = kd.G.row(n).transpose();
    double de = tab.dEdv.dot(G.tail(2));
    CHECK(std::abs(de) <= 1e-8);
  }
}
