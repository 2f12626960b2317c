#include "core/presym.hpp"

#include <Eigen/SVD>

namespace almreg {

namespace {

// Deterministic sign: largest-magnitude component positive (ties: lowest index).
void canonicalize_row(Eigen::MatrixXd& m, int r) {
  int best = 0;
  for (int i = 1; i < m.cols(); ++i)
    if (std::abs(m(r, i)) > std::abs(m(r, best))) best = i;
  if (m(r, best) < 0) m.row(r) = -m.row(r);
}

}  // namespace

KernelData kernel_basis(const Tableau& tab, const TolConfig& tol) {
  const int D = static_cast<int>(tab.M.rows());
  KernelData kd;
  kd.D = D;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(tab.M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  kd.sigma_max = sv.size() ? sv[0] : 0.0;
  const double thr = tol.eps_rank * kd.sigma_max;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thr) ++rank;
  kd.N0 = D - rank;

  // Null rows ordered by ascending singular value: last V columns first.
  kd.Z = Eigen::MatrixXd(kd.N0, D);
  for (int n = 0; n < kd.N0; ++n) {
    kd.Z.row(n) = svd.matrixV().col(D - 1 - n).transpose();
    canonicalize_row(kd.Z, n);
  }
  kd.ThetaQ = kd.Z;
  kd.PkerM = kd.Z.transpose() * kd.Z;

  // Minimal-norm pseudoinverse apply restricted to range(M).
  auto pinv_apply = [&](const Eigen::VectorXd& rhs) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(D);
    for (int i = 0; i < rank; ++i)
      x += (svd.matrixU().col(i).dot(rhs) / sv[i]) * svd.matrixV().col(i);
    return x;
  };

  kd.Chat = Eigen::MatrixXd(kd.N0, D);
  for (int n = 0; n < kd.N0; ++n)
    kd.Chat.row(n) = pinv_apply(-tab.F * kd.Z.row(n).transpose()).transpose();

  kd.Fbar = kd.Z * tab.F * kd.Z.transpose();
  kd.fbar_max = kd.N0 ? kd.Fbar.cwiseAbs().maxCoeff() : 0.0;
  const double fscale = std::max(1.0, tab.F.cwiseAbs().maxCoeff());
  kd.almost_regular = kd.fbar_max <= tol.eps_constraint * fscale;

  Eigen::MatrixXd combos;  // rows: coefficient vectors of null(Fbar) in the Z basis
  if (kd.almost_regular) {
    kd.Dbar = kd.N0;
    combos = Eigen::MatrixXd::Identity(kd.N0, kd.N0);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> fsvd(kd.Fbar, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& fsv = fsvd.singularValues();
    double fthr = tol.eps_rank * std::max(fsv.size() ? fsv[0] : 0.0, 1e-300);
    int frank = 0;
    for (int i = 0; i < fsv.size(); ++i)
      if (fsv[i] > fthr) ++frank;
    kd.Dbar = kd.N0 - frank;
    combos = Eigen::MatrixXd(kd.Dbar, kd.N0);
    for (int j = 0; j < kd.Dbar; ++j) {
      combos.row(j) = fsvd.matrixV().col(kd.N0 - 1 - j).transpose();
      canonicalize_row(combos, j);
    }
  }

  kd.P = Eigen::MatrixXd::Zero(kd.Dbar, 2 * D);
  for (int j = 0; j < kd.Dbar; ++j) {
    Eigen::VectorXd cbar = (combos.row(j) * kd.Z).transpose();
    Eigen::VectorXd chat = pinv_apply(-tab.F * cbar);
    kd.P.row(j).head(D) = cbar.transpose();
    kd.P.row(j).tail(D) = chat.transpose();
  }

  kd.G = Eigen::MatrixXd::Zero(kd.N0, 2 * D);
  for (int n = 0; n < kd.N0; ++n) kd.G.row(n).tail(D) = kd.Z.row(n);

  return kd;
}

Eigen::MatrixXd omega_matrix(const Tableau& tab) {
  const int D = static_cast<int>(tab.M.rows());
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(2 * D, 2 * D);
  W.topLeftCorner(D, D) = -tab.F;
  W.topRightCorner(D, D) = -tab.M;
  W.bottomLeftCorner(D, D) = tab.M;
  return W;
}

int omega_rank(const Tableau& tab, const TolConfig& tol) {
  Eigen::MatrixXd W = omega_matrix(tab);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(W);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > tol.eps_rank * smax) ++rank;
  return rank;
}

Eigen::MatrixXd projector_kerM(const Tableau& tab, const TolConfig& tol) {
  return kernel_basis(tab, tol).PkerM;
}

Eigen::VectorXd solve_in_rangeM(const Tableau& tab, const Eigen::VectorXd& rhs,
                                const TolConfig& tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(tab.M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double thr = tol.eps_rank * (sv.size() ? sv[0] : 0.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thr)
      x += (svd.matrixU().col(i).dot(rhs) / sv[i]) * svd.matrixV().col(i);
  return x;
}

GeneratorCheck symmetry_generator_check(const LagrangianSystem& sys,
                                        const std::vector<Expr>& rho,
                                        const std::vector<Expr>& rhodot,
                                        const std::vector<Bindings>& points) {
  const int D = sys.dim();
  GeneratorCheck out;
  for (const auto& pt : points) {
    Tableau tab = sys.tableau(pt.q, pt.v);
    Eigen::VectorXd r(D), rd(D);
    for (int a = 0; a < D; ++a) {
      r[a] = rho[a].evaluate(pt);
      rd[a] = rhodot[a].evaluate(pt);
    }
    GeneratorCheckPoint gp;
    gp.res_kernel = (tab.M * r).norm();
    gp.res_evolution = (tab.F * r + tab.M * rd).norm();
    gp.pass = gp.res_kernel <= 1e-8 && gp.res_evolution <= 1e-8;
    out.pass = out.pass && gp.pass;
    out.points.push_back(gp);
  }
  return out;
}

}  // namespace almreg
