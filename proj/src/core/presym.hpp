#pragma once

#include <Eigen/Dense>

#include "core/system.hpp"

namespace almreg {

struct TolConfig {
  double eps_rank = 1e-9;        // relative SVD rank threshold (x sigma_max)
  double eps_constraint = 1e-8;  // reduced-matrix / constraint-activity gate
  double fd_step = 1e-5;         // base finite-difference step, scaled by (1+|point|)
  double surface_tol = 1e-10;    // Gauss-Newton residual target
  int surface_max_iter = 100;
};

/// Pointwise kernel structure of the Lagrangian two-form.
///
/// Z rows span ker M orthonormally (ascending singular value, sign fixed so
/// the largest-magnitude component is positive). Chat row n is the unique
/// minimal-norm solution of M c = -F z_n restricted to range(M). P rows are
/// the (z | c) kernel vectors, G rows the vertical ones (0 | z). When the
/// reduced matrix Fbar = Z F Z^T is not ~0 the system is not almost regular
/// at the point: only the null combinations of Fbar give horizontal kernel
/// directions and P has Dbar < N0 rows.
struct KernelData {
  int D = 0;
  int N0 = 0;
  int Dbar = 0;
  double sigma_max = 0.0;
  bool almost_regular = true;
  double fbar_max = 0.0;

  Eigen::MatrixXd Z;       // N0 x D
  Eigen::MatrixXd Chat;    // N0 x D
  Eigen::MatrixXd Fbar;    // N0 x N0
  Eigen::MatrixXd P;       // Dbar x 2D
  Eigen::MatrixXd G;       // N0 x 2D
  Eigen::MatrixXd ThetaQ;  // N0 x D (dual one-form coefficients; equals Z)
  Eigen::MatrixXd PkerM;   // D x D orthogonal projector onto ker M

  int dim_ker_omega() const { return N0 + Dbar; }
};

KernelData kernel_basis(const Tableau& tab, const TolConfig& tol = {});

/// Matrix of the lowering map X -> i_X Omega_L on (dq, dv) components:
///   [[-F, -M], [M, 0]]
/// Antisymmetric; its kernel is ker Omega_L.
Eigen::MatrixXd omega_matrix(const Tableau& tab);

/// Numeric rank of omega_matrix at the kernel tolerance.
int omega_rank(const Tableau& tab, const TolConfig& tol = {});

/// P_ker(M) = Z^T Z without exposing the gauge-dependent basis.
Eigen::MatrixXd projector_kerM(const Tableau& tab, const TolConfig& tol = {});

/// Minimal-norm least-squares solve restricted to range(M):
/// returns x with M x ~ rhs and PkerM x = 0.
Eigen::VectorXd solve_in_rangeM(const Tableau& tab, const Eigen::VectorXd& rhs,
                                const TolConfig& tol = {});

struct GeneratorCheckPoint {
  double res_kernel;   // |M rho|
  double res_evolution;  // |F rho + M rhodot|
  bool pass;
};

struct GeneratorCheck {
  std::vector<GeneratorCheckPoint> points;
  bool pass = true;
};

/// Checks the generalized-symmetry generator conditions rho in ker M and
/// F rho + M rhodot = 0 at each point (threshold 1e-8).
GeneratorCheck symmetry_generator_check(const LagrangianSystem& sys,
                                        const std::vector<Expr>& rho,
                                        const std::vector<Expr>& rhodot,
                                        const std::vector<Bindings>& points);

}  // namespace almreg
