#pragma once

#include <functional>
#include <vector>

#include "core/presym.hpp"

namespace almreg {

/// Evaluator of a vector field on velocity phase space; returns the 2D
/// components (dq, dv) at (q, v).
using VectorField =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

class OffSurfaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotAlmostRegularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Second-order Lagrangian vector field (v, a): a is the minimal-norm
/// least-squares solution of M a = -dE/dq - F v. Requires the first-order
/// constraints to vanish at the point (else no solution exists).
Eigen::VectorXd solvf(const LagrangianSystem& sys, const KernelData& kd, const Tableau& tab,
                      const TolConfig& tol = {});

/// The kernel-reduced field: solvf minus its dual components along the
/// kernel vectors P. Horizontal part is exactly (I - PkerM) v; the result
/// is independent of the kernel basis gauge. Refuses when the reduced
/// matrix is nonzero (not almost regular at the point).
Eigen::VectorXd barred_solvf(const LagrangianSystem& sys, const KernelData& kd,
                             const Tableau& tab, const TolConfig& tol = {});

/// barred_solvf plus u^m P_(m) in the kernel data's own basis (u has
/// Dbar entries).
Eigen::VectorXd soelvf(const LagrangianSystem& sys, const KernelData& kd, const Tableau& tab,
                       const Eigen::VectorXd& u, const TolConfig& tol = {});

VectorField solvf_field(const LagrangianSystem& sys, const TolConfig& tol = {});
VectorField barred_solvf_field(const LagrangianSystem& sys, const TolConfig& tol = {});

/// Numerical Lie bracket [X, Y] = DY X - DX Y by central differences with
/// step h (defaults to 1e-5 (1+|point|)).
Eigen::VectorXd commutator(const VectorField& X, const VectorField& Y,
                           const Eigen::VectorXd& q, const Eigen::VectorXd& v, double h = 0.0);

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> qs, vs;
  std::vector<double> energies;
  std::vector<Eigen::VectorXd> residuals;  // constraint residual vector per step
  double dt = 0.0;
};

struct IntegrateOptions {
  double t0 = 0.0, t1 = 1.0, dt = 1e-3;
  bool project_each_step = false;
  // residual evaluator used for diagnostics and projection targets
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> residual;
  // projection step; returns false on failure
  std::function<bool(Eigen::VectorXd&, Eigen::VectorXd&)> projector;
  double divergence_norm = 1e12;
};

/// Classic fixed-step RK4 with optional per-step projection back onto the
/// constraint surface. Throws on divergence or domain errors.
Trajectory integrate(const LagrangianSystem& sys, const VectorField& field,
                     const Eigen::VectorXd& q0, const Eigen::VectorXd& v0,
                     const IntegrateOptions& opts);

}  // namespace almreg
