#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/dynamics.hpp"

namespace almreg {

using ScalarField = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using ResidualField =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// First-order constraint values gamma_n = z_n . (dE/dq + F v) in the basis
/// carried by kd (gauge: kd's sign/ordering).
Eigen::VectorXd gamma1(const KernelData& kd, const Tableau& tab);

/// Constraint one-form beta = dE - i_X Omega as a 2D covector (dq | dv
/// components). Invariant under shifting X by kernel vectors.
Eigen::VectorXd beta_residual(const Tableau& tab, const Eigen::VectorXd& X);

/// Smooth first-order residual PkerM (dE/dq + F v); its norm equals the
/// norm of the gamma vector but needs no basis gauge.
Eigen::VectorXd first_order_residual(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& v, const TolConfig& tol = {});

struct SurfaceResult {
  Eigen::VectorXd q, v;
  bool ok = false;
  int iters = 0;
  double resnorm = 0.0;
};

/// Gauss-Newton with a pseudo-inverse step on a stacked residual.
SurfaceResult find_surface_point(const ResidualField& residual, const Eigen::VectorXd& q0,
                                 const Eigen::VectorXd& v0, const TolConfig& tol = {});

class NonConstantRankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LedgerStatus { TerminatedStable, TerminatedFull, Inconsistent };

const char* to_string(LedgerStatus s);

struct ConstraintFunction {
  int order = 1;
  std::string label;
  ScalarField eval;
  bool active = false;  // nonzero as a function near the working set
};

struct DeterminationRound {
  int order = 0;              // stabilized constraint order
  Eigen::MatrixXd basis;      // free directions entering the round, at points[0]
  std::vector<int> func_idx;  // ledger indices of the stabilized functions
  int rank = 0;               // multiplier combinations determined here
  Eigen::MatrixXd gamma_sample;  // Gamma at the first working point
};

/// Record of the iterative constraint analysis. The evaluator closures are
/// built over a fixed anchor basis Z0 and projector-smoothed kernel fields,
/// so every recorded function is smooth and kernel-gauge free.
struct ConstraintLedger {
  int D = 0, N0 = 0;
  Eigen::MatrixXd Z0;  // anchor kernel basis at the first working point
  std::vector<ConstraintFunction> funcs;
  std::vector<int> I_seq;  // independent-count sequence I_1..I_nF
  std::vector<DeterminationRound> rounds;
  int n_F = 1;
  LedgerStatus status = LedgerStatus::TerminatedStable;
  int n_determined = 0;
  int n_free = 0;
  Eigen::MatrixXd free_basis;  // undetermined directions at points[0] (reporting)
  std::vector<Bindings> points;

  /// Determined multiplier vector (free components zero), in the anchored
  /// kernel basis.
  ResidualField u_determined;
  /// Pointwise orthonormal basis of the undetermined directions (N0 x
  /// n_free); the split is position dependent.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> free_dirs;
  /// Active constraint residual vector.
  ResidualField residuals;
  /// SOELVF evaluator: reduced field + determined multipliers + free
  /// multipliers along the pointwise free directions (u_free may be empty).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      soelvf_eval;

  bool empty() const {
    for (const auto& f : funcs)
      if (f.active) return false;
    return true;
  }
  int active_count() const {
    int n = 0;
    for (const auto& f : funcs) n += f.active;
    return n;
  }
  VectorField field(const Eigen::VectorXd& u_free = {}) const {
    auto ev = soelvf_eval;
    Eigen::VectorXd uf = u_free;
    return [ev, uf](const Eigen::VectorXd& q, const Eigen::VectorXd& v) { return ev(q, v, uf); };
  }
};

/// Anchored smooth kernel machinery shared by the ledger evaluators: all
/// constructions go through the projector onto ker M, never through raw
/// basis vectors, so they are smooth wherever the rank is constant.
class AnchoredKernel {
 public:
  AnchoredKernel(const LagrangianSystem& sys, Eigen::MatrixXd Z0, TolConfig tol);

  struct PointData {
    Tableau tab;
    KernelData kd;
    Eigen::MatrixXd P;  // N0 x 2D anchored kernel fields
    Eigen::VectorXd gamma;  // N0 anchored first-order constraint values
    Eigen::VectorXd barred; // reduced second-order field
  };

  PointData at(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  Eigen::VectorXd gamma(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  Eigen::MatrixXd Pfields(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  Eigen::VectorXd Gfield(int n, const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  Eigen::VectorXd barred_field(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;

  /// Central finite difference of f along a phase-space direction.
  double dir_derivative(const ScalarField& f, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& v, const Eigen::VectorXd& dir) const;

  const LagrangianSystem& sys() const { return *sys_; }
  const TolConfig& tol() const { return tol_; }
  const Eigen::MatrixXd& Z0() const { return Z0_; }
  int N0() const { return static_cast<int>(Z0_.rows()); }

 private:
  const LagrangianSystem* sys_;
  Eigen::MatrixXd Z0_;
  TolConfig tol_;
};

/// The iterative constraint analysis. Projects the seed points onto the
/// first-order surface, then alternates rank analysis of Gamma^[k],
/// multiplier determination, and creation of order-(k+1) functions until
/// the independent count stabilizes or the phase space is exhausted.
ConstraintLedger run_constraint_algorithm(const LagrangianSystem& sys,
                                          const std::vector<Bindings>& seed_points,
                                          const TolConfig& tol = {});

}  // namespace almreg
