#pragma once

#include <random>

#include "core/constraints.hpp"

namespace almreg {

struct CanonicalPoint {
  Eigen::VectorXd q, p;
};

/// Fiber derivative: (q, v) -> (q, p = dL/dv).
CanonicalPoint legendre(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& v);

/// Solve p(q, v) = p_target for v by damped Newton (Jacobian is M). The
/// kernel components of the guess are preserved, so this is a section of
/// the preimage fiber through the guess.
Eigen::VectorXd fiber_solve(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                            const Eigen::VectorXd& p_target, const Eigen::VectorXd& v_guess,
                            const TolConfig& tol = {});

/// n points on the preimage fiber through (q, v), generated by flowing the
/// velocity along random combinations of the vertical kernel directions
/// with coefficients in [-0.5, 0.5]. Throws when the canonical image
/// drifts beyond 1e-7 (rank defect).
std::vector<Bindings> preimage_samples(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& v, int n, std::mt19937_64& rng,
                                       const TolConfig& tol = {});

struct ProjectabilityReport {
  bool projectable = false;
  double max_fiber_spread = 0.0;
  double max_kernel_derivative = 0.0;
};

/// A function on velocity phase space is projectable when it is constant
/// on preimage fibers and annihilated by the vertical kernel directions.
ProjectabilityReport is_projectable(const ScalarField& f, const LagrangianSystem& sys,
                                    const std::vector<Bindings>& points, std::mt19937_64& rng,
                                    const TolConfig& tol = {});

/// Pushforward of a vector field value through the fiber derivative:
/// (dq, dp) with dp_a = N_ab dq^b + M_ab dv^b. Checked componentwise for
/// constancy over the preimage fiber; throws with the spread when the
/// field is not projectable.
Eigen::VectorXd pushforward(const LagrangianSystem& sys, const VectorField& X,
                            const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                            std::mt19937_64& rng, const TolConfig& tol = {},
                            double* spread_out = nullptr, bool check = true);

struct PrimaryCandidateRow {
  std::string text;
  double max_value = 0.0;          // |candidate| over the image of the test points
  double max_pullback_grad = 0.0;  // |d(candidate o L)| over all phase directions
  bool pass_value = false;
  bool pass_pullback = false;
  bool pass() const { return pass_value && pass_pullback; }
};

struct PrimaryReport {
  std::vector<PrimaryCandidateRow> rows;
  int n_passing_independent = 0;
  int N0 = 0;
  bool complete = false;  // n_passing_independent == N0
};

/// Verifies primary Hamiltonian constraint candidates (expressions in q, p):
/// they must vanish on the image of the fiber derivative and their pullback
/// differential must vanish along every phase-space direction.
PrimaryReport verify_primary_constraints(const LagrangianSystem& sys,
                                         const std::vector<std::string>& candidates,
                                         const std::vector<Bindings>& points,
                                         const TolConfig& tol = {});

/// H_C at the canonical image: the energy at any preimage representative.
/// Asserts the fiber spread of E is below 1e-7.
double canonical_hamiltonian(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& v, std::mt19937_64& rng,
                             const TolConfig& tol = {}, double* spread_out = nullptr);

/// Total-Hamiltonian flow vector at the canonical image of (q, v):
/// pushforward of the SOELVF with ledger-determined plus free multipliers.
Eigen::VectorXd hamiltonian_flow(const LagrangianSystem& sys, const ConstraintLedger& ledger,
                                 const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                 const Eigen::VectorXd& u_free, std::mt19937_64& rng,
                                 const TolConfig& tol = {});

struct EquivalenceReport {
  double separation_sup = 0.0;
  std::vector<double> times;       // decimated
  std::vector<double> separation;  // matched to times
  double flow_stability_max = 0.0;   // |f . d(gamma0)/dt + gamma1| along the flow
  double probe_stability_max = 0.0;  // |<dH_C|P_n> - gamma1_n| at off-surface probes
  double form_fit_residual = 0.0;    // |pi_n - sum_j f_nj d gamma0_j| at probes
  std::vector<double> f_fits;        // sampled fitted factors
  bool diverged = false;
  double first_divergence_time = 0.0;
};

/// Integrates the Lagrangian SOELVF flow and the pushed-forward flow
/// directly in (q, p), reports their sup-norm separation, and checks the
/// stability relation tying the primary-constraint drift to the first-order
/// constraints.
EquivalenceReport equivalence_check(const LagrangianSystem& sys, const ConstraintLedger& ledger,
                                    const Eigen::VectorXd& q0, const Eigen::VectorXd& v0,
                                    double t0, double t1, double dt,
                                    const Eigen::VectorXd& u_free,
                                    const std::vector<std::string>& primary_candidates,
                                    double separation_tol, const TolConfig& tol = {});

}  // namespace almreg
