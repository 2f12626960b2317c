#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core/expr.hpp"

namespace almreg {

/// Pointwise numeric image of the symbolic tableau.
struct Tableau {
  Eigen::VectorXd q, v;
  double E = 0.0;
  Eigen::MatrixXd M, F, N;      // D x D
  Eigen::VectorXd dEdq, dEdv;   // D
  Eigen::VectorXd p;            // dL/dv, the fiber-derivative image
};

/// A Lagrangian together with its full symbolic tableau:
///   E    = v^b dL/dv^b - L
///   M_ab = d2L/dv^a dv^b      (velocity Hessian)
///   N_ab = d2L/dv^a dq^b      (mixed Hessian)
///   F_ab = N_ab - N_ba        (force two-form coefficients)
/// Immutable after build; tableau evaluation is reentrant.
class LagrangianSystem {
 public:
  int dim() const { return D_; }
  const std::string& name() const { return name_; }
  const std::vector<std::pair<std::string, double>>& params() const { return params_; }
  std::map<std::string, double> param_map() const;
  double param(const std::string& name) const;

  const Expr& L() const { return L_; }
  const Expr& E() const { return E_; }
  const Expr& M(int a, int b) const { return M_[a][b]; }
  const Expr& F(int a, int b) const { return F_[a][b]; }
  const Expr& N(int a, int b) const { return N_[a][b]; }
  const Expr& dLdv(int a) const { return dLdv_[a]; }
  const Expr& dEdq(int a) const { return dEdq_[a]; }
  const Expr& dEdv(int a) const { return dEdv_[a]; }

  /// Evaluate the whole tableau at a phase point. Throws EvalDomainError.
  Tableau tableau(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;
  Tableau tableau(const Bindings& b) const { return tableau(b.q, b.v); }

  Bindings bindings(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;

  friend LagrangianSystem build_system(Expr L, int dim,
                                       std::vector<std::pair<std::string, double>> params,
                                       std::string name);

 private:
  int D_ = 0;
  std::string name_;
  std::vector<std::pair<std::string, double>> params_;
  Expr L_, E_;
  std::vector<Expr> dLdv_, dEdq_, dEdv_;
  std::vector<std::vector<Expr>> M_, F_, N_;
  std::shared_ptr<const ExprTape> tape_;
  // tape root layout
  int r_E_ = 0, r_dLdv_ = 0, r_dEdq_ = 0, r_dEdv_ = 0, r_M_ = 0, r_F_ = 0, r_N_ = 0;
};

/// Build the symbolic tableau. The Lagrangian must be autonomous: only
/// q, v and declared parameters may appear (the parser guarantees this;
/// build re-checks coordinate indices against dim).
LagrangianSystem build_system(Expr L, int dim,
                              std::vector<std::pair<std::string, double>> params,
                              std::string name = "system");

}  // namespace almreg
