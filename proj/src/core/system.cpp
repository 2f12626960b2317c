#include "core/system.hpp"

#include <stdexcept>

namespace almreg {

std::map<std::string, double> LagrangianSystem::param_map() const {
  return {params_.begin(), params_.end()};
}

double LagrangianSystem::param(const std::string& name) const {
  for (const auto& [k, v] : params_)
    if (k == name) return v;
  throw std::runtime_error("unknown parameter '" + name + "'");
}

Bindings LagrangianSystem::bindings(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  Bindings b;
  b.q = q;
  b.v = v;
  b.params = param_map();
  return b;
}

LagrangianSystem build_system(Expr L, int dim,
                              std::vector<std::pair<std::string, double>> params,
                              std::string name) {
  if (dim < 1) throw std::runtime_error("system dimension must be >= 1");
  if (L.max_coord_index() > dim)
    throw std::runtime_error("Lagrangian references a coordinate beyond dim");
  std::vector<std::string> used;
  L.collect_params(used);
  for (const auto& u : used) {
    bool found = false;
    for (const auto& [k, v] : params) found = found || k == u;
    if (!found) throw std::runtime_error("Lagrangian references undeclared parameter '" + u + "'");
  }

  LagrangianSystem sys;
  sys.D_ = dim;
  sys.name_ = std::move(name);
  sys.params_ = std::move(params);
  sys.L_ = L;

  const int D = dim;
  sys.dLdv_.reserve(D);
  for (int a = 1; a <= D; ++a) sys.dLdv_.push_back(L.derivative(Var::v(a)));

  // E = sum_b v^b dL/dv^b - L
  Expr E = Expr::neg(L);
  for (int b = 1; b <= D; ++b)
    E = Expr::add(E, Expr::mul(Expr::coord_v(b), sys.dLdv_[b - 1]));
  sys.E_ = E;

  sys.M_.assign(D, std::vector<Expr>(D));
  sys.N_.assign(D, std::vector<Expr>(D));
  sys.F_.assign(D, std::vector<Expr>(D));
  for (int a = 0; a < D; ++a) {
    for (int b = 0; b < D; ++b) {
      sys.M_[a][b] = sys.dLdv_[a].derivative(Var::v(b + 1));
      sys.N_[a][b] = sys.dLdv_[a].derivative(Var::q(b + 1));
    }
  }
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b) sys.F_[a][b] = Expr::sub(sys.N_[a][b], sys.N_[b][a]);

  sys.dEdq_.reserve(D);
  sys.dEdv_.reserve(D);
  for (int a = 1; a <= D; ++a) {
    sys.dEdq_.push_back(E.derivative(Var::q(a)));
    sys.dEdv_.push_back(E.derivative(Var::v(a)));
  }

  // One tape over the shared DAG of every tableau entry.
  std::vector<Expr> roots;
  sys.r_E_ = 0;
  roots.push_back(sys.E_);
  sys.r_dLdv_ = static_cast<int>(roots.size());
  for (const auto& e : sys.dLdv_) roots.push_back(e);
  sys.r_dEdq_ = static_cast<int>(roots.size());
  for (const auto& e : sys.dEdq_) roots.push_back(e);
  sys.r_dEdv_ = static_cast<int>(roots.size());
  for (const auto& e : sys.dEdv_) roots.push_back(e);
  sys.r_M_ = static_cast<int>(roots.size());
  for (const auto& row : sys.M_)
    for (const auto& e : row) roots.push_back(e);
  sys.r_F_ = static_cast<int>(roots.size());
  for (const auto& row : sys.F_)
    for (const auto& e : row) roots.push_back(e);
  sys.r_N_ = static_cast<int>(roots.size());
  for (const auto& row : sys.N_)
    for (const auto& e : row) roots.push_back(e);

  sys.tape_ = std::make_shared<const ExprTape>(roots, sys.param_map());
  return sys;
}

Tableau LagrangianSystem::tableau(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  if (q.size() != D_ || v.size() != D_)
    throw std::runtime_error("tableau: point dimension mismatch");
  const int D = D_;
  thread_local std::vector<double> scratch;
  std::vector<double> out(tape_->n_roots());
  tape_->eval(q, v, out.data(), scratch);

  Tableau t;
  t.q = q;
  t.v = v;
  t.E = out[r_E_];
  t.p = Eigen::VectorXd(D);
  t.dEdq = Eigen::VectorXd(D);
  t.dEdv = Eigen::VectorXd(D);
  for (int a = 0; a < D; ++a) {
    t.p[a] = out[r_dLdv_ + a];
    t.dEdq[a] = out[r_dEdq_ + a];
    t.dEdv[a] = out[r_dEdv_ + a];
  }
  t.M = Eigen::MatrixXd(D, D);
  t.F = Eigen::MatrixXd(D, D);
  t.N = Eigen::MatrixXd(D, D);
  for (int a = 0; a < D; ++a) {
    for (int b = 0; b < D; ++b) {
      t.M(a, b) = out[r_M_ + a * D + b];
      t.F(a, b) = out[r_F_ + a * D + b];
      t.N(a, b) = out[r_N_ + a * D + b];
    }
  }
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b)
      if (!std::isfinite(t.M(a, b)) || !std::isfinite(t.F(a, b)) || !std::isfinite(t.N(a, b)))
        throw EvalDomainError("non-finite tableau entry", "M/F/N");
  return t;
}

}  // namespace almreg
