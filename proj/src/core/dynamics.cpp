#include "core/dynamics.hpp"

namespace almreg {

Eigen::VectorXd solvf(const LagrangianSystem& sys, const KernelData& kd, const Tableau& tab,
                      const TolConfig& tol) {
  const int D = sys.dim();
  Eigen::VectorXd rhs = -tab.dEdq - tab.F * tab.v;
  Eigen::VectorXd blocked = kd.PkerM * rhs;
  if (blocked.lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + rhs.norm()))
    throw OffSurfaceError("point off first-order surface: kernel residual " +
                          std::to_string(blocked.lpNorm<Eigen::Infinity>()));
  Eigen::VectorXd a = solve_in_rangeM(tab, rhs, tol);
  Eigen::VectorXd X(2 * D);
  X.head(D) = tab.v;
  X.tail(D) = a;
  return X;
}

Eigen::VectorXd barred_solvf(const LagrangianSystem& sys, const KernelData& kd,
                             const Tableau& tab, const TolConfig& tol) {
  if (!kd.almost_regular)
    throw NotAlmostRegularError(
        "reduced matrix of F is nonzero at this point (|Fbar| = " +
        std::to_string(kd.fbar_max) + "); the reduced-field construction requires Dbar = N0");
  const int D = sys.dim();
  Eigen::VectorXd X = solvf(sys, kd, tab, tol);
  if (kd.N0 == 0) return X;
  Eigen::VectorXd coef = kd.Z * tab.v;  // Theta^(n) components of the horizontal part
  X.head(D) -= kd.Z.transpose() * coef;
  X.tail(D) -= kd.Chat.transpose() * coef;
  return X;
}

Eigen::VectorXd soelvf(const LagrangianSystem& sys, const KernelData& kd, const Tableau& tab,
                       const Eigen::VectorXd& u, const TolConfig& tol) {
  if (u.size() != kd.Dbar)
    throw std::runtime_error("soelvf: multiplier vector length " + std::to_string(u.size()) +
                             " does not match kernel dimension " + std::to_string(kd.Dbar));
  Eigen::VectorXd X = barred_solvf(sys, kd, tab, tol);
  if (kd.Dbar) X += kd.P.transpose() * u;
  return X;
}

VectorField solvf_field(const LagrangianSystem& sys, const TolConfig& tol) {
  return [&sys, tol](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    Tableau tab = sys.tableau(q, v);
    KernelData kd = kernel_basis(tab, tol);
    return solvf(sys, kd, tab, tol);
  };
}

VectorField barred_solvf_field(const LagrangianSystem& sys, const TolConfig& tol) {
  return [&sys, tol](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    Tableau tab = sys.tableau(q, v);
    KernelData kd = kernel_basis(tab, tol);
    return barred_solvf(sys, kd, tab, tol);
  };
}

Eigen::VectorXd commutator(const VectorField& X, const VectorField& Y,
                           const Eigen::VectorXd& q, const Eigen::VectorXd& v, double h) {
  const int D = static_cast<int>(q.size());
  Eigen::VectorXd x0(2 * D);
  x0.head(D) = q;
  x0.tail(D) = v;
  if (h == 0.0) h = 1e-5 * (1.0 + x0.norm());

  auto eval = [D](const VectorField& f, const Eigen::VectorXd& x) {
    return f(x.head(D), x.tail(D));
  };
  Eigen::VectorXd Xv = eval(X, x0);
  Eigen::VectorXd Yv = eval(Y, x0);
  // DY.X and DX.Y by central differences along the field values
  Eigen::VectorXd dYX = (eval(Y, x0 + h * Xv) - eval(Y, x0 - h * Xv)) / (2 * h);
  Eigen::VectorXd dXY = (eval(X, x0 + h * Yv) - eval(X, x0 - h * Yv)) / (2 * h);
  return dYX - dXY;
}

Trajectory integrate(const LagrangianSystem& sys, const VectorField& field,
                     const Eigen::VectorXd& q0, const Eigen::VectorXd& v0,
                     const IntegrateOptions& opts) {
  const int D = static_cast<int>(q0.size());
  if (opts.dt <= 0) throw std::runtime_error("integrate: dt must be > 0");
  const int nsteps = static_cast<int>(std::llround((opts.t1 - opts.t0) / opts.dt));

  Eigen::VectorXd x(2 * D);
  x.head(D) = q0;
  x.tail(D) = v0;

  auto f = [&](const Eigen::VectorXd& s) { return field(s.head(D), s.tail(D)); };

  Trajectory traj;
  traj.dt = opts.dt;
  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.qs.push_back(x.head(D));
    traj.vs.push_back(x.tail(D));
    traj.energies.push_back(sys.tableau(x.head(D), x.tail(D)).E);
    if (opts.residual)
      traj.residuals.push_back(opts.residual(x.head(D), x.tail(D)));
    else
      traj.residuals.push_back(Eigen::VectorXd());
  };
  record(opts.t0);

  for (int i = 0; i < nsteps; ++i) {
    const double dt = opts.dt;
    Eigen::VectorXd k1 = f(x);
    Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
    Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
    Eigen::VectorXd k4 = f(x + dt * k3);
    x += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!x.allFinite() || x.norm() > opts.divergence_norm)
      throw std::runtime_error("integrate: trajectory diverged at t = " +
                               std::to_string(opts.t0 + (i + 1) * dt));
    if (opts.project_each_step && opts.projector) {
      // skip the solve when the state is already within tolerance
      bool need = true;
      if (opts.residual) {
        Eigen::VectorXd r = opts.residual(x.head(D), x.tail(D));
        need = r.size() && r.lpNorm<Eigen::Infinity>() > 1e-11;
      }
      if (need) {
        Eigen::VectorXd q = x.head(D), v = x.tail(D);
        if (opts.projector(q, v)) {
          x.head(D) = q;
          x.tail(D) = v;
        }
      }
    }
    record(opts.t0 + (i + 1) * dt);
  }
  return traj;
}

}  // namespace almreg
