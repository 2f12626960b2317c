#include "core/hamilton.hpp"

#include <Eigen/SVD>

namespace almreg {

namespace {

double runif(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
}

Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs, double reltol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double thr = reltol * (sv.size() ? sv[0] : 0.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(A.cols());
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thr) x += (svd.matrixU().col(i).dot(rhs) / sv[i]) * svd.matrixV().col(i);
  return x;
}

}  // namespace

CanonicalPoint legendre(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& v) {
  Tableau tab = sys.tableau(q, v);
  return {q, tab.p};
}

Eigen::VectorXd fiber_solve(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                            const Eigen::VectorXd& p_target, const Eigen::VectorXd& v_guess,
                            const TolConfig& tol) {
  Eigen::VectorXd v = v_guess;
  double target_tol = 1e-12 * (1.0 + p_target.lpNorm<Eigen::Infinity>());
  Tableau tab = sys.tableau(q, v);
  Eigen::VectorXd r = tab.p - p_target;
  for (int iter = 0; iter < 80; ++iter) {
    if (r.lpNorm<Eigen::Infinity>() <= target_tol) return v;
    Eigen::VectorXd step = pinv_solve(tab.M, r, tol.eps_rank);
    double lambda = 1.0;
    for (int bt = 0; bt < 30; ++bt) {
      Eigen::VectorXd vn = v - lambda * step;
      Tableau tn = sys.tableau(q, vn);
      Eigen::VectorXd rn = tn.p - p_target;
      if (rn.norm() < r.norm() || lambda < 1e-8) {
        v = vn;
        tab = tn;
        r = rn;
        break;
      }
      lambda /= 2;
    }
  }
  if (r.lpNorm<Eigen::Infinity>() <= 1e3 * target_tol) return v;
  throw std::runtime_error("fiber_solve: no preimage found (residual " +
                           std::to_string(r.lpNorm<Eigen::Infinity>()) + ")");
}

std::vector<Bindings> preimage_samples(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& v, int n, std::mt19937_64& rng,
                                       const TolConfig& tol) {
  const int D = sys.dim();
  Tableau tab0 = sys.tableau(q, v);
  KernelData kd0 = kernel_basis(tab0, tol);
  const int N0 = kd0.N0;
  Eigen::VectorXd p0 = tab0.p;

  std::vector<Bindings> out;
  out.reserve(n);
  if (N0 == 0) {
    for (int i = 0; i < n; ++i) out.push_back(sys.bindings(q, v));
    return out;
  }
  const Eigen::MatrixXd Z0 = kd0.Z;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd c(N0);
    for (int k = 0; k < N0; ++k) c[k] = runif(rng, -0.5, 0.5);
    // flow dv/deps = PkerM(u) (Z0^T c), eps in [0, 1], RK4
    Eigen::VectorXd w0 = Z0.transpose() * c;
    Eigen::VectorXd vv = v;
    auto fld = [&](const Eigen::VectorXd& vcur) -> Eigen::VectorXd {
      Tableau t = sys.tableau(q, vcur);
      KernelData kd = kernel_basis(t, tol);
      return kd.PkerM * w0;
    };
    const int steps = 8;
    const double h = 1.0 / steps;
    for (int s = 0; s < steps; ++s) {
      Eigen::VectorXd k1 = fld(vv);
      Eigen::VectorXd k2 = fld(vv + 0.5 * h * k1);
      Eigen::VectorXd k3 = fld(vv + 0.5 * h * k2);
      Eigen::VectorXd k4 = fld(vv + h * k3);
      vv += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    Eigen::VectorXd p = sys.tableau(q, vv).p;
    if ((p - p0).lpNorm<Eigen::Infinity>() > 1e-7 * (1.0 + p0.lpNorm<Eigen::Infinity>()))
      throw std::runtime_error("preimage flow left the fiber (momentum drift " +
                               std::to_string((p - p0).lpNorm<Eigen::Infinity>()) + ")");
    out.push_back(sys.bindings(q, vv));
  }
  return out;
}

ProjectabilityReport is_projectable(const ScalarField& f, const LagrangianSystem& sys,
                                    const std::vector<Bindings>& points, std::mt19937_64& rng,
                                    const TolConfig& tol) {
  const int D = sys.dim();
  ProjectabilityReport rep;
  for (const auto& pt : points) {
    std::vector<Bindings> fiber = preimage_samples(sys, pt.q, pt.v, 16, rng, tol);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : fiber) {
      double val = f(s.q, s.v);
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    rep.max_fiber_spread = std::max(rep.max_fiber_spread, hi - lo);

    Tableau tab = sys.tableau(pt.q, pt.v);
    KernelData kd = kernel_basis(tab, tol);
    double h = tol.fd_step * (1.0 + pt.v.norm());
    for (int n = 0; n < kd.N0; ++n) {
      Eigen::VectorXd z = kd.Z.row(n).transpose();
      double d = (f(pt.q, pt.v + h * z) - f(pt.q, pt.v - h * z)) / (2 * h);
      rep.max_kernel_derivative = std::max(rep.max_kernel_derivative, std::abs(d));
    }
  }
  rep.projectable = rep.max_fiber_spread <= 1e-6 && rep.max_kernel_derivative <= 1e-6;
  return rep;
}

Eigen::VectorXd pushforward(const LagrangianSystem& sys, const VectorField& X,
                            const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                            std::mt19937_64& rng, const TolConfig& tol, double* spread_out,
                            bool check) {
  const int D = sys.dim();
  auto push_at = [&](const Eigen::VectorXd& qq, const Eigen::VectorXd& vv) {
    Eigen::VectorXd Xu = X(qq, vv);
    Tableau tab = sys.tableau(qq, vv);
    Eigen::VectorXd out(2 * D);
    out.head(D) = Xu.head(D);
    out.tail(D) = tab.N * Xu.head(D) + tab.M * Xu.tail(D);
    return out;
  };
  Eigen::VectorXd center = push_at(q, v);
  double spread = 0.0;
  if (check || spread_out) {
    std::vector<Bindings> fiber = preimage_samples(sys, q, v, 6, rng, tol);
    for (const auto& s : fiber)
      spread = std::max(spread, (push_at(s.q, s.v) - center).lpNorm<Eigen::Infinity>());
    if (spread_out) *spread_out = spread;
    if (check && spread > 1e-6 * (1.0 + center.lpNorm<Eigen::Infinity>()))
      throw std::runtime_error("pushforward: field is not projectable (fiber spread " +
                               std::to_string(spread) + ")");
  }
  return center;
}

PrimaryReport verify_primary_constraints(const LagrangianSystem& sys,
                                         const std::vector<std::string>& candidates,
                                         const std::vector<Bindings>& points,
                                         const TolConfig& tol) {
  const int D = sys.dim();
  PrimaryReport rep;
  Tableau t0 = sys.tableau(points.at(0).q, points.at(0).v);
  rep.N0 = kernel_basis(t0, tol).N0;

  ParseOptions po;
  po.dim = D;
  for (const auto& [k, val] : sys.params()) po.params.push_back(k);
  po.families = {"q", "p"};

  double mscale = 1.0;
  for (const auto& pt : points) {
    CanonicalPoint cp = legendre(sys, pt.q, pt.v);
    mscale = std::max(mscale, cp.q.squaredNorm() + cp.p.squaredNorm());
  }

  std::vector<Eigen::VectorXd> grad_rows;

  for (const auto& text : candidates) {
    PrimaryCandidateRow row;
    row.text = text;
    Expr c = parse_expression(text, po);
    std::vector<Expr> cgrad;
    for (int a = 1; a <= D; ++a) cgrad.push_back(c.derivative(Var::q(a)));
    for (int a = 1; a <= D; ++a) cgrad.push_back(c.derivative(Var::v(a)));
    Bindings cb;
    cb.params = sys.param_map();
    for (const auto& pt : points) {
      CanonicalPoint cp = legendre(sys, pt.q, pt.v);
      cb.q = cp.q;
      cb.v = cp.p;  // second family slot holds p
      row.max_value = std::max(row.max_value, std::abs(c.evaluate(cb)));
      // pullback differential: d(c o L) along every phase direction
      Eigen::VectorXd x(2 * D);
      x.head(D) = pt.q;
      x.tail(D) = pt.v;
      for (int i = 0; i < 2 * D; ++i) {
        double h = tol.fd_step * (1.0 + std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        CanonicalPoint cpp = legendre(sys, xp.head(D), xp.tail(D));
        CanonicalPoint cpm = legendre(sys, xm.head(D), xm.tail(D));
        Bindings bp = cb, bm = cb;
        bp.q = cpp.q;
        bp.v = cpp.p;
        bm.q = cpm.q;
        bm.v = cpm.p;
        double d = (c.evaluate(bp) - c.evaluate(bm)) / (2 * h);
        row.max_pullback_grad = std::max(row.max_pullback_grad, std::abs(d));
      }
    }
    row.pass_value = row.max_value <= 1e-8 * mscale;
    row.pass_pullback = row.max_pullback_grad <= 1e-6 * mscale;
    if (row.pass()) {
      // gradient rows in (q, p) for the independence count
      for (const auto& pt : points) {
        CanonicalPoint cp = legendre(sys, pt.q, pt.v);
        cb.q = cp.q;
        cb.v = cp.p;
        Eigen::VectorXd g(2 * D);
        for (int i = 0; i < 2 * D; ++i) g[i] = cgrad[i].evaluate(cb);
        double n = g.norm();
        if (n > 1e-9) grad_rows.push_back(g / n);
      }
    }
    rep.rows.push_back(row);
  }
  if (!grad_rows.empty()) {
    Eigen::MatrixXd A(grad_rows.size(), 2 * D);
    for (size_t i = 0; i < grad_rows.size(); ++i) A.row(i) = grad_rows[i].transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    double smax = svd.singularValues()[0];
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-4 * smax) ++rep.n_passing_independent;
  }
  rep.complete = rep.n_passing_independent == rep.N0;
  return rep;
}

double canonical_hamiltonian(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& v, std::mt19937_64& rng,
                             const TolConfig& tol, double* spread_out) {
  double E0 = sys.tableau(q, v).E;
  std::vector<Bindings> fiber = preimage_samples(sys, q, v, 16, rng, tol);
  double spread = 0.0;
  for (const auto& s : fiber)
    spread = std::max(spread, std::abs(sys.tableau(s.q, s.v).E - E0));
  if (spread_out) *spread_out = spread;
  if (spread > 1e-7 * (1.0 + std::abs(E0)))
    throw std::runtime_error("canonical Hamiltonian is not single-valued on the fiber (spread " +
                             std::to_string(spread) + ")");
  return E0;
}

Eigen::VectorXd hamiltonian_flow(const LagrangianSystem& sys, const ConstraintLedger& ledger,
                                 const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                 const Eigen::VectorXd& u_free, std::mt19937_64& rng,
                                 const TolConfig& tol) {
  return pushforward(sys, ledger.field(u_free), q, v, rng, tol);
}

EquivalenceReport equivalence_check(const LagrangianSystem& sys, const ConstraintLedger& ledger,
                                    const Eigen::VectorXd& q0, const Eigen::VectorXd& v0,
                                    double t0, double t1, double dt,
                                    const Eigen::VectorXd& u_free,
                                    const std::vector<std::string>& primary_candidates,
                                    double separation_tol, const TolConfig& tol) {
  const int D = sys.dim();
  EquivalenceReport rep;
  VectorField lag_field = ledger.field(u_free);

  // (a) Lagrangian-side flow, mapped through the fiber derivative.
  IntegrateOptions iopts;
  iopts.t0 = t0;
  iopts.t1 = t1;
  iopts.dt = dt;
  Trajectory lag = integrate(sys, lag_field, q0, v0, iopts);

  // (b) direct flow in (q, p); the field is evaluated through a fiber
  // section warm-started from the previous step.
  const int nsteps = static_cast<int>(lag.times.size()) - 1;
  CanonicalPoint s0 = legendre(sys, q0, v0);
  Eigen::VectorXd s(2 * D);
  s.head(D) = s0.q;
  s.tail(D) = s0.p;
  Eigen::VectorXd vshadow = v0;

  auto ham_rhs = [&](const Eigen::VectorXd& state, Eigen::VectorXd& vware) {
    Eigen::VectorXd q = state.head(D), p = state.tail(D);
    Eigen::VectorXd vstar = fiber_solve(sys, q, p, vware, tol);
    vware = vstar;
    Eigen::VectorXd X = lag_field(q, vstar);
    Tableau tab = sys.tableau(q, vstar);
    Eigen::VectorXd out(2 * D);
    out.head(D) = X.head(D);
    out.tail(D) = tab.N * X.head(D) + tab.M * X.tail(D);
    return out;
  };

  std::vector<Eigen::VectorXd> ham_states;
  std::vector<Eigen::VectorXd> ham_shadows;
  ham_states.push_back(s);
  ham_shadows.push_back(vshadow);
  for (int i = 0; i < nsteps; ++i) {
    Eigen::VectorXd vw = vshadow;
    Eigen::VectorXd k1 = ham_rhs(s, vw);
    Eigen::VectorXd k2 = ham_rhs(s + 0.5 * dt * k1, vw);
    Eigen::VectorXd k3 = ham_rhs(s + 0.5 * dt * k2, vw);
    Eigen::VectorXd k4 = ham_rhs(s + dt * k3, vw);
    s += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    vshadow = fiber_solve(sys, s.head(D), s.tail(D), vw, tol);
    ham_states.push_back(s);
    ham_shadows.push_back(vshadow);
    if (!s.allFinite()) throw std::runtime_error("equivalence_check: Hamiltonian flow diverged");
  }

  // separation
  const int stride = std::max(1, nsteps / 200);
  for (size_t i = 0; i < lag.times.size(); ++i) {
    CanonicalPoint cp = legendre(sys, lag.qs[i], lag.vs[i]);
    Eigen::VectorXd li(2 * D);
    li.head(D) = cp.q;
    li.tail(D) = cp.p;
    double sep = (li - ham_states[i]).lpNorm<Eigen::Infinity>();
    if (sep > rep.separation_sup) rep.separation_sup = sep;
    if (!rep.diverged && sep > separation_tol) {
      rep.diverged = true;
      rep.first_divergence_time = lag.times[i];
    }
    if (i % stride == 0) {
      rep.times.push_back(lag.times[i]);
      rep.separation.push_back(sep);
    }
  }

  if (primary_candidates.empty() || ledger.N0 == 0) return rep;

  // (c) stability relation. Parse the candidates once.
  ParseOptions po;
  po.dim = D;
  for (const auto& [k, val] : sys.params()) po.params.push_back(k);
  po.families = {"q", "p"};
  std::vector<Expr> cands;
  for (const auto& text : primary_candidates) cands.push_back(parse_expression(text, po));
  const int nc = static_cast<int>(cands.size());
  std::vector<std::vector<Expr>> cgrad(nc);  // 2D gradient expressions per candidate
  for (int j = 0; j < nc; ++j) {
    for (int a = 1; a <= D; ++a) cgrad[j].push_back(cands[j].derivative(Var::q(a)));
    for (int a = 1; a <= D; ++a) cgrad[j].push_back(cands[j].derivative(Var::v(a)));
  }
  Bindings cb;
  cb.params = sys.param_map();
  auto cand_val = [&](int j, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
    cb.q = q;
    cb.v = p;
    return cands[j].evaluate(cb);
  };

  std::mt19937_64 rng(58417);
  AnchoredKernel ak(sys, ledger.Z0, tol);

  // candidate values along the Hamiltonian flow
  std::vector<Eigen::VectorXd> gvals(ham_states.size());
  for (size_t i = 0; i < ham_states.size(); ++i) {
    Eigen::VectorXd g(nc);
    for (int j = 0; j < nc; ++j) g[j] = cand_val(j, ham_states[i].head(D), ham_states[i].tail(D));
    gvals[i] = g;
  }

  auto fit_F_at = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                      double* fit_residual) -> Eigen::MatrixXd {
    // form fit pi_n = sum_j F_nj d gamma0_j at the canonical image
    AnchoredKernel::PointData pd = ak.at(q, v);
    CanonicalPoint cp = legendre(sys, q, v);
    Eigen::MatrixXd dg(2 * D, nc);
    cb.q = cp.q;
    cb.v = cp.p;
    for (int j = 0; j < nc; ++j)
      for (int i2 = 0; i2 < 2 * D; ++i2) dg(i2, j) = cgrad[j][i2].evaluate(cb);
    Eigen::MatrixXd Fm(ledger.N0, nc);
    double res = 0.0;
    for (int n = 0; n < ledger.N0; ++n) {
      // push P_n and lower with the canonical two-form: pi = (-Pp | Pq)
      Eigen::VectorXd Pn = pd.P.row(n).transpose();
      Tableau tab = pd.tab;
      Eigen::VectorXd push(2 * D);
      push.head(D) = Pn.head(D);
      push.tail(D) = tab.N * Pn.head(D) + tab.M * Pn.tail(D);
      Eigen::VectorXd pi(2 * D);
      pi.head(D) = -push.tail(D);
      pi.tail(D) = push.head(D);
      Eigen::VectorXd coef = pinv_solve(dg, pi, 1e-10);
      Fm.row(n) = coef.transpose();
      res = std::max(res, (dg * coef - pi).lpNorm<Eigen::Infinity>());
      if (rep.f_fits.size() < 16) rep.f_fits.push_back(coef.lpNorm<Eigen::Infinity>());
    }
    if (fit_residual) *fit_residual = res;
    return Fm;
  };

  // along-flow residual: f-weighted primary drift plus gamma1
  for (size_t i = 1; i + 1 < ham_states.size(); i += stride) {
    Eigen::VectorXd gdot = (gvals[i + 1] - gvals[i - 1]) / (2 * dt);
    double fres = 0;
    Eigen::MatrixXd Fm = fit_F_at(ham_states[i].head(D), ham_shadows[i], &fres);
    rep.form_fit_residual = std::max(rep.form_fit_residual, fres);
    Eigen::VectorXd g1 = ak.gamma(ham_states[i].head(D), ham_shadows[i]);
    for (int n = 0; n < ledger.N0; ++n) {
      double r = std::abs((Fm.row(n) * gdot)(0) + g1[n]);
      rep.flow_stability_max = std::max(rep.flow_stability_max, r);
    }
  }

  // off-surface probes: <dH_C | P_n> must reproduce gamma1_n
  std::mt19937_64 prng(991);
  int nprobe = 8;
  for (int pi = 0; pi < nprobe; ++pi) {
    size_t i = 1 + (ham_states.size() - 2) * pi / std::max(1, nprobe - 1);
    Eigen::VectorXd q = ham_states[i].head(D);
    Eigen::VectorXd v = ham_shadows[i];
    for (int a = 0; a < D; ++a) {
      q[a] += 0.02 * runif(prng, -1, 1) * (1 + std::abs(q[a]));
      v[a] += 0.02 * runif(prng, -1, 1) * (1 + std::abs(v[a]));
    }
    AnchoredKernel::PointData pd;
    try {
      pd = ak.at(q, v);
    } catch (const std::exception&) {
      continue;
    }
    CanonicalPoint cp = legendre(sys, q, v);
    for (int n = 0; n < ledger.N0; ++n) {
      Eigen::VectorXd Pn = pd.P.row(n).transpose();
      Eigen::VectorXd push(2 * D);
      push.head(D) = Pn.head(D);
      push.tail(D) = pd.tab.N * Pn.head(D) + pd.tab.M * Pn.tail(D);
      // directional derivative of H_C along the pushed kernel vector,
      // evaluated through a fiber section
      double h = tol.fd_step * (1 + cp.q.norm() + cp.p.norm());
      Eigen::VectorXd qp = cp.q + h * push.head(D), pp = cp.p + h * push.tail(D);
      Eigen::VectorXd qm = cp.q - h * push.head(D), pm = cp.p - h * push.tail(D);
      double Ep, Em;
      try {
        Eigen::VectorXd vp = fiber_solve(sys, qp, pp, v, tol);
        Eigen::VectorXd vm = fiber_solve(sys, qm, pm, v, tol);
        Ep = sys.tableau(qp, vp).E;
        Em = sys.tableau(qm, vm).E;
      } catch (const std::exception&) {
        continue;
      }
      double dHc = (Ep - Em) / (2 * h);
      double r = std::abs(dHc - pd.gamma[n]);
      rep.probe_stability_max = std::max(rep.probe_stability_max, r);
    }
  }
  return rep;
}

}  // namespace almreg
