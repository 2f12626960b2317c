#include "core/constraints.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <random>

namespace almreg {

namespace {

int svd_rank(const Eigen::MatrixXd& A, double thr) {
  if (A.rows() == 0 || A.cols() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > thr) ++r;
  return r;
}

// Orthonormal basis of the right null space at an absolute threshold.
Eigen::MatrixXd right_null_basis(const Eigen::MatrixXd& A, double thr) {
  if (A.cols() == 0) return Eigen::MatrixXd(0, 0);
  if (A.rows() == 0) return Eigen::MatrixXd::Identity(A.cols(), A.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > thr) ++r;
  return svd.matrixV().rightCols(A.cols() - r);
}

double sigma_max(const Eigen::MatrixXd& A) {
  if (A.rows() == 0 || A.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

}  // namespace

Eigen::VectorXd gamma1(const KernelData& kd, const Tableau& tab) {
  return kd.Z * (tab.dEdq + tab.F * tab.v);
}

Eigen::VectorXd beta_residual(const Tableau& tab, const Eigen::VectorXd& X) {
  const int D = static_cast<int>(tab.M.rows());
  Eigen::VectorXd Xq = X.head(D), Xv = X.tail(D);
  Eigen::VectorXd beta(2 * D);
  beta.head(D) = tab.dEdq + tab.F * Xq + tab.M * Xv;
  beta.tail(D) = tab.dEdv - tab.M * Xq;
  return beta;
}

Eigen::VectorXd first_order_residual(const LagrangianSystem& sys, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& v, const TolConfig& tol) {
  Tableau tab = sys.tableau(q, v);
  KernelData kd = kernel_basis(tab, tol);
  return kd.PkerM * (tab.dEdq + tab.F * tab.v);
}

SurfaceResult find_surface_point(const ResidualField& residual, const Eigen::VectorXd& q0,
                                 const Eigen::VectorXd& v0, const TolConfig& tol) {
  const int D = static_cast<int>(q0.size());
  SurfaceResult out;
  Eigen::VectorXd x(2 * D);
  x.head(D) = q0;
  x.tail(D) = v0;

  auto res_at = [&](const Eigen::VectorXd& s) { return residual(s.head(D), s.tail(D)); };

  Eigen::VectorXd r = res_at(x);
  if (r.size() == 0) {
    out.q = q0;
    out.v = v0;
    out.ok = true;
    return out;
  }
  for (int iter = 0; iter < tol.surface_max_iter; ++iter) {
    if (r.lpNorm<Eigen::Infinity>() <= tol.surface_tol) {
      out.q = x.head(D);
      out.v = x.tail(D);
      out.ok = true;
      out.iters = iter;
      out.resnorm = r.lpNorm<Eigen::Infinity>();
      return out;
    }
    Eigen::MatrixXd J(r.size(), 2 * D);
    for (int i = 0; i < 2 * D; ++i) {
      double h = tol.fd_step * (1.0 + std::abs(x[i]));
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      J.col(i) = (res_at(xp) - res_at(xm)) / (2 * h);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double thr = 1e-10 * (sv.size() ? sv[0] : 0.0);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(2 * D);
    for (int i = 0; i < sv.size(); ++i)
      if (sv[i] > thr)
        step -= (svd.matrixU().col(i).dot(r) / sv[i]) * svd.matrixV().col(i);
    double lambda = 1.0;
    double rn = r.norm();
    for (int bt = 0; bt < 25; ++bt) {
      Eigen::VectorXd xn = x + lambda * step;
      Eigen::VectorXd rnew;
      bool ok = true;
      try {
        rnew = res_at(xn);
      } catch (const std::exception&) {
        ok = false;
      }
      if (ok && (rnew.norm() < rn || lambda < 1e-6)) {
        x = xn;
        r = rnew;
        break;
      }
      lambda /= 2;
      if (bt == 24) return out;  // stuck
    }
  }
  return out;  // no convergence: signals possibly inconsistent constraints
}

const char* to_string(LedgerStatus s) {
  switch (s) {
    case LedgerStatus::TerminatedStable:
      return "terminated_stable";
    case LedgerStatus::TerminatedFull:
      return "terminated_full";
    case LedgerStatus::Inconsistent:
      return "inconsistent";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// AnchoredKernel

AnchoredKernel::AnchoredKernel(const LagrangianSystem& sys, Eigen::MatrixXd Z0, TolConfig tol)
    : sys_(&sys), Z0_(std::move(Z0)), tol_(tol) {}

AnchoredKernel::PointData AnchoredKernel::at(const Eigen::VectorXd& q,
                                             const Eigen::VectorXd& v) const {
  const int D = sys_->dim();
  const int n0 = N0();
  PointData pd{sys_->tableau(q, v), KernelData{}, {}, {}, {}};
  pd.kd = kernel_basis(pd.tab, tol_);
  if (pd.kd.N0 != n0)
    throw NonConstantRankError("kernel dimension changed from " + std::to_string(n0) + " to " +
                               std::to_string(pd.kd.N0) + " at a sampled point");

  Eigen::VectorXd w = pd.tab.dEdq + pd.tab.F * pd.tab.v;
  pd.gamma = Z0_ * (pd.kd.PkerM * w);

  pd.P = Eigen::MatrixXd(n0, 2 * D);
  for (int m = 0; m < n0; ++m) {
    Eigen::VectorXd cbar = pd.kd.PkerM * Z0_.row(m).transpose();
    Eigen::VectorXd chat = solve_in_rangeM(pd.tab, -pd.tab.F * cbar, tol_);
    pd.P.row(m).head(D) = cbar.transpose();
    pd.P.row(m).tail(D) = chat.transpose();
  }

  // Reduced second-order field without the on-surface precondition: the
  // minimal-norm acceleration extends it smoothly off the surface.
  Eigen::VectorXd a = solve_in_rangeM(pd.tab, -w, tol_);
  Eigen::VectorXd hor = pd.tab.v - pd.kd.PkerM * pd.tab.v;
  Eigen::VectorXd vert = a - solve_in_rangeM(pd.tab, -pd.tab.F * (pd.kd.PkerM * pd.tab.v), tol_);
  pd.barred = Eigen::VectorXd(2 * D);
  pd.barred.head(D) = hor;
  pd.barred.tail(D) = vert;
  return pd;
}

Eigen::VectorXd AnchoredKernel::gamma(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  return at(q, v).gamma;
}

Eigen::MatrixXd AnchoredKernel::Pfields(const Eigen::VectorXd& q,
                                        const Eigen::VectorXd& v) const {
  return at(q, v).P;
}

Eigen::VectorXd AnchoredKernel::Gfield(int n, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& v) const {
  const int D = sys_->dim();
  PointData pd = at(q, v);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * D);
  g.tail(D) = pd.kd.PkerM * Z0_.row(n).transpose();
  return g;
}

Eigen::VectorXd AnchoredKernel::barred_field(const Eigen::VectorXd& q,
                                             const Eigen::VectorXd& v) const {
  return at(q, v).barred;
}

double AnchoredKernel::dir_derivative(const ScalarField& f, const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& v,
                                      const Eigen::VectorXd& dir) const {
  const int D = sys_->dim();
  Eigen::VectorXd x(2 * D);
  x.head(D) = q;
  x.tail(D) = v;
  double h = tol_.fd_step * (1.0 + x.norm());
  Eigen::VectorXd xp = x + h * dir, xm = x - h * dir;
  return (f(xp.head(D), xp.tail(D)) - f(xm.head(D), xm.tail(D))) / (2 * h);
}

// ---------------------------------------------------------------------------
// The constraint algorithm

namespace {

struct RoundEval {
  std::vector<ScalarField> funcs;
  int rank = 0;
};

void canonicalize_cols(Eigen::MatrixXd& m) {
  for (int c = 0; c < m.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < m.rows(); ++r)
      if (std::abs(m(r, c)) > std::abs(m(best, c))) best = r;
    if (m(best, c) < 0) m.col(c) = -m.col(c);
  }
}

struct MultiplierState {
  Eigen::VectorXd u;  // accumulated determined multipliers (anchored basis)
  Eigen::MatrixXd F;  // pointwise orthonormal basis of the free directions
};

// Walk the recorded rounds at one point: each round determines the
// rank-many multiplier combinations fixed by its stability conditions
// (minimal-norm truncated solve) and shrinks the free directions to the
// null space of its Gamma. The split is position dependent.
MultiplierState accumulate(const AnchoredKernel& ak, const std::vector<RoundEval>& rounds,
                           const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
  const int n0 = ak.N0();
  MultiplierState st{Eigen::VectorXd::Zero(n0), Eigen::MatrixXd::Identity(n0, n0)};
  if (n0 == 0) return st;
  bool nontrivial = false;
  for (const auto& rd : rounds) nontrivial = nontrivial || rd.rank > 0;
  if (!nontrivial) return st;

  AnchoredKernel::PointData pd = ak.at(q, v);
  for (const auto& rd : rounds) {
    if (rd.rank == 0) continue;
    const int f = static_cast<int>(st.F.cols());
    if (f == 0) break;
    const int n = static_cast<int>(rd.funcs.size());
    Eigen::VectorXd base = pd.barred + pd.P.transpose() * st.u;
    Eigen::MatrixXd G(n, f);
    Eigen::VectorXd g(n);
    for (int j = 0; j < f; ++j) {
      Eigen::VectorXd dir = pd.P.transpose() * (st.F.col(j));
      for (int i = 0; i < n; ++i) G(i, j) = ak.dir_derivative(rd.funcs[i], q, v, dir);
    }
    for (int i = 0; i < n; ++i) g[i] = ak.dir_derivative(rd.funcs[i], q, v, base);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::VectorXd uhat = Eigen::VectorXd::Zero(f);
    for (int i = 0; i < rd.rank && i < svd.singularValues().size(); ++i) {
      double s = svd.singularValues()[i];
      if (s <= 0) break;
      uhat -= (svd.matrixU().col(i).dot(g) / s) * svd.matrixV().col(i);
    }
    st.u += st.F * uhat;
    Eigen::MatrixXd Fnext = st.F * svd.matrixV().rightCols(f - std::min(rd.rank, f));
    canonicalize_cols(Fnext);
    st.F = Fnext;
  }
  return st;
}

Eigen::VectorXd base_with_u(const AnchoredKernel& ak, const std::vector<RoundEval>& rounds,
                            const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
  AnchoredKernel::PointData pd = ak.at(q, v);
  MultiplierState st = accumulate(ak, rounds, q, v);
  return pd.barred + pd.P.transpose() * st.u;
}

}  // namespace

ConstraintLedger run_constraint_algorithm(const LagrangianSystem& sys,
                                          const std::vector<Bindings>& seed_points,
                                          const TolConfig& tol) {
  const int D = sys.dim();
  ConstraintLedger led;
  led.D = D;
  if (seed_points.empty()) throw std::runtime_error("constraint algorithm needs seed points");

  Tableau tab0 = sys.tableau(seed_points[0].q, seed_points[0].v);
  KernelData kd0 = kernel_basis(tab0, tol);
  led.N0 = kd0.N0;
  led.Z0 = kd0.Z;

  auto ak = std::make_shared<AnchoredKernel>(sys, kd0.Z, tol);

  if (led.N0 == 0) {
    led.I_seq = {0};
    led.n_F = 1;
    led.status = LedgerStatus::TerminatedStable;
    led.free_basis = Eigen::MatrixXd(0, 0);
    led.n_free = 0;
    led.points = seed_points;
    led.free_dirs = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
      return Eigen::MatrixXd(0, 0);
    };
    led.u_determined = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
      return Eigen::VectorXd();
    };
    led.residuals = [](const Eigen::VectorXd&, const Eigen::VectorXd&) {
      return Eigen::VectorXd();
    };
    const LagrangianSystem* psys = &sys;
    TolConfig tl = tol;
    led.soelvf_eval = [psys, tl](const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                 const Eigen::VectorXd&) {
      Tableau tab = psys->tableau(q, v);
      KernelData kd = kernel_basis(tab, tl);
      return solvf(*psys, kd, tab, tl);
    };
    return led;
  }

  // Characteristic magnitude for activity gates.
  double scale = 1.0;
  for (const auto& pt : seed_points) {
    Tableau t = sys.tableau(pt.q, pt.v);
    scale = std::max(scale, std::abs(t.E) + t.dEdq.lpNorm<Eigen::Infinity>() +
                                (t.F * t.v).lpNorm<Eigen::Infinity>());
  }
  const double val_tol = tol.eps_constraint * scale;
  const double grad_tol = 1e-6 * scale;

  std::vector<Bindings> pts = seed_points;

  auto grad_of = [&](const ScalarField& f, const Bindings& pt) {
    Eigen::VectorXd x(2 * D);
    x.head(D) = pt.q;
    x.tail(D) = pt.v;
    Eigen::VectorXd g(2 * D);
    for (int i = 0; i < 2 * D; ++i) {
      double h = tol.fd_step * (1.0 + std::abs(x[i]));
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      g[i] = (f(xp.head(D), xp.tail(D)) - f(xm.head(D), xm.tail(D))) / (2 * h);
    }
    return g;
  };

  auto is_active = [&](const ScalarField& f) {
    for (const auto& pt : pts) {
      try {
        if (std::abs(f(pt.q, pt.v)) > val_tol) return true;
        if (grad_of(f, pt).lpNorm<Eigen::Infinity>() > grad_tol) return true;
      } catch (const NonConstantRankError&) {
        throw;
      } catch (const std::exception&) {
        // domain trouble at one point does not decide activity
      }
    }
    return false;
  };

  // first-order constraint functions in the anchored basis
  for (int n = 0; n < led.N0; ++n) {
    ConstraintFunction cf;
    cf.order = 1;
    cf.label = "gamma[1]_" + std::to_string(n + 1);
    auto akp = ak;
    cf.eval = [akp, n](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      return akp->gamma(q, v)[n];
    };
    led.funcs.push_back(std::move(cf));
  }
  for (auto& f : led.funcs) f.active = is_active(f.eval);

  auto active_residual = [&]() -> ResidualField {
    std::vector<ScalarField> evs;
    for (const auto& f : led.funcs)
      if (f.active) evs.push_back(f.eval);
    return [evs](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      Eigen::VectorXd r(evs.size());
      for (size_t i = 0; i < evs.size(); ++i) r[i] = evs[i](q, v);
      return r;
    };
  };

  std::mt19937_64 rng(0x5eedULL);
  auto gauss = [&rng]() {
    // Box-Muller on the raw generator; avoids libstdc++ distribution drift
    double u1 = ((rng() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = ((rng() >> 11) + 1.0) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };

  // Project the working set onto the current active surface; drop failures
  // and replenish by perturbing survivors. Returns false when nothing
  // converges (empty surface).
  auto reproject = [&]() {
    ResidualField res = active_residual();
    size_t target = pts.size();
    std::vector<Bindings> kept;
    for (const auto& pt : pts) {
      try {
        SurfaceResult sr = find_surface_point(res, pt.q, pt.v, tol);
        if (sr.ok) kept.push_back(sys.bindings(sr.q, sr.v));
      } catch (const std::exception&) {
      }
    }
    size_t attempts = 0;
    while (!kept.empty() && kept.size() < target && attempts < 20 * target) {
      ++attempts;
      const Bindings& src = kept[attempts % kept.size()];
      Eigen::VectorXd q = src.q, v = src.v;
      for (int i = 0; i < D; ++i) {
        q[i] += 0.15 * (1.0 + std::abs(q[i])) * gauss();
        v[i] += 0.15 * (1.0 + std::abs(v[i])) * gauss();
      }
      try {
        SurfaceResult sr = find_surface_point(res, q, v, tol);
        if (sr.ok) kept.push_back(sys.bindings(sr.q, sr.v));
      } catch (const std::exception&) {
      }
    }
    if (kept.empty()) return false;
    pts = std::move(kept);
    return true;
  };

  bool any_active = false;
  for (const auto& f : led.funcs) any_active = any_active || f.active;
  if (any_active && !reproject()) {
    led.status = LedgerStatus::Inconsistent;
    led.I_seq = {0};
    led.n_F = 1;
    led.points = pts;
    led.free_basis = Eigen::MatrixXd::Identity(led.N0, led.N0);
    return led;
  }

  // Functional independence count: the rank of the stacked constraint
  // differentials is evaluated at each working point and pooled by median
  // (the paper assumes it is constant on the surface).
  auto pooled_I = [&]() {
    std::vector<int> ranks;
    for (const auto& pt : pts) {
      std::vector<Eigen::VectorXd> rows;
      for (const auto& f : led.funcs) {
        if (!f.active) continue;
        Eigen::VectorXd g = grad_of(f.eval, pt);
        double n = g.norm();
        if (n > grad_tol) rows.push_back(g / n);
      }
      if (rows.empty()) {
        ranks.push_back(0);
        continue;
      }
      Eigen::MatrixXd A(rows.size(), 2 * D);
      for (size_t i = 0; i < rows.size(); ++i) A.row(i) = rows[i].transpose();
      ranks.push_back(svd_rank(A, 1e-4 * sigma_max(A)));
    }
    if (ranks.empty()) return 0;
    std::sort(ranks.begin(), ranks.end());
    return ranks[ranks.size() / 2];
  };

  std::vector<RoundEval> rounds;
  int prevI = 0;
  bool terminated = false;

  for (int k = 1; k <= 2 * D + 1; ++k) {
    int Ik = pooled_I();
    led.I_seq.push_back(Ik);
    if (Ik == prevI || Ik == 2 * D) {
      led.status = Ik == 2 * D ? LedgerStatus::TerminatedFull : LedgerStatus::TerminatedStable;
      led.n_F = k;
      terminated = true;
      break;
    }
    prevI = Ik;

    std::vector<int> idxs;
    for (size_t i = 0; i < led.funcs.size(); ++i)
      if (led.funcs[i].active && led.funcs[i].order == k) idxs.push_back(static_cast<int>(i));
    if (idxs.empty()) {
      led.status = LedgerStatus::TerminatedStable;
      led.n_F = k;
      terminated = true;
      break;
    }
    const int nk = static_cast<int>(idxs.size());
    const int f = led.N0 - led.n_determined;

    // Gamma^[k] over the pointwise free directions at every working point.
    std::vector<Eigen::MatrixXd> Gs;
    Eigen::MatrixXd F0;  // free directions at the first point, for the record
    for (const auto& pt : pts) {
      MultiplierState st = accumulate(*ak, rounds, pt.q, pt.v);
      if (Gs.empty()) F0 = st.F;
      AnchoredKernel::PointData pd = ak->at(pt.q, pt.v);
      Eigen::MatrixXd G(nk, f);
      for (int j = 0; j < f; ++j) {
        Eigen::VectorXd dir = pd.P.transpose() * st.F.col(j);
        for (int i = 0; i < nk; ++i)
          G(i, j) = ak->dir_derivative(led.funcs[idxs[i]].eval, pt.q, pt.v, dir);
      }
      Gs.push_back(std::move(G));
    }
    Eigen::MatrixXd prestack(nk * static_cast<int>(pts.size()), f);
    for (size_t p = 0; p < pts.size(); ++p) prestack.middleRows(nk * p, nk) = Gs[p];
    // floor well above the nested finite-difference noise (~1e-6)
    const double thrG = std::max(1e-4, 1e-6 * sigma_max(prestack));

    // The rank is assumed constant on the generic stratum; points that fell
    // onto a degenerate substratum are dropped, and only an unclear majority
    // is an error.
    int rk = 0;
    {
      std::vector<int> pranks;
      for (const auto& G : Gs) pranks.push_back(f == 0 ? 0 : svd_rank(G, thrG));
      std::vector<int> sorted = pranks;
      std::sort(sorted.begin(), sorted.end());
      rk = sorted[sorted.size() / 2];
      size_t agree = 0;
      for (int r : pranks) agree += r == rk;
      if (3 * agree < 2 * pranks.size())
        throw NonConstantRankError(
            "rank of the stabilization matrix varies across the point set");
      if (agree < pranks.size()) {
        std::vector<Bindings> keep_pts;
        for (size_t p = 0; p < pts.size(); ++p)
          if (pranks[p] == rk) keep_pts.push_back(pts[p]);
        pts = std::move(keep_pts);
      }
    }

    DeterminationRound rec;
    rec.order = k;
    rec.basis = F0;
    rec.func_idx = idxs;
    rec.rank = rk;
    rec.gamma_sample = Gs[0];
    led.rounds.push_back(rec);

    RoundEval re;
    re.rank = rk;
    for (int i : idxs) re.funcs.push_back(led.funcs[i].eval);
    rounds.push_back(re);
    led.n_determined += rk;

    // Next-order candidates: the drift of each order-k function along the
    // updated base field. Determined combinations make their stability
    // conditions vanish, so only the unresolved components stay active.
    int added_active = 0;
    std::vector<RoundEval> rounds_snapshot = rounds;
    for (int j = 0; j < nk; ++j) {
      ScalarField parent = led.funcs[idxs[j]].eval;
      auto akp = ak;
      ScalarField ev = [akp, parent, rounds_snapshot](const Eigen::VectorXd& q,
                                                      const Eigen::VectorXd& v) {
        Eigen::VectorXd base = base_with_u(*akp, rounds_snapshot, q, v);
        return akp->dir_derivative(parent, q, v, base);
      };
      ConstraintFunction cf;
      cf.order = k + 1;
      cf.label = "gamma[" + std::to_string(k + 1) + "]_" + std::to_string(j + 1);
      cf.eval = ev;
      cf.active = is_active(ev);
      added_active += cf.active;
      led.funcs.push_back(std::move(cf));
    }

    if (added_active > 0 && !reproject()) {
      led.status = LedgerStatus::Inconsistent;
      led.n_F = k + 1;
      terminated = true;
      break;
    }
  }
  if (!terminated) {
    led.status = LedgerStatus::TerminatedStable;
    led.n_F = 2 * D + 1;
  }
  if (led.I_seq.empty()) led.I_seq = {0};

  led.n_free = led.N0 - led.n_determined;
  led.points = pts;

  {
    auto akp = ak;
    auto rds = rounds;
    led.u_determined = [akp, rds](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      return accumulate(*akp, rds, q, v).u;
    };
    led.free_dirs = [akp, rds](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      return accumulate(*akp, rds, q, v).F;
    };
    led.residuals = active_residual();
    const int nfree = led.n_free;
    led.soelvf_eval = [akp, rds, nfree](const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& u_free) {
      AnchoredKernel::PointData pd = akp->at(q, v);
      MultiplierState st = accumulate(*akp, rds, q, v);
      Eigen::VectorXd u = st.u;
      if (u_free.size()) {
        if (u_free.size() != nfree)
          throw std::runtime_error("free multiplier vector length mismatch: expected " +
                                   std::to_string(nfree));
        u += st.F * u_free;
      }
      return Eigen::VectorXd(pd.barred + pd.P.transpose() * u);
    };
    led.free_basis = led.points.empty()
                         ? Eigen::MatrixXd::Identity(led.N0, led.N0)
                         : led.free_dirs(led.points[0].q, led.points[0].v);
  }
  return led;
}

}  // namespace almreg
