#include "core/commands.hpp"

#include <charconv>
#include <sstream>

#include "core/catalog.hpp"

namespace almreg {

namespace {

double runif(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
}

struct Checks {
  ojson rows = ojson::array();
  bool all_pass = true;

  void add(const std::string& name, bool pass, double value, double threshold,
           const std::string& location) {
    ojson row;
    row["name"] = name;
    row["pass"] = pass;
    row["value"] = value;
    row["threshold"] = threshold;
    row["location"] = location;
    rows.push_back(row);
    all_pass = all_pass && pass;
  }
  void leq(const std::string& name, double value, double threshold,
           const std::string& location) {
    add(name, value <= threshold, value, threshold, location);
  }
};

std::string human_table(const ojson& report) {
  std::ostringstream os;
  os << report.value("command", "?");
  if (report.contains("system") && report["system"].is_object())
    os << " " << report["system"].value("name", "?");
  os << "\n";
  if (report.contains("summary"))
    for (auto& [k, v] : report["summary"].items()) os << "  " << k << ": " << v.dump() << "\n";
  if (report.contains("checks")) {
    for (const auto& row : report["checks"]) {
      os << (row["pass"].get<bool>() ? "  PASS " : "  FAIL ") << row["name"].get<std::string>()
         << "  value=" << row["value"].dump() << " thr=" << row["threshold"].dump() << " @"
         << row["location"].get<std::string>() << "\n";
    }
  }
  if (report.contains("error")) os << "  error: " << report["error"].get<std::string>() << "\n";
  return os.str();
}

ojson spec_header(const SystemSpec& spec, const CmdOptions& opts) {
  ojson j;
  j["name"] = spec.name;
  j["dim"] = spec.dim;
  ojson pj = ojson::object();
  for (const auto& [k, v] : spec.params) pj[k] = v;
  j["params"] = pj;
  j["seed_rng"] = opts.seed;
  j["points"] = opts.points;
  j["tol_scale"] = opts.tol_scale;
  return j;
}

ojson vec_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ojson ledger_json(const ConstraintLedger& led) {
  ojson j;
  j["N0"] = led.N0;
  j["n_F"] = led.n_F;
  j["status"] = to_string(led.status);
  j["n_determined"] = led.n_determined;
  j["n_free"] = led.n_free;
  ojson funcs = ojson::array();
  for (const auto& f : led.funcs) {
    ojson fj;
    fj["label"] = f.label;
    fj["order"] = f.order;
    fj["active"] = f.active;
    funcs.push_back(fj);
  }
  j["constraints"] = funcs;
  j["I_sequence"] = led.I_seq;
  ojson rounds = ojson::array();
  for (const auto& r : led.rounds) {
    ojson rj;
    rj["order"] = r.order;
    rj["rank"] = r.rank;
    rounds.push_back(rj);
  }
  j["rounds"] = rounds;
  ojson us = ojson::array();
  for (size_t i = 0; i < led.points.size() && i < 3; ++i) {
    const auto& pt = led.points[i];
    us.push_back(vec_json(led.u_determined(pt.q, pt.v)));
  }
  j["determined_u_samples"] = us;
  return j;
}

// ---------------------------------------------------------------------------
// verbs

CmdResult cmd_examples() {
  CmdResult res;
  res.report["command"] = "examples";
  ojson arr = ojson::array();
  for (const auto& e : catalog()) {
    ojson j;
    j["name"] = e.name;
    j["dim"] = e.dim;
    j["blurb"] = e.blurb;
    arr.push_back(j);
  }
  res.report["catalog"] = arr;
  std::ostringstream os;
  for (const auto& e : catalog()) os << e.name << " (D=" << e.dim << "): " << e.blurb << "\n";
  res.human = os.str();
  return res;
}

CmdResult cmd_analyze(const SystemSpec& spec, const CmdOptions& opts) {
  CmdResult res;
  res.report["command"] = "analyze";
  res.report["system"] = spec_header(spec, opts);
  TolConfig tol = tol_from(opts);
  LagrangianSystem sys = build_from_spec(spec);
  std::mt19937_64 rng(opts.seed);
  std::vector<Bindings> pts = sample_points(sys, spec, opts.points, rng);

  Checks checks;
  int N0 = -1, Dbar = -1;
  double fbar_max = 0.0;
  bool almost_regular = true;
  for (size_t i = 0; i < pts.size(); ++i) {
    Tableau tab = sys.tableau(pts[i].q, pts[i].v);
    checks.leq("M_symmetric", (tab.M - tab.M.transpose()).cwiseAbs().maxCoeff(), 1e-10,
               "point " + std::to_string(i));
    checks.leq("F_antisymmetric", (tab.F + tab.F.transpose()).cwiseAbs().maxCoeff(), 1e-10,
               "point " + std::to_string(i));
    KernelData kd = kernel_basis(tab, tol);
    if (N0 < 0) {
      N0 = kd.N0;
      Dbar = kd.Dbar;
    }
    checks.add("constant_kernel_rank", kd.N0 == N0, kd.N0, N0, "point " + std::to_string(i));
    fbar_max = std::max(fbar_max, kd.fbar_max);
    almost_regular = almost_regular && kd.almost_regular;
    if (i >= 4) break;  // rank structure is constant; five probes suffice for analyze
  }
  Tableau tab0 = sys.tableau(pts[0].q, pts[0].v);
  int omrank = omega_rank(tab0, tol);

  ojson summary;
  summary["N0"] = N0;
  summary["Dbar"] = Dbar;
  summary["dim_ker_omega"] = N0 + Dbar;
  summary["omega_rank"] = omrank;
  summary["fbar_max"] = fbar_max;
  summary["almost_regular"] = almost_regular;
  summary["regular"] = N0 == 0;
  summary["energy_at_seed"] = sys.tableau(spec.seed_q, spec.seed_v).E;

  // first-order constraints at the seed and a surface point from it
  KernelData kds = kernel_basis(sys.tableau(spec.seed_q, spec.seed_v), tol);
  summary["gamma1_at_seed"] = vec_json(gamma1(kds, sys.tableau(spec.seed_q, spec.seed_v)));
  auto res1 = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    return first_order_residual(sys, q, v, tol);
  };
  SurfaceResult sr = find_surface_point(res1, spec.seed_q, spec.seed_v, tol);
  summary["surface_found"] = sr.ok;
  if (sr.ok) {
    summary["surface_point_q"] = vec_json(sr.q);
    summary["surface_point_v"] = vec_json(sr.v);
    summary["surface_q_norm"] = sr.q.norm();
  }
  res.report["summary"] = summary;
  res.report["checks"] = checks.rows;
  res.exit_code = checks.all_pass ? 0 : 1;
  res.human = human_table(res.report);
  return res;
}

ConstraintLedger make_ledger(const LagrangianSystem& sys, const SystemSpec& spec,
                             const CmdOptions& opts, const TolConfig& tol) {
  std::mt19937_64 rng(opts.seed);
  std::vector<Bindings> pts = sample_points(sys, spec, opts.points, rng);
  return run_constraint_algorithm(sys, pts, tol);
}

CmdResult cmd_constraints(const SystemSpec& spec, const CmdOptions& opts) {
  CmdResult res;
  res.report["command"] = "constraints";
  res.report["system"] = spec_header(spec, opts);
  TolConfig tol = tol_from(opts);
  LagrangianSystem sys = build_from_spec(spec);
  ConstraintLedger led = make_ledger(sys, spec, opts, tol);
  res.report["ledger"] = ledger_json(led);
  Checks checks;
  checks.add("algorithm_terminated", led.status != LedgerStatus::Inconsistent,
             led.status == LedgerStatus::Inconsistent ? 1 : 0, 0, "ledger");
  checks.add("termination_bound", led.n_F <= 2 * spec.dim + 1, led.n_F, 2 * spec.dim + 1,
             "ledger");
  res.report["checks"] = checks.rows;
  res.exit_code = checks.all_pass ? 0 : 1;
  res.human = human_table(res.report);
  return res;
}

CmdResult cmd_integrate(const SystemSpec& spec, const CmdOptions& opts) {
  CmdResult res;
  res.report["command"] = "integrate";
  res.report["system"] = spec_header(spec, opts);
  TolConfig tol = tol_from(opts);
  LagrangianSystem sys = build_from_spec(spec);
  ConstraintLedger led = make_ledger(sys, spec, opts, tol);
  res.report["ledger"] = ledger_json(led);

  // free multipliers from the [u] block (expression-valued)
  const int nfree = led.n_free;
  std::vector<Expr> u_exprs;
  ParseOptions po;
  po.dim = spec.dim;
  for (const auto& [k, v] : spec.params) po.params.push_back(k);
  for (const auto& s : spec.u_exprs) u_exprs.push_back(parse_expression(s, po));
  if (static_cast<int>(u_exprs.size()) > nfree)
    throw std::runtime_error("more free multiplier expressions than free directions (" +
                             std::to_string(nfree) + ")");
  auto field = [&sys, &led, u_exprs, nfree](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    Eigen::VectorXd uf = Eigen::VectorXd::Zero(nfree);
    if (!u_exprs.empty()) {
      Bindings b = sys.bindings(q, v);
      for (size_t i = 0; i < u_exprs.size(); ++i) uf[i] = u_exprs[i].evaluate(b);
    }
    return led.soelvf_eval(q, v, uf);
  };

  // start from the projected seed
  SurfaceResult sr = find_surface_point(led.residuals, spec.seed_q, spec.seed_v, tol);
  if (!sr.ok) throw std::runtime_error("surface not found from seed");

  IntegrateOptions io;
  io.t0 = spec.t0;
  io.t1 = spec.t1;
  io.dt = spec.dt;
  io.project_each_step = spec.project;
  io.residual = led.residuals;
  auto residual = led.residuals;
  TolConfig ptol = tol;
  io.projector = [residual, ptol](Eigen::VectorXd& q, Eigen::VectorXd& v) {
    SurfaceResult s = find_surface_point(residual, q, v, ptol);
    if (!s.ok) return false;
    q = s.q;
    v = s.v;
    return true;
  };
  Trajectory traj = integrate(sys, field, sr.q, sr.v, io);

  double e0 = traj.energies.front();
  double edrift = 0.0, resmax = 0.0;
  for (size_t i = 0; i < traj.times.size(); ++i) {
    edrift = std::max(edrift, std::abs(traj.energies[i] - e0));
    if (traj.residuals[i].size())
      resmax = std::max(resmax, traj.residuals[i].lpNorm<Eigen::Infinity>());
  }
  ojson summary;
  summary["steps"] = traj.times.size() - 1;
  summary["t0"] = spec.t0;
  summary["t1"] = spec.t1;
  summary["dt"] = spec.dt;
  summary["projection"] = spec.project;
  summary["energy_initial"] = e0;
  summary["energy_drift_max"] = edrift;
  summary["constraint_residual_max"] = resmax;
  summary["final_q"] = vec_json(traj.qs.back());
  summary["final_v"] = vec_json(traj.vs.back());
  res.report["summary"] = summary;

  Checks checks;
  double span = std::max(1.0, std::abs(spec.t1 - spec.t0));
  checks.leq("energy_conserved", edrift, 1e-7 * span, "trajectory");
  if (!led.empty() && spec.project) checks.leq("constraints_preserved", resmax, 1e-6, "trajectory");
  res.report["checks"] = checks.rows;
  res.exit_code = checks.all_pass ? 0 : 1;
  res.trajectory = std::make_shared<Trajectory>(std::move(traj));
  res.human = human_table(res.report);
  return res;
}

CmdResult cmd_project(const SystemSpec& spec, const CmdOptions& opts) {
  CmdResult res;
  res.report["command"] = "project";
  res.report["system"] = spec_header(spec, opts);
  TolConfig tol = tol_from(opts);
  LagrangianSystem sys = build_from_spec(spec);
  std::mt19937_64 rng(opts.seed);
  ConstraintLedger led = make_ledger(sys, spec, opts, tol);

  Checks checks;
  const Bindings& pt = led.points.at(0);
  CanonicalPoint cp = legendre(sys, pt.q, pt.v);
  ojson summary;
  summary["legendre_q"] = vec_json(cp.q);
  summary["legendre_p"] = vec_json(cp.p);
  double hspread = 0.0;
  double hc = canonical_hamiltonian(sys, pt.q, pt.v, rng, tol, &hspread);
  summary["H_C"] = hc;
  summary["H_C_fiber_spread"] = hspread;
  checks.leq("canonical_hamiltonian_single_valued", hspread, 1e-7 * (1 + std::abs(hc)), "seed");

  // energy is projectable
  auto Efn = [&sys](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
    return sys.tableau(q, v).E;
  };
  std::vector<Bindings> some(led.points.begin(),
                             led.points.begin() + std::min<size_t>(5, led.points.size()));
  ProjectabilityReport pe = is_projectable(Efn, sys, some, rng, tol);
  checks.add("energy_projectable", pe.projectable,
             std::max(pe.max_fiber_spread, pe.max_kernel_derivative), 1e-6, "points");

  if (!spec.primary_candidates.empty()) {
    PrimaryReport pr = verify_primary_constraints(sys, spec.primary_candidates, led.points, tol);
    ojson rows = ojson::array();
    for (const auto& r : pr.rows) {
      ojson rj;
      rj["candidate"] = r.text;
      rj["max_value_on_image"] = r.max_value;
      rj["max_pullback_gradient"] = r.max_pullback_grad;
      rj["pass"] = r.pass();
      rows.push_back(rj);
      checks.add("primary_candidate_verified", r.pass(),
                 std::max(r.max_value, r.max_pullback_grad), 1e-6, r.text);
    }
    summary["primary_candidates"] = rows;
    summary["primary_independent"] = pr.n_passing_independent;
    summary["primary_complete"] = pr.complete;
    if (!pr.complete) summary["warning"] = "primary constraint set incomplete";
  }

  Eigen::VectorXd uf = Eigen::VectorXd::Zero(led.n_free);
  Eigen::VectorXd flow = hamiltonian_flow(sys, led, pt.q, pt.v, uf, rng, tol);
  summary["hamiltonian_flow_at_point"] = vec_json(flow);
  res.report["summary"] = summary;
  res.report["ledger"] = ledger_json(led);
  res.report["checks"] = checks.rows;
  res.exit_code = checks.all_pass ? 0 : 1;
  res.human = human_table(res.report);
  return res;
}

CmdResult cmd_verify(const SystemSpec& spec, const CmdOptions& opts) {
  CmdResult res;
  res.report["command"] = "verify";
  res.report["system"] = spec_header(spec, opts);
  TolConfig tol = tol_from(opts);
  LagrangianSystem sys = build_from_spec(spec);
  const int D = spec.dim;
  std::mt19937_64 rng(opts.seed);
  std::vector<Bindings> pts = sample_points(sys, spec, opts.points, rng);
  Checks checks;

  // 1. tableau structure and derivative oracle against finite differences
  Bindings fdb = sys.bindings(spec.seed_q, spec.seed_v);
  size_t nfd = std::min<size_t>(pts.size(), 50);
  for (size_t ip = 0; ip < nfd; ++ip) {
    const auto& pt = pts[ip];
    Tableau tab = sys.tableau(pt.q, pt.v);
    checks.leq("M_symmetric", (tab.M - tab.M.transpose()).cwiseAbs().maxCoeff(), 1e-10,
               "point " + std::to_string(ip));
    checks.leq("F_antisymmetric", (tab.F + tab.F.transpose()).cwiseAbs().maxCoeff(), 1e-10,
               "point " + std::to_string(ip));

    auto Lat = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      Bindings b = fdb;
      b.q = q;
      b.v = v;
      return sys.L().evaluate(b);
    };
    double worst = 0.0;
    for (int a = 0; a < D; ++a) {
      for (int b = 0; b < D; ++b) {
        double ha = tol.fd_step * 10 * (1 + std::abs(pt.v[a]));
        double hb = tol.fd_step * 10 * (1 + std::abs(pt.v[b]));
        double mfd;
        if (a == b) {
          Eigen::VectorXd vp = pt.v, vm = pt.v;
          vp[a] += ha;
          vm[a] -= ha;
          mfd = (Lat(pt.q, vp) - 2 * Lat(pt.q, pt.v) + Lat(pt.q, vm)) / (ha * ha);
        } else {
          Eigen::VectorXd vpp = pt.v, vpm = pt.v, vmp = pt.v, vmm = pt.v;
          vpp[a] += ha;
          vpp[b] += hb;
          vpm[a] += ha;
          vpm[b] -= hb;
          vmp[a] -= ha;
          vmp[b] += hb;
          vmm[a] -= ha;
          vmm[b] -= hb;
          mfd = (Lat(pt.q, vpp) - Lat(pt.q, vpm) - Lat(pt.q, vmp) + Lat(pt.q, vmm)) /
                (4 * ha * hb);
        }
        worst = std::max(worst, std::abs(mfd - tab.M(a, b)) / std::max(1.0, std::abs(tab.M(a, b))));
        // mixed Hessian N_ab = d2L/dv^a dq^b
        double hq = tol.fd_step * 10 * (1 + std::abs(pt.q[b]));
        Eigen::VectorXd vp = pt.v, vm = pt.v;
        vp[a] += ha;
        vm[a] -= ha;
        Eigen::VectorXd qp = pt.q, qm = pt.q;
        qp[b] += hq;
        qm[b] -= hq;
        double nfd2 = (Lat(qp, vp) - Lat(qm, vp) - Lat(qp, vm) + Lat(qm, vm)) / (4 * ha * hq);
        worst = std::max(worst, std::abs(nfd2 - tab.N(a, b)) / std::max(1.0, std::abs(tab.N(a, b))));
      }
    }
    checks.leq("hessians_match_finite_differences", worst, 1e-5, "point " + std::to_string(ip));
  }

  // 2. kernel structure
  int N0ref = -1;
  for (size_t ip = 0; ip < pts.size(); ++ip) {
    Tableau tab = sys.tableau(pts[ip].q, pts[ip].v);
    KernelData kd = kernel_basis(tab, tol);
    if (N0ref < 0) N0ref = kd.N0;
    std::string loc = "point " + std::to_string(ip);
    checks.add("constant_kernel_rank", kd.N0 == N0ref, kd.N0, N0ref, loc);
    if (kd.N0) {
      checks.leq("kernel_rows_annihilated", (tab.M * kd.Z.transpose()).cwiseAbs().maxCoeff(),
                 1e-9 * std::max(kd.sigma_max, 1e-30), loc);
      checks.leq("duality_ThetaQ", (kd.ThetaQ * kd.Z.transpose() -
                                    Eigen::MatrixXd::Identity(kd.N0, kd.N0))
                                       .cwiseAbs()
                                       .maxCoeff(),
                 1e-12, loc);
    }
    checks.leq("projector_idempotent", (kd.PkerM * kd.PkerM - kd.PkerM).cwiseAbs().maxCoeff(),
               1e-10, loc);
    checks.leq("projector_symmetric", (kd.PkerM - kd.PkerM.transpose()).cwiseAbs().maxCoeff(),
               1e-12, loc);
    checks.leq("reduced_matrix_zero", kd.fbar_max,
               tol.eps_constraint * std::max(1.0, tab.F.cwiseAbs().maxCoeff()), loc);
    Eigen::MatrixXd W = omega_matrix(tab);
    double wnorm = std::max(W.norm(), 1e-30);
    for (int n = 0; n < kd.Dbar; ++n)
      checks.leq("kernel_contraction", (W * kd.P.row(n).transpose()).norm() / wnorm, 1e-8, loc);
    for (int n = 0; n < kd.N0; ++n)
      checks.leq("kernel_contraction_G", (W * kd.G.row(n).transpose()).norm() / wnorm, 1e-8, loc);
    checks.add("omega_rank", omega_rank(tab, tol) == 2 * D - 2 * kd.N0, omega_rank(tab, tol),
               2 * D - 2 * kd.N0, loc);
    if (ip >= 9) break;  // rank checks on ten points; the acceptance suite does 100
  }

  // 3. ledger-based checks on the constraint surface
  ConstraintLedger led = make_ledger(sys, spec, opts, tol);
  res.report["ledger"] = ledger_json(led);
  AnchoredKernel ak(sys, led.Z0, tol);
  std::vector<Bindings> spts(led.points.begin(),
                             led.points.begin() + std::min<size_t>(5, led.points.size()));

  for (size_t ip = 0; ip < spts.size(); ++ip) {
    const auto& pt = spts[ip];
    std::string loc = "surface point " + std::to_string(ip);
    Tableau tab = sys.tableau(pt.q, pt.v);
    KernelData kd = kernel_basis(tab, tol);

    // beta kernel-shift invariance and vanishing on solutions
    if (led.N0 > 0 && kd.almost_regular) {
      Eigen::VectorXd X = soelvf(sys, kd, tab, Eigen::VectorXd::Zero(kd.Dbar), tol);
      Eigen::VectorXd b0 = beta_residual(tab, X);
      checks.leq("beta_vanishes_on_solution", b0.lpNorm<Eigen::Infinity>(), 1e-8, loc);
      for (int n = 0; n < kd.Dbar; ++n) {
        Eigen::VectorXd b1 = beta_residual(tab, X + kd.P.row(n).transpose());
        checks.leq("beta_kernel_shift", (b1 - b0).lpNorm<Eigen::Infinity>(), 1e-10, loc);
      }
      for (int n = 0; n < kd.N0; ++n) {
        Eigen::VectorXd b1 = beta_residual(tab, X + kd.G.row(n).transpose());
        checks.leq("beta_kernel_shift", (b1 - b0).lpNorm<Eigen::Infinity>(), 1e-10, loc);
      }
      // second-order condition modulo the kernel
      Eigen::VectorXd hor = X.head(D) - pt.v;
      checks.leq("soelvf_second_order_mod_kernel",
                 ((Eigen::MatrixXd::Identity(D, D) - kd.PkerM) * hor).lpNorm<Eigen::Infinity>(),
                 1e-8, loc);
    }

    // G E = 0 and <dE|kernel> = 0 on the surface
    double h = tol.fd_step * (1 + pt.v.norm());
    for (int n = 0; n < kd.N0; ++n) {
      Eigen::VectorXd z = kd.Z.row(n).transpose();
      double ge = (sys.tableau(pt.q, pt.v + h * z).E - sys.tableau(pt.q, pt.v - h * z).E) / (2 * h);
      checks.leq("GE_zero", std::abs(ge), 1e-8, loc);
    }
    for (int n = 0; n < kd.Dbar; ++n) {
      Eigen::VectorXd Pn = kd.P.row(n).transpose();
      double de = tab.dEdq.dot(Pn.head(D)) + tab.dEdv.dot(Pn.tail(D));
      checks.leq("dE_kernel_pairing_on_surface", std::abs(de), 1e-8, loc);
    }

    // gamma gauge invariance along the vertical kernel
    if (led.N0 > 0) {
      for (int n = 0; n < led.N0 && !led.empty(); ++n) {
        Eigen::VectorXd z = kd.Z.row(n).transpose();
        Eigen::VectorXd gp = ak.gamma(pt.q, pt.v + h * z);
        Eigen::VectorXd gm = ak.gamma(pt.q, pt.v - h * z);
        checks.leq("gamma_gauge_invariant", ((gp - gm) / (2 * h)).lpNorm<Eigen::Infinity>(),
                   1e-6, loc);
      }
    }
  }

  // projectability of E, constraints and determined multipliers
  {
    auto Efn = [&sys](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
      return sys.tableau(q, v).E;
    };
    ProjectabilityReport pe = is_projectable(Efn, sys, spts, rng, tol);
    checks.add("energy_projectable", pe.projectable,
               std::max(pe.max_fiber_spread, pe.max_kernel_derivative), 1e-6, "surface points");
    for (const auto& f : led.funcs) {
      if (!f.active) continue;
      ProjectabilityReport pg = is_projectable(f.eval, sys, spts, rng, tol);
      checks.add("constraint_projectable: " + f.label, pg.projectable,
                 std::max(pg.max_fiber_spread, pg.max_kernel_derivative), 1e-6, "surface points");
    }
    if (led.n_determined > 0) {
      auto ufn = [&led](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
        return led.u_determined(q, v).lpNorm<Eigen::Infinity>();
      };
      ProjectabilityReport pu = is_projectable(ufn, sys, spts, rng, tol);
      checks.add("determined_u_projectable", pu.projectable,
                 std::max(pu.max_fiber_spread, pu.max_kernel_derivative), 1e-6, "surface points");
    }
  }

  // commutator projectability of the reduced field along the gauge directions
  if (led.N0 > 0 && led.status != LedgerStatus::Inconsistent) {
    const Bindings& pt = spts[0];
    Tableau tab = sys.tableau(pt.q, pt.v);
    KernelData kd = kernel_basis(tab, tol);
    if (kd.almost_regular) {
      VectorField Xl = [&ak](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
        return ak.barred_field(q, v);
      };
      for (int n = 0; n < led.N0; ++n) {
        VectorField Gf = [&ak, n](const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
          return ak.Gfield(n, q, v);
        };
        Eigen::VectorXd comm = commutator(Gf, Xl, pt.q, pt.v);
        Eigen::VectorXd horiz =
            (Eigen::MatrixXd::Identity(D, D) - kd.PkerM) * comm.head(D);
        checks.leq("gauge_commutator_vertical_mod_kernel", horiz.lpNorm<Eigen::Infinity>(), 1e-5,
                   "surface point 0");
      }
    }
  }

  // short flow: energy conservation
  if (led.status != LedgerStatus::Inconsistent) {
    IntegrateOptions io;
    io.t0 = 0;
    io.t1 = 1.0;
    io.dt = 1e-3;
    const Bindings& p0 = led.points.at(0);
    Trajectory tr = integrate(sys, led.field(Eigen::VectorXd::Zero(led.n_free)), p0.q,
                              p0.v, io);
    double drift = 0;
    for (double e : tr.energies) drift = std::max(drift, std::abs(e - tr.energies.front()));
    checks.leq("energy_conserved_along_flow", drift, 1e-7, "flow t in [0,1]");
  }

  res.report["checks"] = checks.rows;
  res.exit_code = checks.all_pass ? 0 : 1;
  res.human = human_table(res.report);
  return res;
}

}  // namespace

TolConfig tol_from(const CmdOptions& opts) {
  TolConfig tol;
  tol.eps_rank = 1e-9 * opts.tol_scale;
  return tol;
}

std::vector<Bindings> sample_points(const LagrangianSystem& sys, const SystemSpec& spec, int n,
                                    std::mt19937_64& rng) {
  std::vector<Bindings> pts;
  const int D = spec.dim;
  Eigen::VectorXd q0 = spec.seed_q.size() ? spec.seed_q : Eigen::VectorXd::Ones(D);
  Eigen::VectorXd v0 = spec.seed_v.size() ? spec.seed_v : Eigen::VectorXd::Ones(D);
  int guard = 0;
  while (static_cast<int>(pts.size()) < n && guard < 50 * n) {
    ++guard;
    Eigen::VectorXd q = q0, v = v0;
    for (int i = 0; i < D; ++i) {
      q[i] += 0.3 * (1 + std::abs(q0[i])) * runif(rng, -1, 1);
      v[i] += 0.4 * (1 + std::abs(v0[i])) * runif(rng, -1, 1);
    }
    try {
      Tableau tab = sys.tableau(q, v);
      (void)tab;
      pts.push_back(sys.bindings(q, v));
    } catch (const std::exception&) {
      // degenerate sample (domain error); reject and redraw
    }
  }
  if (pts.empty()) throw std::runtime_error("could not sample any valid phase points near the seed");
  return pts;
}

std::string trajectory_csv(const Trajectory& traj, int dim) {
  std::ostringstream os;
  os << "t";
  for (int i = 1; i <= dim; ++i) os << ",q" << i;
  for (int i = 1; i <= dim; ++i) os << ",v" << i;
  os << ",E";
  size_t ng = traj.residuals.empty() ? 0 : traj.residuals.front().size();
  for (size_t g = 1; g <= ng; ++g) os << ",gamma" << g;
  os << "\n";
  auto put = [&os](double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), x);
    os.write(buf, r.ptr - buf);
  };
  for (size_t i = 0; i < traj.times.size(); ++i) {
    put(traj.times[i]);
    for (int a = 0; a < dim; ++a) {
      os << ',';
      put(traj.qs[i][a]);
    }
    for (int a = 0; a < dim; ++a) {
      os << ',';
      put(traj.vs[i][a]);
    }
    os << ',';
    put(traj.energies[i]);
    for (size_t g = 0; g < ng; ++g) {
      os << ',';
      put(traj.residuals[i][g]);
    }
    os << "\n";
  }
  return os.str();
}

CmdResult run_command(const std::string& verb, const std::string& source,
                      const CmdOptions& opts) {
  try {
    if (verb == "examples") return cmd_examples();
    SystemSpec spec = load_system_source(source);
    if (verb == "analyze") return cmd_analyze(spec, opts);
    if (verb == "constraints") return cmd_constraints(spec, opts);
    if (verb == "integrate") return cmd_integrate(spec, opts);
    if (verb == "project") return cmd_project(spec, opts);
    if (verb == "verify") return cmd_verify(spec, opts);
    CmdResult res;
    res.exit_code = 2;
    res.report["error"] = "unknown command '" + verb + "'";
    res.human = human_table(res.report);
    return res;
  } catch (const ParseError& e) {
    CmdResult res;
    res.exit_code = 2;
    res.report["command"] = verb;
    res.report["error"] = e.what();
    res.human = human_table(res.report);
    return res;
  } catch (const FileParseError& e) {
    CmdResult res;
    res.exit_code = 2;
    res.report["command"] = verb;
    res.report["error"] = e.what();
    res.human = human_table(res.report);
    return res;
  } catch (const InputError& e) {
    CmdResult res;
    res.exit_code = 2;
    res.report["command"] = verb;
    res.report["error"] = e.what();
    res.human = human_table(res.report);
    return res;
  } catch (const std::exception& e) {
    CmdResult res;
    res.exit_code = 1;
    res.report["command"] = verb;
    res.report["error"] = e.what();
    res.human = human_table(res.report);
    return res;
  }
}

}  // namespace almreg
