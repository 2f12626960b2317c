#include "almreg.h"

#include <cstring>
#include <string>

#include "core/catalog.hpp"
#include "core/commands.hpp"

using namespace almreg;

namespace {

thread_local std::string t_last_error;

void set_error(const std::string& msg) { t_last_error = msg; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
almreg_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    set_error(e.what());
    return ALMREG_ERR_PARSE;
  } catch (const FileParseError& e) {
    set_error(e.what());
    return ALMREG_ERR_PARSE;
  } catch (const InputError& e) {
    set_error(e.what());
    return ALMREG_ERR_INVALID_ARG;
  } catch (const EvalDomainError& e) {
    set_error(e.what());
    return ALMREG_ERR_DOMAIN;
  } catch (const NotAlmostRegularError& e) {
    set_error(e.what());
    return ALMREG_ERR_NOT_ALMOST_REGULAR;
  } catch (const NonConstantRankError& e) {
    set_error(e.what());
    return ALMREG_ERR_RANK;
  } catch (const OffSurfaceError& e) {
    set_error(e.what());
    return ALMREG_ERR_NO_CONVERGENCE;
  } catch (const std::exception& e) {
    set_error(e.what());
    return ALMREG_ERR_RUNTIME;
  }
}

Eigen::VectorXd to_vec(const double* x, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = x[i];
  return v;
}

void from_vec(const Eigen::VectorXd& v, double* out) {
  for (int i = 0; i < v.size(); ++i) out[i] = v[i];
}

void from_mat(const Eigen::MatrixXd& m, double* out) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
}

}  // namespace

struct almreg_system {
  SystemSpec spec;
  LagrangianSystem sys;
};

struct almreg_ledger {
  ConstraintLedger led;
};

struct almreg_trajectory {
  Trajectory traj;
  int dim;
};

extern "C" {

const char* almreg_last_error(void) { return t_last_error.c_str(); }

void almreg_string_free(char* s) { std::free(s); }

almreg_status almreg_system_load(const char* source, almreg_system** out) {
  if (!source || !out) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    SystemSpec spec = load_system_source(source);
    *out = new almreg_system{spec, build_from_spec(spec)};
    return ALMREG_OK;
  });
}

almreg_status almreg_system_from_text(const char* text, almreg_system** out) {
  if (!text || !out) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    SystemSpec spec = parse_system_text(text);
    *out = new almreg_system{spec, build_from_spec(spec)};
    return ALMREG_OK;
  });
}

void almreg_system_free(almreg_system* sys) { delete sys; }

int almreg_system_dim(const almreg_system* sys) { return sys ? sys->sys.dim() : 0; }

const char* almreg_system_name(const almreg_system* sys) {
  return sys ? sys->sys.name().c_str() : "";
}

almreg_status almreg_system_seed(const almreg_system* sys, double* q, double* v) {
  if (!sys || !q || !v) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  if (sys->spec.seed_q.size() != sys->sys.dim()) {
    set_error("system definition has no seed point");
    return ALMREG_ERR_INVALID_ARG;
  }
  from_vec(sys->spec.seed_q, q);
  from_vec(sys->spec.seed_v, v);
  return ALMREG_OK;
}

almreg_status almreg_eval_tableau(const almreg_system* sys, const double* q, const double* v,
                                  double* E, double* M, double* F, double* N, double* dEdq,
                                  double* dEdv, double* p) {
  if (!sys || !q || !v) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    Tableau tab = sys->sys.tableau(to_vec(q, D), to_vec(v, D));
    if (E) *E = tab.E;
    if (M) from_mat(tab.M, M);
    if (F) from_mat(tab.F, F);
    if (N) from_mat(tab.N, N);
    if (dEdq) from_vec(tab.dEdq, dEdq);
    if (dEdv) from_vec(tab.dEdv, dEdv);
    if (p) from_vec(tab.p, p);
    return ALMREG_OK;
  });
}

almreg_status almreg_kernel_info(const almreg_system* sys, const double* q, const double* v,
                                 double eps_rank, int* N0, int* Dbar, double* fbar_max,
                                 double* Z) {
  if (!sys || !q || !v) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    TolConfig tol;
    if (eps_rank > 0) tol.eps_rank = eps_rank;
    KernelData kd = kernel_basis(sys->sys.tableau(to_vec(q, D), to_vec(v, D)), tol);
    if (N0) *N0 = kd.N0;
    if (Dbar) *Dbar = kd.Dbar;
    if (fbar_max) *fbar_max = kd.fbar_max;
    if (Z) from_mat(kd.Z, Z);
    return ALMREG_OK;
  });
}

almreg_status almreg_omega_rank(const almreg_system* sys, const double* q, const double* v,
                                double eps_rank, int* rank) {
  if (!sys || !q || !v || !rank) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    TolConfig tol;
    if (eps_rank > 0) tol.eps_rank = eps_rank;
    *rank = omega_rank(sys->sys.tableau(to_vec(q, D), to_vec(v, D)), tol);
    return ALMREG_OK;
  });
}

almreg_status almreg_solvf(const almreg_system* sys, const double* q, const double* v,
                           double* out) {
  if (!sys || !q || !v || !out) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    Tableau tab = sys->sys.tableau(to_vec(q, D), to_vec(v, D));
    KernelData kd = kernel_basis(tab, {});
    from_vec(solvf(sys->sys, kd, tab, {}), out);
    return ALMREG_OK;
  });
}

almreg_status almreg_barred_solvf(const almreg_system* sys, const double* q, const double* v,
                                  double* out) {
  if (!sys || !q || !v || !out) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    Tableau tab = sys->sys.tableau(to_vec(q, D), to_vec(v, D));
    KernelData kd = kernel_basis(tab, {});
    from_vec(barred_solvf(sys->sys, kd, tab, {}), out);
    return ALMREG_OK;
  });
}

almreg_status almreg_legendre(const almreg_system* sys, const double* q, const double* v,
                              double* p) {
  if (!sys || !q || !v || !p) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    from_vec(legendre(sys->sys, to_vec(q, D), to_vec(v, D)).p, p);
    return ALMREG_OK;
  });
}

almreg_status almreg_find_surface(const almreg_system* sys, double* q, double* v) {
  if (!sys || !q || !v) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    const LagrangianSystem& s = sys->sys;
    auto res = [&s](const Eigen::VectorXd& qq, const Eigen::VectorXd& vv) {
      return first_order_residual(s, qq, vv, {});
    };
    SurfaceResult sr = find_surface_point(res, to_vec(q, D), to_vec(v, D), {});
    if (!sr.ok) {
      set_error("surface not found from seed");
      return ALMREG_ERR_NO_CONVERGENCE;
    }
    from_vec(sr.q, q);
    from_vec(sr.v, v);
    return ALMREG_OK;
  });
}

almreg_status almreg_run_constraints(const almreg_system* sys, unsigned seed, int points,
                                     almreg_ledger** out) {
  if (!sys || !out || points < 1) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    std::mt19937_64 rng(seed);
    std::vector<Bindings> pts = sample_points(sys->sys, sys->spec, points, rng);
    *out = new almreg_ledger{run_constraint_algorithm(sys->sys, pts, {})};
    return ALMREG_OK;
  });
}

void almreg_ledger_free(almreg_ledger* led) { delete led; }

int almreg_ledger_nf(const almreg_ledger* led) { return led ? led->led.n_F : 0; }

int almreg_ledger_n_determined(const almreg_ledger* led) {
  return led ? led->led.n_determined : 0;
}

int almreg_ledger_n_free(const almreg_ledger* led) {
  return led ? led->led.n_free : 0;
}

const char* almreg_ledger_status(const almreg_ledger* led) {
  return led ? to_string(led->led.status) : "?";
}

almreg_status almreg_ledger_to_json(const almreg_ledger* led, char** out_json) {
  if (!led || !out_json) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    ojson j;
    j["N0"] = led->led.N0;
    j["n_F"] = led->led.n_F;
    j["status"] = to_string(led->led.status);
    j["n_determined"] = led->led.n_determined;
    j["n_free"] = led->led.n_free;
    j["I_sequence"] = led->led.I_seq;
    ojson funcs = ojson::array();
    for (const auto& f : led->led.funcs) {
      ojson fj;
      fj["label"] = f.label;
      fj["order"] = f.order;
      fj["active"] = f.active;
      funcs.push_back(fj);
    }
    j["constraints"] = funcs;
    *out_json = dup_string(j.dump(2));
    return ALMREG_OK;
  });
}

almreg_status almreg_soelvf(const almreg_system* sys, const almreg_ledger* led, const double* q,
                            const double* v, const double* u_free, double* out) {
  if (!sys || !led || !q || !v || !out) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    Eigen::VectorXd uf = Eigen::VectorXd::Zero(led->led.n_free);
    if (u_free)
      for (int i = 0; i < uf.size(); ++i) uf[i] = u_free[i];
    from_vec(led->led.soelvf_eval(to_vec(q, D), to_vec(v, D), uf), out);
    return ALMREG_OK;
  });
}

almreg_status almreg_integrate(const almreg_system* sys, const almreg_ledger* led,
                               const double* q0, const double* v0, double t0, double t1,
                               double dt, int project_each_step, almreg_trajectory** out) {
  if (!sys || !led || !q0 || !v0 || !out) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    const int D = sys->sys.dim();
    IntegrateOptions io;
    io.t0 = t0;
    io.t1 = t1;
    io.dt = dt;
    io.project_each_step = project_each_step != 0;
    io.residual = led->led.residuals;
    auto residual = led->led.residuals;
    io.projector = [residual](Eigen::VectorXd& q, Eigen::VectorXd& v) {
      SurfaceResult s = find_surface_point(residual, q, v, {});
      if (!s.ok) return false;
      q = s.q;
      v = s.v;
      return true;
    };
    Trajectory traj = integrate(sys->sys, led->led.field(), to_vec(q0, D), to_vec(v0, D), io);
    *out = new almreg_trajectory{std::move(traj), D};
    return ALMREG_OK;
  });
}

void almreg_trajectory_free(almreg_trajectory* traj) { delete traj; }

int almreg_trajectory_size(const almreg_trajectory* traj) {
  return traj ? static_cast<int>(traj->traj.times.size()) : 0;
}

almreg_status almreg_trajectory_row(const almreg_trajectory* traj, int i, double* t, double* q,
                                    double* v, double* E, double* gamma_norm) {
  if (!traj || i < 0 || i >= static_cast<int>(traj->traj.times.size())) {
    set_error("row index out of range");
    return ALMREG_ERR_INVALID_ARG;
  }
  if (t) *t = traj->traj.times[i];
  if (q) from_vec(traj->traj.qs[i], q);
  if (v) from_vec(traj->traj.vs[i], v);
  if (E) *E = traj->traj.energies[i];
  if (gamma_norm)
    *gamma_norm = traj->traj.residuals[i].size()
                      ? traj->traj.residuals[i].lpNorm<Eigen::Infinity>()
                      : 0.0;
  return ALMREG_OK;
}

almreg_status almreg_trajectory_to_csv(const almreg_trajectory* traj, char** out_csv) {
  if (!traj || !out_csv) {
    set_error("null argument");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    *out_csv = dup_string(trajectory_csv(traj->traj, traj->dim));
    return ALMREG_OK;
  });
}

almreg_status almreg_run_command(const char* verb, const char* source, unsigned seed, int points,
                                 double tol_scale, char** out_json, char** out_human,
                                 int* exit_code) {
  if (!verb) {
    set_error("null verb");
    return ALMREG_ERR_INVALID_ARG;
  }
  return guarded([&] {
    CmdOptions opts;
    opts.seed = seed;
    opts.points = points > 0 ? points : 25;
    opts.tol_scale = tol_scale > 0 ? tol_scale : 1.0;
    CmdResult res = run_command(verb, source ? source : "", opts);
    if (out_json) *out_json = dup_string(res.report.dump(2));
    if (out_human) *out_human = dup_string(res.human);
    if (exit_code) *exit_code = res.exit_code;
    return ALMREG_OK;
  });
}

almreg_status almreg_run_integrate_command(const char* source, unsigned seed, int points,
                                           double tol_scale, char** out_json, char** out_human,
                                           int* exit_code, almreg_trajectory** out_traj) {
  return guarded([&] {
    CmdOptions opts;
    opts.seed = seed;
    opts.points = points > 0 ? points : 25;
    opts.tol_scale = tol_scale > 0 ? tol_scale : 1.0;
    CmdResult res = run_command("integrate", source ? source : "", opts);
    if (out_json) *out_json = dup_string(res.report.dump(2));
    if (out_human) *out_human = dup_string(res.human);
    if (exit_code) *exit_code = res.exit_code;
    if (out_traj && res.trajectory) {
      SystemSpec spec = load_system_source(source ? source : "");
      *out_traj = new almreg_trajectory{*res.trajectory, spec.dim};
    } else if (out_traj) {
      *out_traj = nullptr;
    }
    return ALMREG_OK;
  });
}

int almreg_catalog_count(void) { return static_cast<int>(catalog().size()); }

const char* almreg_catalog_name(int i) {
  if (i < 0 || i >= almreg_catalog_count()) return nullptr;
  return catalog()[i].name.c_str();
}

const char* almreg_catalog_blurb(int i) {
  if (i < 0 || i >= almreg_catalog_count()) return nullptr;
  return catalog()[i].blurb.c_str();
}

}  // extern "C"
