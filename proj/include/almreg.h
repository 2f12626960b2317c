/*
 * almreg - analysis of dynamical systems with almost regular Lagrangians.
 *
 * C API over the core library: opaque handles, integer status codes,
 * thread-local error messages. All array arguments are caller-allocated;
 * matrices are row-major. Strings returned through char** are heap
 * allocated and must be released with almreg_string_free.
 */
#ifndef ALMREG_H
#define ALMREG_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined _WIN32
#define ALMREG_API __declspec(dllexport)
#else
#define ALMREG_API __attribute__((visibility("default")))
#endif

typedef enum almreg_status {
  ALMREG_OK = 0,
  ALMREG_ERR_PARSE = 1,          /* expression or file syntax error */
  ALMREG_ERR_DOMAIN = 2,         /* evaluation domain error */
  ALMREG_ERR_DIM = 3,            /* dimension mismatch */
  ALMREG_ERR_INVALID_ARG = 4,    /* null pointer / bad argument */
  ALMREG_ERR_NOT_ALMOST_REGULAR = 5,
  ALMREG_ERR_NO_CONVERGENCE = 6, /* surface / fiber solve failed */
  ALMREG_ERR_RANK = 7,           /* kernel rank changed across points */
  ALMREG_ERR_RUNTIME = 8
} almreg_status;

typedef struct almreg_system almreg_system;
typedef struct almreg_ledger almreg_ledger;
typedef struct almreg_trajectory almreg_trajectory;

/* Message for the last failing call on this thread. */
ALMREG_API const char* almreg_last_error(void);

ALMREG_API void almreg_string_free(char* s);

/* ----- systems ----- */

/* source: a .toy file path or "@name" for a built-in catalog system. */
ALMREG_API almreg_status almreg_system_load(const char* source, almreg_system** out);
/* text: full contents of a .toy file. */
ALMREG_API almreg_status almreg_system_from_text(const char* text, almreg_system** out);
ALMREG_API void almreg_system_free(almreg_system* sys);

ALMREG_API int almreg_system_dim(const almreg_system* sys);
ALMREG_API const char* almreg_system_name(const almreg_system* sys);
/* seed point from the definition; q and v each hold dim entries. */
ALMREG_API almreg_status almreg_system_seed(const almreg_system* sys, double* q, double* v);

/* ----- pointwise evaluation ----- */

/* Any output pointer may be NULL to skip it. M, F, N are dim*dim row-major. */
ALMREG_API almreg_status almreg_eval_tableau(const almreg_system* sys, const double* q,
                                             const double* v, double* E, double* M, double* F,
                                             double* N, double* dEdq, double* dEdv, double* p);

/* Kernel structure at a point. Z (if non-NULL) receives N0*dim row-major
 * orthonormal kernel rows; pass the value from a first call with Z=NULL to
 * size the buffer. eps_rank <= 0 selects the default threshold. */
ALMREG_API almreg_status almreg_kernel_info(const almreg_system* sys, const double* q,
                                            const double* v, double eps_rank, int* N0, int* Dbar,
                                            double* fbar_max, double* Z);

ALMREG_API almreg_status almreg_omega_rank(const almreg_system* sys, const double* q,
                                           const double* v, double eps_rank, int* rank);

/* Second-order fields; out holds 2*dim entries (dq | dv). u may be NULL for
 * the reduced field; otherwise it holds one entry per kernel direction. */
ALMREG_API almreg_status almreg_solvf(const almreg_system* sys, const double* q, const double* v,
                                      double* out);
ALMREG_API almreg_status almreg_barred_solvf(const almreg_system* sys, const double* q,
                                             const double* v, double* out);

/* Legendre map: p receives dim entries. */
ALMREG_API almreg_status almreg_legendre(const almreg_system* sys, const double* q,
                                         const double* v, double* p);

/* Project (q, v) onto the first-order constraint surface in place. */
ALMREG_API almreg_status almreg_find_surface(const almreg_system* sys, double* q, double* v);

/* ----- constraint analysis ----- */

ALMREG_API almreg_status almreg_run_constraints(const almreg_system* sys, unsigned seed,
                                                int points, almreg_ledger** out);
ALMREG_API void almreg_ledger_free(almreg_ledger* led);
ALMREG_API int almreg_ledger_nf(const almreg_ledger* led);
ALMREG_API int almreg_ledger_n_determined(const almreg_ledger* led);
ALMREG_API int almreg_ledger_n_free(const almreg_ledger* led);
ALMREG_API const char* almreg_ledger_status(const almreg_ledger* led);
ALMREG_API almreg_status almreg_ledger_to_json(const almreg_ledger* led, char** out_json);

/* SOELVF with ledger-determined multipliers plus u_free along the free
 * directions (u_free may be NULL). out holds 2*dim entries. */
ALMREG_API almreg_status almreg_soelvf(const almreg_system* sys, const almreg_ledger* led,
                                       const double* q, const double* v, const double* u_free,
                                       double* out);

/* ----- integration ----- */

ALMREG_API almreg_status almreg_integrate(const almreg_system* sys, const almreg_ledger* led,
                                          const double* q0, const double* v0, double t0,
                                          double t1, double dt, int project_each_step,
                                          almreg_trajectory** out);
ALMREG_API void almreg_trajectory_free(almreg_trajectory* traj);
ALMREG_API int almreg_trajectory_size(const almreg_trajectory* traj);
ALMREG_API almreg_status almreg_trajectory_row(const almreg_trajectory* traj, int i, double* t,
                                               double* q, double* v, double* E,
                                               double* gamma_norm);
ALMREG_API almreg_status almreg_trajectory_to_csv(const almreg_trajectory* traj,
                                                  char** out_csv);

/* ----- command layer (what the CLI runs) ----- */

/* verb: analyze | constraints | integrate | project | verify | examples.
 * source as in almreg_system_load (ignored for examples).
 * exit_code: 0 all-pass, 1 any FAIL, 2 input error. Both output strings are
 * optional. */
ALMREG_API almreg_status almreg_run_command(const char* verb, const char* source, unsigned seed,
                                            int points, double tol_scale, char** out_json,
                                            char** out_human, int* exit_code);

/* As above, but also returns the trajectory produced by "integrate". */
ALMREG_API almreg_status almreg_run_integrate_command(const char* source, unsigned seed,
                                                      int points, double tol_scale,
                                                      char** out_json, char** out_human,
                                                      int* exit_code,
                                                      almreg_trajectory** out_traj);

ALMREG_API int almreg_catalog_count(void);
ALMREG_API const char* almreg_catalog_name(int i);
ALMREG_API const char* almreg_catalog_blurb(int i);

#ifdef __cplusplus
}
#endif

#endif /* ALMREG_H */
