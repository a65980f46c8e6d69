#ifndef BARGAIN_H
#define BARGAIN_H

#include <stddef.h>

// Result code of every fallible call.
typedef enum BargainStatus {
  BARGAIN_STATUS_OK = 0,
  BARGAIN_STATUS_NULL_POINTER = 1,
  BARGAIN_STATUS_DOMAIN = 2,
  BARGAIN_STATUS_UNBOUNDED_MARKUP = 3,
  BARGAIN_STATUS_SINGULAR_PASSTHROUGH = 4,
  BARGAIN_STATUS_INVALID_NETWORK = 5,
  BARGAIN_STATUS_NO_CONVERGENCE = 6,
  BARGAIN_STATUS_INVALID_DATA = 7,
  BARGAIN_STATUS_INVALID_CONFIG = 8,
  BARGAIN_STATUS_IO = 9,
  BARGAIN_STATUS_INVALID_UTF8 = 10,
  BARGAIN_STATUS_OUT_OF_RANGE = 11,
  BARGAIN_STATUS_NOT_SOLVED = 12,
  BARGAIN_STATUS_PANIC = 13,
  BARGAIN_STATUS_OTHER = 14,
} BargainStatus;

// A trade network and, once solved, its equilibrium.
typedef struct BargainNetwork BargainNetwork;

// Calibrated elasticities and structural parameters.
typedef struct BargainParams BargainParams;

typedef struct BargainMarkup {
  double mu_oligopoly;
  double mu_oligopsony;
  double lambda;
  double omega;
  double mu;
} BargainMarkup;

typedef struct BargainPassthrough {
  double epsilon;
  double gamma_oligopoly;
  double gamma_oligopsony;
  double gamma_omega;
  double markup_elasticity;
  double cost_elasticity;
  double passthrough;
  // NaN when 1 + Γ is not positive.
  double passthrough_markup_only;
  // NaN when 1 + Λ is not positive.
  double passthrough_cost_only;
} BargainPassthrough;

typedef struct BargainEdge {
  double price;
  double quantity;
  double s;
  double x;
  double markup;
  double marginal_cost;
  double tariff;
} BargainEdge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty after a success. The
// pointer stays valid until the next call on the same thread.
const char *bargain_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *bargain_version(void);

// Creates a parameter set. Requires ν > 1, 0 < γ ≤ ϱ ≤ 1, ρ > η,
// 0 ≤ φ ≤ 1 and 0 < θ ≤ 1; the endpoints of φ give the limit regimes.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum BargainStatus bargain_params_new(double nu,
                                      double gamma,
                                      double rho,
                                      double varrho,
                                      double phi,
                                      double theta,
                                      struct BargainParams **out);

// Releases a parameter set; null is ignored.
//
// # Safety
// `params` must be null or a handle from [`bargain_params_new`] not yet freed.
void bargain_params_free(struct BargainParams *params);

// Outer-nest elasticity η implied by the calibration.
//
// # Safety
// `params` must be a live handle and `out` valid for writing.
enum BargainStatus bargain_params_eta(const struct BargainParams *params, double *out);

// Bilateral markup and its components at supplier share `s` and buyer share `x`.
//
// # Safety
// `params` must be a live handle and `out` valid for writing.
enum BargainStatus bargain_markup(const struct BargainParams *params,
                                  double s,
                                  double x,
                                  struct BargainMarkup *out);

// Pass-through elasticity Φ = 1/(1+Γ+Λ) and its parts.
//
// # Safety
// `params` must be a live handle and `out` valid for writing.
enum BargainStatus bargain_passthrough(const struct BargainParams *params,
                                       double s,
                                       double x,
                                       struct BargainPassthrough *out);

// Parses a network from JSON with `exporters`, `importers` and `edges` arrays.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writing.
enum BargainStatus bargain_network_from_json(const char *json, struct BargainNetwork **out);

// Releases a network; null is ignored.
//
// # Safety
// `net` must be null or a handle from [`bargain_network_from_json`] not yet freed.
void bargain_network_free(struct BargainNetwork *net);

// Number of edges in the network.
//
// # Safety
// `net` must be a live handle and `out` valid for writing.
enum BargainStatus bargain_network_edge_count(const struct BargainNetwork *net, size_t *out);

// Solves the price equilibrium; `tol <= 0` and `max_iter == 0` select the
// defaults. On success the equilibrium is stored in the handle.
//
// # Safety
// `net` and `params` must be live handles; `iterations` may be null.
enum BargainStatus bargain_network_solve(struct BargainNetwork *net,
                                         const struct BargainParams *params,
                                         double tol,
                                         size_t max_iter,
                                         size_t *iterations);

// Equilibrium outcome of one edge, in input order.
//
// # Safety
// `net` must be a live handle and `out` valid for writing.
enum BargainStatus bargain_network_edge(const struct BargainNetwork *net,
                                        size_t edge,
                                        struct BargainEdge *out);

// Finite-difference pass-through of one edge's tariff into its own price,
// all other prices held at the stored equilibrium.
//
// # Safety
// `net` and `params` must be live handles and `out` valid for writing.
enum BargainStatus bargain_network_direct_passthrough(const struct BargainNetwork *net,
                                                      const struct BargainParams *params,
                                                      size_t edge,
                                                      double dln_t,
                                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BARGAIN_H */
