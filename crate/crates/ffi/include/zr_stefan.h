#ifndef ZR_STEFAN_H
#define ZR_STEFAN_H

#include <stdint.h>
#include <stddef.h>

// Jump-rate family selector.
typedef enum ZrsRate {
  // `g(k) = k`.
  ZRS_RATE_LINEAR = 0,
  // `g(k) = k + a 1{k >= 1}`.
  ZRS_RATE_AFFINE = 1,
} ZrsRate;

// Status codes returned by every function.
typedef enum ZrsStatus {
  ZRS_STATUS_OK = 0,
  ZRS_STATUS_NULL_POINTER = 1,
  // Argument outside the mathematical domain (bad density, site, size).
  ZRS_STATUS_DOMAIN = 2,
  // Invalid configuration or parameters.
  ZRS_STATUS_INVALID_CONFIG = 3,
  // Event budget exhausted before the horizon.
  ZRS_STATUS_BUDGET_EXCEEDED = 4,
  // Newton or linear solver failure.
  ZRS_STATUS_SOLVER = 5,
  // A maintained invariant (bounds, conservation) was violated.
  ZRS_STATUS_INVARIANT = 6,
  // File system or serialization failure.
  ZRS_STATUS_IO = 7,
  ZRS_STATUS_PANIC = 8,
} ZrsStatus;

// Semi-discrete reaction-diffusion system with its current state.
typedef struct ZrsPde ZrsPde;

// Particle system started from the product measure with profiles `(u, v)`.
typedef struct ZrsSimulator ZrsSimulator;

// Backward-Euler Stefan solver with its current state `w`.
typedef struct ZrsStefan ZrsStefan;

// Thermodynamic table of one jump rate up to density `max_density`.
typedef struct ZrsThermo ZrsThermo;

// Model parameters shared by the simulator and PDE constructors.
typedef struct ZrsModel {
  size_t dim;
  size_t side;
  double k;
  double epsilon;
  enum ZrsRate rate;
  // Offset of the affine rate; ignored for the linear one.
  double a;
} ZrsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL
// terminated, truncated to `len - 1` bytes) and returns the full message
// length in bytes. `buf` may be null to query the length.
size_t zrs_last_error_message(char *buf, size_t len);

// Static NUL-terminated version string.
const char *zrs_version(void);

enum ZrsStatus zrs_thermo_new(enum ZrsRate rate,
                              double a,
                              double max_density,
                              struct ZrsThermo **out);

void zrs_thermo_free(struct ZrsThermo *h);

// Fugacity `φ(ρ)`.
enum ZrsStatus zrs_thermo_phi(const struct ZrsThermo *h, double rho, double *out);

// Mean density `ρ(α)`.
enum ZrsStatus zrs_thermo_density(const struct ZrsThermo *h, double alpha, double *out);

// Partition function `Z_α`.
enum ZrsStatus zrs_thermo_partition(const struct ZrsThermo *h, double alpha, double *out);

// `u` and `v` hold `side^dim` site densities each.
enum ZrsStatus zrs_simulator_new(const struct ZrsModel *model,
                                 const double *u,
                                 const double *v,
                                 size_t len,
                                 uint64_t seed,
                                 struct ZrsSimulator **out);

void zrs_simulator_free(struct ZrsSimulator *h);

// Runs until time `horizon` or until `budget` further events fire.
enum ZrsStatus zrs_simulator_run(struct ZrsSimulator *h, double horizon, uint64_t budget);

// Current time and particle totals; any output pointer may be null.
enum ZrsStatus zrs_simulator_state(const struct ZrsSimulator *h,
                                   double *time,
                                   uint64_t *n1,
                                   uint64_t *n2);

// Copies the occupations into caller arrays of length `len`.
enum ZrsStatus zrs_simulator_occupations(const struct ZrsSimulator *h,
                                         uint32_t *eta1,
                                         uint8_t *eta2,
                                         size_t len);

// `u`, `v` hold `side^dim` values; `m_v` bounds `v` (at most 1).
enum ZrsStatus zrs_pde_new(const struct ZrsModel *model,
                           double m_u,
                           double m_v,
                           const double *u,
                           const double *v,
                           size_t len,
                           struct ZrsPde **out);

void zrs_pde_free(struct ZrsPde *h);

// Explicit stability bound of the system.
enum ZrsStatus zrs_pde_stable_dt(const struct ZrsPde *h, double *out);

// Advances by `duration`; `semi_implicit != 0` selects the semi-implicit
// scheme, `dt <= 0` the explicit stability bound.
enum ZrsStatus zrs_pde_advance(struct ZrsPde *h, double duration, double dt, int32_t semi_implicit);

// Copies `u`, `v` into caller arrays; `time` and `reaction` (the running
// `∫ N^{-d} Σ K u v dt`) may be null.
enum ZrsStatus zrs_pde_state(const struct ZrsPde *h,
                             double *u,
                             double *v,
                             size_t len,
                             double *time,
                             double *reaction);

// `w` holds `side^dim` values, each at most `m_u`.
enum ZrsStatus zrs_stefan_new(size_t dim,
                              size_t side,
                              enum ZrsRate rate,
                              double a,
                              double m_u,
                              double dt,
                              const double *w,
                              size_t len,
                              struct ZrsStefan **out);

void zrs_stefan_free(struct ZrsStefan *h);

enum ZrsStatus zrs_stefan_advance(struct ZrsStefan *h, double duration);

enum ZrsStatus zrs_stefan_state(const struct ZrsStefan *h, double *w, size_t len, double *time);

// Loads a TOML plan, runs it and writes its outputs.
enum ZrsStatus zrs_run_config(const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZR_STEFAN_H */
