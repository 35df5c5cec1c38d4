#ifndef FAIRLIQ_H
#define FAIRLIQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlPriceNoise {
  FL_PRICE_NOISE_GAUSSIAN = 0,
  FL_PRICE_NOISE_RADEMACHER = 1,
  FL_PRICE_NOISE_ZERO = 2,
} FlPriceNoise;

typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_PARAMS = 2,
  FL_STATUS_OUT_OF_RANGE = 3,
  FL_STATUS_BAD_STATE = 4,
  FL_STATUS_SHAPE_MISMATCH = 5,
  FL_STATUS_CONTRACT = 6,
  FL_STATUS_NON_FINITE = 7,
  FL_STATUS_BUFFER_TOO_SMALL = 8,
  FL_STATUS_PANIC = 9,
  FL_STATUS_OTHER = 10,
} FlStatus;

/**
 * Opaque environment handle.
 */
typedef struct FlEnv FlEnv;

/**
 * Market parameters, field for field. `num_trades` is N; `tau` must equal
 * `liquidation_horizon_days / num_trades`.
 */
typedef struct FlMarketParams {
  double initial_price;
  double annual_volatility_fraction;
  double bid_ask_spread;
  double daily_volume;
  double trading_days_per_year;
  double liquidation_horizon_days;
  uint32_t num_trades;
  double tau;
  double epsilon;
  double eta;
  double gamma;
  double sigma_step;
} FlMarketParams;

/**
 * Outcome of one environment step, excluding per-agent vectors.
 */
typedef struct FlStepInfo {
  double execution_price;
  double new_price;
  bool done;
} FlStepInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length in bytes (excluding the terminator), or 0 when there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t fl_last_error(char *buf, size_t len);

/**
 * Static NUL-terminated version string.
 */
const char *fl_version(void);

/**
 * Six-client reference market: 60 days, 240 trades.
 *
 * # Safety
 * `out` must be null or valid for one write.
 */
enum FlStatus fl_market_params_reference(struct FlMarketParams *out);

/**
 * Derives impact and volatility parameters from market conventions:
 * ε = spread/2, η = spread/(0.01·DV), γ = spread/(0.1·DV),
 * σ = annual_vol/√days·P0, τ = T/N.
 *
 * # Safety
 * `out` must be null or valid for one write.
 */
enum FlStatus fl_market_params_from_conventions(double initial_price,
                                                double annual_volatility_fraction,
                                                double bid_ask_spread,
                                                double daily_volume,
                                                double trading_days_per_year,
                                                double liquidation_horizon_days,
                                                uint32_t num_trades,
                                                struct FlMarketParams *out);

/**
 * Creates an environment for `num_agents` sellers. On success `*out` owns a
 * handle that must be released with [`fl_env_free`].
 *
 * # Safety
 * `params` must point to a valid struct, `inventories` to `num_agents`
 * values, and `out` must be valid for one write.
 */
enum FlStatus fl_env_create(const struct FlMarketParams *params,
                            const double *inventories,
                            size_t num_agents,
                            size_t return_window,
                            enum FlPriceNoise noise,
                            uint64_t seed,
                            struct FlEnv **out);

/**
 * Releases a handle from [`fl_env_create`]. Null is ignored.
 *
 * # Safety
 * `env` must be null or a live handle not used afterwards.
 */
void fl_env_free(struct FlEnv *env);

/**
 * Starts a new episode with the original inventories. The shock stream
 * continues rather than rewinding.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
enum FlStatus fl_env_reset(struct FlEnv *env);

/**
 * Number of agents, written to `out`.
 *
 * # Safety
 * `env` must be null or a live handle; `out` valid for one write.
 */
enum FlStatus fl_env_num_agents(const struct FlEnv *env, size_t *out);

/**
 * Length of one observation vector (return window + 2).
 *
 * # Safety
 * `env` must be null or a live handle; `out` valid for one write.
 */
enum FlStatus fl_env_observation_dim(const struct FlEnv *env, size_t *out);

/**
 * Advances one step with selling fractions `actions[0..num_agents]`.
 * Executed shares and cash captured per agent are written to the two
 * output arrays, each of length `num_agents`; either may be null.
 *
 * # Safety
 * Pointers must be null or valid for the given lengths.
 */
enum FlStatus fl_env_step(struct FlEnv *env,
                          const double *actions,
                          size_t num_agents,
                          double *executed_out,
                          double *captures_out,
                          struct FlStepInfo *info_out);

/**
 * Writes agent `agent`'s observation `[returns.., m, l]` into `buf`, which
 * must hold at least [`fl_env_observation_dim`] values.
 *
 * # Safety
 * `env` must be null or a live handle; `buf` valid for `len` values.
 */
enum FlStatus fl_env_observe(const struct FlEnv *env, size_t agent, double *buf, size_t len);

/**
 * Whether the episode has finished.
 *
 * # Safety
 * `env` must be null or a live handle; `out` valid for one write.
 */
enum FlStatus fl_env_is_done(const struct FlEnv *env, bool *out);

/**
 * Optimal sales over `steps` trades for `shares`, written to
 * `sales_out[0..steps]`.
 *
 * # Safety
 * `params` must be valid; `sales_out` valid for `len` values.
 */
enum FlStatus fl_optimal_trajectory(const struct FlMarketParams *params,
                                    double shares,
                                    size_t steps,
                                    double risk_aversion,
                                    double *sales_out,
                                    size_t len);

/**
 * U = E + λV of the optimal plan; zero for zero shares.
 *
 * # Safety
 * `params` must be valid; `out` valid for one write.
 */
enum FlStatus fl_optimal_utility(const struct FlMarketParams *params,
                                 double shares,
                                 size_t steps,
                                 double risk_aversion,
                                 double *out);

/**
 * Expected shortfall, variance and utility of an arbitrary schedule
 * `sales[0..steps]` liquidating `shares`.
 *
 * # Safety
 * `params` must be valid; `sales` valid for `steps` values; outputs null
 * or valid for one write.
 */
enum FlStatus fl_schedule_utility(const struct FlMarketParams *params,
                                  double shares,
                                  const double *sales,
                                  size_t steps,
                                  double risk_aversion,
                                  double *shortfall_out,
                                  double *variance_out,
                                  double *utility_out);

/**
 * `U(x*_prev) − U(x*_new)` for one step.
 *
 * # Safety
 * `params` must be valid; `out` valid for one write.
 */
enum FlStatus fl_step_reward(const struct FlMarketParams *params,
                             double prev_inventory,
                             size_t prev_steps,
                             double new_inventory,
                             size_t new_steps,
                             double risk_aversion,
                             double *out);

/**
 * GGI of `payoffs` with weights built from `initial_shares`, both of
 * length `n`.
 *
 * # Safety
 * Arrays must be valid for `n` values; `out` valid for one write.
 */
enum FlStatus fl_ggi(const double *payoffs,
                     const double *initial_shares,
                     size_t n,
                     double tie_epsilon,
                     double *out);

/**
 * Writes `r_j − share_j·G(r)` into `adjusted_out[0..n]`.
 *
 * # Safety
 * Arrays must be valid for `n` values.
 */
enum FlStatus fl_adjust_rewards(const double *rewards,
                                const double *initial_shares,
                                size_t n,
                                double tie_epsilon,
                                double *adjusted_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRLIQ_H */
