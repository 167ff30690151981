#ifndef GREENPOW_H
#define GREENPOW_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GpStatus {
  GP_STATUS_OK = 0,
  GP_STATUS_NULL_POINTER = 1,
  GP_STATUS_INVALID_ARGUMENT = 2,
  GP_STATUS_INVALID_UTF8 = 3,
  GP_STATUS_SIMULATION_FAILED = 4,
  GP_STATUS_PANIC = 5,
} GpStatus;

/**
 * Shape of the fraction of miners still unaware of a new block.
 */
typedef enum GpUnawareModel {
  GP_UNAWARE_MODEL_EXPONENTIAL = 0,
  GP_UNAWARE_MODEL_LINEAR = 1,
  GP_UNAWARE_MODEL_STEP = 2,
} GpUnawareModel;

/**
 * A simulation configuration.
 */
typedef struct GpConfig GpConfig;

/**
 * The outcome of one simulated replication.
 */
typedef struct GpReport GpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string that must not be freed.
 */
const char *gp_version(void);

/**
 * Message for the last failed call on this thread, or null. The caller
 * owns the result and frees it with [`gp_string_free`].
 */
char *gp_last_error(void);

/**
 * # Safety
 * `s` is null or a string returned by this library that was not freed yet.
 */
void gp_string_free(char *s);

/**
 * Default configuration: 100 miners, uniform power, COUNT(5).
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum GpStatus gp_config_new(struct GpConfig **out);

/**
 * Parses a JSON configuration, the same format the command line reads.
 *
 * # Safety
 * `json` is a NUL-terminated string and `out` a valid pointer.
 */
enum GpStatus gp_config_from_json(const char *json, struct GpConfig **out);

/**
 * # Safety
 * `cfg` is a live configuration and `out` a valid pointer. The string
 * written to `out` is freed with [`gp_string_free`].
 */
enum GpStatus gp_config_to_json(const struct GpConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` is null or a configuration not yet freed.
 */
void gp_config_free(struct GpConfig *cfg);

/**
 * # Safety
 * `cfg` is a live configuration.
 */
enum GpStatus gp_config_set_miners(struct GpConfig *cfg, size_t miners);

/**
 * Selects the first `k` runners-up.
 *
 * # Safety
 * `cfg` is a live configuration.
 */
enum GpStatus gp_config_set_k(struct GpConfig *cfg, size_t k);

/**
 * Selects every miner that solves within `eta` seconds of the winner.
 *
 * # Safety
 * `cfg` is a live configuration.
 */
enum GpStatus gp_config_set_eta(struct GpConfig *cfg, double eta);

/**
 * # Safety
 * `cfg` is a live configuration.
 */
enum GpStatus gp_config_set_blocks(struct GpConfig *cfg, uint64_t blocks);

/**
 * # Safety
 * `cfg` is a live configuration.
 */
enum GpStatus gp_config_set_seed(struct GpConfig *cfg, uint64_t seed);

/**
 * Second-round timeout in seconds; zero or a negative value disables it.
 *
 * # Safety
 * `cfg` is a live configuration.
 */
enum GpStatus gp_config_set_timeout(struct GpConfig *cfg, double seconds);

/**
 * Runs the first replication of `cfg`.
 *
 * # Safety
 * `cfg` is a live configuration and `out` a valid pointer.
 */
enum GpStatus gp_simulate(const struct GpConfig *cfg, struct GpReport **out);

/**
 * # Safety
 * `report` is null or a report not yet freed.
 */
void gp_report_free(struct GpReport *report);

/**
 * Energy saved against plain mining, in percent.
 *
 * # Safety
 * `report` is a live report and `out` a valid pointer.
 */
enum GpStatus gp_report_saving_pct(const struct GpReport *report, double *out);

/**
 * Canonical chain length.
 *
 * # Safety
 * `report` is a live report and `out` a valid pointer.
 */
enum GpStatus gp_report_blocks(const struct GpReport *report, uint64_t *out);

/**
 * Epochs whose second block came after the timeout.
 *
 * # Safety
 * `report` is a live report and `out` a valid pointer.
 */
enum GpStatus gp_report_timeout_epochs(const struct GpReport *report, uint64_t *out);

/**
 * Fork rates at first-round and second-round heights.
 *
 * # Safety
 * `report` is a live report; `first` and `second` are valid pointers.
 */
enum GpStatus gp_report_fork_rates(const struct GpReport *report, double *first, double *second);

/**
 * Summary statistics as JSON, freed with [`gp_string_free`].
 *
 * # Safety
 * `report` is a live report and `out` a valid pointer.
 */
enum GpStatus gp_report_summary_json(const struct GpReport *report, char **out);

/**
 * Number of epochs the run completed.
 *
 * # Safety
 * `report` is a live report and `out` a valid pointer.
 */
enum GpStatus gp_report_epochs(const struct GpReport *report, uint64_t *out);

/**
 * Wait after which a block has been found with probability `p`.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum GpStatus gp_timeout_wait(double lambda, double p, double *out);

/**
 * Probability that a block is forked, given the per-unit block
 * probability `p_b` and the time constant of the unaware fraction.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum GpStatus gp_fork_probability(enum GpUnawareModel model, double param, double p_b, double *out);

/**
 * Energy per plain proof-of-work block, `power / lambda`.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum GpStatus gp_pow_block_energy(double total_power, double lambda, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREENPOW_H */
