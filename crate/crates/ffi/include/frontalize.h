#ifndef FRONTALIZE_H
#define FRONTALIZE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FzStatus {
  FZ_STATUS_OK = 0,
  FZ_STATUS_NULL_POINTER = 1,
  FZ_STATUS_INVALID_ARGUMENT = 2,
  FZ_STATUS_CONFIG = 3,
  FZ_STATUS_IO = 4,
  FZ_STATUS_NO_FACE = 5,
  FZ_STATUS_DEGENERATE = 6,
  FZ_STATUS_OUT_OF_RANGE = 7,
  FZ_STATUS_PANIC = 8,
} FzStatus;

typedef enum FzMode {
  FZ_MODE_GROUNDED = 0,
  FZ_MODE_PERSON_FOLLOWING = 1,
  FZ_MODE_FRONTALIZING = 2,
} FzMode;

typedef struct FzRunLog FzRunLog;

typedef struct FzScenario FzScenario;

/**
 * World pose: metres, z up, yaw in radians counter-clockwise.
 */
typedef struct FzPose {
  double x;
  double y;
  double z;
  double yaw;
} FzPose;

/**
 * One simulation step. `range_m` and `bearing_rad` are NaN without a person.
 */
typedef struct FzSample {
  double time_s;
  struct FzPose pose;
  enum FzMode mode;
  double cmd_vx_mps;
  double cmd_vy_mps;
  double cmd_yaw_rate_radps;
  double range_m;
  double bearing_rad;
} FzSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *fz_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fz_version(void);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum FzStatus fz_scenario_default(struct FzScenario **out);

/**
 * Parses and validates a scenario. Relative calibration paths resolve against
 * the working directory.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid for writes.
 */
enum FzStatus fz_scenario_from_toml(const char *toml, struct FzScenario **out);

/**
 * # Safety
 * `scenario` must come from this library.
 */
enum FzStatus fz_scenario_set_seed(struct FzScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be null or come from this library, and not be used again.
 */
void fz_scenario_free(struct FzScenario *scenario);

/**
 * Runs the closed-loop simulation.
 *
 * # Safety
 * `scenario` must come from this library and `out` be valid for writes.
 */
enum FzStatus fz_run(const struct FzScenario *scenario, struct FzRunLog **out);

/**
 * # Safety
 * `log` must come from this library and `len` be valid for writes.
 */
enum FzStatus fz_runlog_len(const struct FzRunLog *log, size_t *len);

/**
 * # Safety
 * `log` must come from this library and `out` be valid for writes.
 */
enum FzStatus fz_runlog_sample(const struct FzRunLog *log, size_t index, struct FzSample *out);

/**
 * Writes every CSV log into `dir`, creating it if needed.
 *
 * # Safety
 * `log` must come from this library and `dir` be a NUL-terminated path.
 */
enum FzStatus fz_runlog_write_csv(const struct FzRunLog *log, const char *dir);

/**
 * # Safety
 * `log` must be null or come from this library, and not be used again.
 */
void fz_runlog_free(struct FzRunLog *log);

/**
 * Frontalization error of the scenario's person seen from `uav`, using the
 * scenario camera, surface and raster. Fails with `FZ_STATUS_NO_FACE` when no
 * face cell is visible.
 *
 * # Safety
 * `scenario` must come from this library, `uav` be readable and `error`
 * writable.
 */
enum FzStatus fz_score_view(const struct FzScenario *scenario,
                            const struct FzPose *uav,
                            double *error);

/**
 * UAV pose at `range_m` and `bearing_rad` from the scenario's person, facing them.
 *
 * # Safety
 * `scenario` must come from this library and `out` be valid for writes.
 */
enum FzStatus fz_station_pose(const struct FzScenario *scenario,
                              double range_m,
                              double bearing_rad,
                              struct FzPose *out);

/**
 * # Safety
 * `a` and `b` must each point to `len` doubles and `out` be writable.
 */
enum FzStatus fz_cosine_similarity(const double *a, const double *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRONTALIZE_H */
