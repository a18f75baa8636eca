#ifndef ANCHORPOSE_H
#define ANCHORPOSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ApStatus {
  AP_STATUS_OK = 0,
  AP_STATUS_NULL_POINTER = 1,
  AP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed JSON or a document that does not match its schema.
   */
  AP_STATUS_PARSE = 3,
  /**
   * Output buffer length does not match.
   */
  AP_STATUS_BUFFER_SIZE = 4,
  /**
   * A Rust panic was caught at the boundary; the handle may be unusable.
   */
  AP_STATUS_INTERNAL = 5,
} ApStatus;

/**
 * Transition-duration profile for trajectory compilation.
 */
typedef enum ApProfile {
  AP_PROFILE_SIMULATION = 0,
  AP_PROFILE_HARDWARE = 1,
} ApProfile;

typedef struct ApEnvironment ApEnvironment;

typedef struct ApModel ApModel;

/**
 * A protocol session: feed it client lines, read back server lines.
 */
typedef struct ApSession ApSession;

typedef struct ApTrajectory ApTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call on this thread.
 */
const char *ap_last_error(void);

/**
 * Library version as a static string.
 */
const char *ap_version(void);

/**
 * Release a string returned by this library. Null is ignored.
 */
void ap_string_free(char *s);

/**
 * Parse a robot model document.
 */
enum ApStatus ap_model_from_json(const char *json, struct ApModel **out);

void ap_model_free(struct ApModel *model);

/**
 * Number of configuration coordinates, or 0 for a null handle.
 */
size_t ap_model_dof(const struct ApModel *model);

/**
 * Copy the nominal configuration into `q` (length must equal the dof).
 */
enum ApStatus ap_model_nominal(const struct ApModel *model, double *q, size_t len);

/**
 * World pose of a body as `[x, y, z, qi, qj, qk, qw]`.
 */
enum ApStatus ap_model_body_pose(const struct ApModel *model,
                                 const double *q,
                                 size_t q_len,
                                 const char *body,
                                 double *pose,
                                 size_t pose_len);

/**
 * Whole-body center of mass, `com[3]`.
 */
enum ApStatus ap_model_center_of_mass(const struct ApModel *model,
                                      const double *q,
                                      size_t q_len,
                                      double *com,
                                      size_t com_len);

/**
 * Parse an environment document (a polytope list or `{name, polytopes}`).
 */
enum ApStatus ap_environment_from_json(const char *name,
                                       const char *json,
                                       struct ApEnvironment **out);

/**
 * An environment with no obstacles.
 */
enum ApStatus ap_environment_empty(struct ApEnvironment **out);

void ap_environment_free(struct ApEnvironment *env);

/**
 * Start a session at the model's nominal configuration, or from a script
 * when `script_json` is not null. The session keeps its own references to
 * the model and environment; their handles may be freed afterwards.
 */
enum ApStatus ap_session_new(const struct ApModel *model,
                             const struct ApEnvironment *env,
                             const char *script_json,
                             struct ApSession **out);

void ap_session_free(struct ApSession *session);

/**
 * Handle one client protocol line at time `now` (seconds, monotonic).
 * `*response` receives the server lines, newline-terminated, and must be
 * released with `ap_string_free`. Protocol errors are reported inside the
 * response, not as a failed status.
 */
enum ApStatus ap_session_handle_line(struct ApSession *session,
                                     const char *line,
                                     double now,
                                     char **response);

/**
 * Run any drag solve due at `now`. `*response` may be an empty string.
 */
enum ApStatus ap_session_tick(struct ApSession *session, double now, char **response);

/**
 * Current revision of the session state, or 0 for a null handle.
 */
uint64_t ap_session_revision(const struct ApSession *session);

/**
 * Current script in canonical JSON.
 */
enum ApStatus ap_session_export_script(const struct ApSession *session, char **script_json);

/**
 * Compile a script into a trajectory starting at rest.
 */
enum ApStatus ap_trajectory_from_script(const char *script_json,
                                        enum ApProfile profile,
                                        struct ApTrajectory **out);

void ap_trajectory_free(struct ApTrajectory *traj);

/**
 * Duration in seconds, or 0 for a null handle.
 */
double ap_trajectory_duration(const struct ApTrajectory *traj);

/**
 * Coordinates per sample, or 0 for a null handle.
 */
size_t ap_trajectory_dim(const struct ApTrajectory *traj);

/**
 * Position and velocity at `t` (clamped to the knot range). Either output
 * may be null. `*clamped` (optional) is set when `t` was outside the range.
 */
enum ApStatus ap_trajectory_sample(const struct ApTrajectory *traj,
                                   double t,
                                   double *q,
                                   double *qd,
                                   size_t len,
                                   bool *clamped);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANCHORPOSE_H */
