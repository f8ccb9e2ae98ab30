#ifndef GFVL_H
#define GFVL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum GfvlStatus {
  GFVL_STATUS_OK = 0,
  GFVL_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration or argument.
   */
  GFVL_STATUS_CONFIG = 2,
  /**
   * Disconnected graph, bad edge or unknown topology.
   */
  GFVL_STATUS_TOPOLOGY = 3,
  /**
   * Data outside the support of the likelihood.
   */
  GFVL_STATUS_DATA = 4,
  /**
   * Singular FIM, invalid posterior or non-finite value.
   */
  GFVL_STATUS_NUMERICAL = 5,
  /**
   * The session has already started or is in the wrong state.
   */
  GFVL_STATUS_STATE = 6,
  GFVL_STATUS_IO = 7,
  GFVL_STATUS_PANIC = 8,
} GfvlStatus;

typedef enum GfvlTopologyKind {
  GFVL_TOPOLOGY_KIND_STAR = 0,
  GFVL_TOPOLOGY_KIND_RING = 1,
  GFVL_TOPOLOGY_KIND_COMPLETE = 2,
} GfvlTopologyKind;

typedef enum GfvlModel {
  GFVL_MODEL_BETA_BERNOULLI = 0,
  GFVL_MODEL_BETA_EXPONENTIAL = 1,
} GfvlModel;

typedef enum GfvlUpdatePath {
  GFVL_UPDATE_PATH_CONJUGATE = 0,
  GFVL_UPDATE_PATH_NON_CONJUGATE = 1,
} GfvlUpdatePath;

typedef enum GfvlEvent {
  GFVL_EVENT_LEARN = 0,
  GFVL_EVENT_UNLEARN_FORWARD = 1,
  GFVL_EVENT_UNLEARN_DELETE = 2,
} GfvlEvent;

/**
 * Opaque protocol session: a topology, per-agent data and one random walk.
 */
typedef struct GfvlSession GfvlSession;

/**
 * Opaque communication graph.
 */
typedef struct GfvlTopology GfvlTopology;

/**
 * Session parameters. Obtain defaults from [`gfvl_session_config_default`].
 */
typedef struct GfvlSessionConfig {
  enum GfvlModel model;
  enum GfvlUpdatePath path;
  double alpha;
  /**
   * Nonzero divides each agent's summed loss by its dataset size.
   */
  uint8_t normalize_local_loss;
  double rho;
  size_t local_iters;
  size_t samples;
  double baseline;
  double prior_a;
  double prior_b;
  uint64_t seed;
} GfvlSessionConfig;

/**
 * One executed slot.
 */
typedef struct GfvlSlot {
  size_t slot;
  size_t iteration;
  size_t agent;
  enum GfvlEvent event;
  /**
   * Global natural parameter after the slot.
   */
  double eta[2];
} GfvlSlot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len` bytes) and returns the full message length excluding
 * the terminator. Returns 0 when no error has been recorded. `buf` may be
 * null to query the length.
 */
size_t gfvl_last_error_message(char *buf, size_t len);

/**
 * Builds a star (node 0 is the hub), ring or complete graph on `k` nodes.
 */
enum GfvlStatus gfvl_topology_new(enum GfvlTopologyKind kind, size_t k, struct GfvlTopology **out);

/**
 * Builds a graph on `k` nodes from `n_edges` undirected edges stored as
 * consecutive `(u, v)` pairs in `edges` (length `2 * n_edges`).
 */
enum GfvlStatus gfvl_topology_from_edges(size_t k,
                                         const size_t *edges,
                                         size_t n_edges,
                                         struct GfvlTopology **out);

enum GfvlStatus gfvl_topology_node_count(const struct GfvlTopology *t, size_t *out);

enum GfvlStatus gfvl_topology_degree(const struct GfvlTopology *t, size_t node, size_t *out);

/**
 * Releases a topology. Null is ignored.
 */
void gfvl_topology_free(struct GfvlTopology *t);

/**
 * KL(Beta(a1, b1) ‖ Beta(a2, b2)).
 */
enum GfvlStatus gfvl_beta_kl(double a1, double b1, double a2, double b2, double *out);

/**
 * Expected sufficient statistics (E ln θ, E ln(1 − θ)) of Beta(a, b),
 * written to `out[0..2]`.
 */
enum GfvlStatus gfvl_beta_moment(double a, double b, double *out);

/**
 * Fisher information of Beta(a, b) in natural coordinates, written
 * row-major to `out[0..4]`.
 */
enum GfvlStatus gfvl_beta_fim(double a, double b, double *out);

/**
 * Defaults for `model`: conjugate path for Beta-Bernoulli, non-conjugate
 * otherwise; α = 1, ρ = 5e-3, L = 1, S = 30, c = 0, Beta(2, 2) prior, seed 0.
 */
struct GfvlSessionConfig gfvl_session_config_default(enum GfvlModel model);

/**
 * Creates a session on a copy of `topology` with one empty dataset per node.
 * The topology handle may be freed afterwards.
 */
enum GfvlStatus gfvl_session_new(const struct GfvlTopology *topology,
                                 const struct GfvlSessionConfig *config,
                                 struct GfvlSession **out);

/**
 * Replaces agent `agent`'s dataset. Only allowed before the first step.
 */
enum GfvlStatus gfvl_session_set_agent_data(struct GfvlSession *s,
                                            size_t agent,
                                            const double *data,
                                            size_t n);

/**
 * Executes one slot. `out` may be null.
 */
enum GfvlStatus gfvl_session_step(struct GfvlSession *s, struct GfvlSlot *out);

/**
 * Executes up to `n_slots` slots. With `stop_on_cover` nonzero, stops early
 * once every live agent has been visited. `executed` (nullable) receives the
 * number of slots run.
 */
enum GfvlStatus gfvl_session_run(struct GfvlSession *s,
                                 size_t n_slots,
                                 uint8_t stop_on_cover,
                                 size_t *executed);

/**
 * Current global natural parameter (a − 1, b − 1), written to `out[0..2]`.
 */
enum GfvlStatus gfvl_session_global(const struct GfvlSession *s, double *out);

/**
 * Slots executed so far.
 */
enum GfvlStatus gfvl_session_slot(const struct GfvlSession *s, size_t *out);

/**
 * Queues deletion of `agent`'s data; it happens the next time the walk
 * schedules that agent.
 */
enum GfvlStatus gfvl_session_request_unlearning(struct GfvlSession *s, size_t agent);

/**
 * Number of deletions requested but not yet carried out.
 */
enum GfvlStatus gfvl_session_pending_deletions(const struct GfvlSession *s, size_t *out);

/**
 * KL(global ‖ exact tempered posterior over the non-deleted agents' data).
 * Conjugate model only.
 */
enum GfvlStatus gfvl_session_kl_to_exact(const struct GfvlSession *s, double *out);

/**
 * Releases a session. Null is ignored.
 */
void gfvl_session_free(struct GfvlSession *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFVL_H */
