#include <math.h>
#include <stdio.h>
#include "gfvl.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      char msg[256];                                                   \
      gfvl_last_error_message(msg, sizeof msg);                        \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, msg);     \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(void) {
  GfvlTopology *t = NULL;
  CHECK(gfvl_topology_new(GFVL_TOPOLOGY_KIND_STAR, 5, &t) == GFVL_STATUS_OK);

  GfvlSessionConfig cfg = gfvl_session_config_default(GFVL_MODEL_BETA_BERNOULLI);
  cfg.seed = 11;
  GfvlSession *s = NULL;
  CHECK(gfvl_session_new(t, &cfg, &s) == GFVL_STATUS_OK);
  gfvl_topology_free(t);

  for (size_t k = 0; k < 5; k++) {
    double data[10];
    for (size_t i = 0; i < 10; i++) data[i] = (double)((i + k) % 2);
    CHECK(gfvl_session_set_agent_data(s, k, data, 10) == GFVL_STATUS_OK);
  }

  size_t done = 0;
  CHECK(gfvl_session_run(s, 10000, 1, &done) == GFVL_STATUS_OK);
  double kl = 1.0;
  CHECK(gfvl_session_kl_to_exact(s, &kl) == GFVL_STATUS_OK);
  CHECK(kl < 1e-12);

  double eta[2];
  CHECK(gfvl_session_global(s, eta) == GFVL_STATUS_OK);
  CHECK(fabs(eta[0] - 26.0) < 1e-12 && fabs(eta[1] - 26.0) < 1e-12);

  CHECK(gfvl_session_request_unlearning(s, 0) == GFVL_STATUS_OK);
  GfvlSlot slot;
  do {
    CHECK(gfvl_session_step(s, &slot) == GFVL_STATUS_OK);
  } while (slot.event != GFVL_EVENT_UNLEARN_DELETE);
  CHECK(slot.agent == 0);
  CHECK(gfvl_session_kl_to_exact(s, &kl) == GFVL_STATUS_OK);
  CHECK(kl < 1e-12);

  CHECK(gfvl_beta_kl(0.0, 1.0, 1.0, 1.0, &kl) == GFVL_STATUS_NUMERICAL);
  CHECK(gfvl_last_error_message(NULL, 0) > 0);

  gfvl_session_free(s);
  printf("ok after %zu slots\n", done);
  return 0;
}
