#include <stdio.h>
#include <string.h>
#include "greenpow.h"

#define CHECK(call)                                                   \
  do {                                                                \
    GpStatus s_ = (call);                                             \
    if (s_ != GP_STATUS_OK) {                                         \
      char *e_ = gp_last_error();                                     \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, e_ ? e_ : ""); \
      gp_string_free(e_);                                             \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  GpConfig *cfg = NULL;
  GpReport *rep = NULL;
  double saving = 0.0, wait = 0.0;
  uint64_t blocks = 0;

  CHECK(gp_config_new(&cfg));
  CHECK(gp_config_set_miners(cfg, 20));
  CHECK(gp_config_set_k(cfg, 2));
  CHECK(gp_config_set_blocks(cfg, 200));
  CHECK(gp_simulate(cfg, &rep));
  CHECK(gp_report_blocks(rep, &blocks));
  CHECK(gp_report_saving_pct(rep, &saving));
  CHECK(gp_timeout_wait(0.1, 0.9, &wait));
  if (gp_config_set_miners(cfg, 1) != GP_STATUS_INVALID_ARGUMENT) return 2;

  printf("blocks=%llu saving=%.2f wait=%.4f version=%s\n",
         (unsigned long long)blocks, saving, wait, gp_version());
  gp_report_free(rep);
  gp_config_free(cfg);
  return blocks == 200 && saving > 0.0 && wait > 23.02 && wait < 23.03 ? 0 : 3;
}
