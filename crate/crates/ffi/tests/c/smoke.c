#include <stdio.h>
#include <string.h>

#include "ebarx.h"

#define CHECK(expr)                                                           \
  do {                                                                        \
    EbarxStatus st_ = (expr);                                                 \
    if (st_ != EBARX_STATUS_OK) {                                             \
      const char *msg = ebarx_last_error();                                   \
      fprintf(stderr, "%s failed (%d): %s\n", #expr, (int)st_,                \
              msg ? msg : "");                                                \
      return 1;                                                               \
    }                                                                         \
  } while (0)

int main(void) {
  const double a[2] = {1.5, -0.7};
  const double pi[4] = {0.08, 0.0, 0.0, 0.08};
  EbarxDataset *d = NULL;
  EbarxTrace *fwd = NULL;
  EbarxTrace *bwd = NULL;
  double x[2], p[4], rec[4], s2 = 0.0;
  int clipped = 0, ill = 0;

  CHECK(ebarx_dataset_simulate(a, 2, NULL, 0, 1.0, 400, 500, 7, &d));
  if (ebarx_dataset_len(d) != 400) return 2;

  CHECK(ebarx_least_squares(d, 2, 0, x, p, &s2));
  printf("ls %.6f %.6f sigma2 %.6f\n", x[0], x[1], s2);

  CHECK(ebarx_run_forward(d, 2, 0, NULL, 1.0, pi, &fwd));
  CHECK(ebarx_trace_state(fwd, ebarx_trace_steps(fwd), x, p, &s2));
  CHECK(ebarx_run_backward(d, 2, x, pi, 1.0, &bwd));
  CHECK(ebarx_recover_prior(bwd, rec, &clipped, &ill));
  printf("pi_hat %.6g %.6g %.6g clipped %d\n", rec[0], rec[1], rec[3], clipped);

  if (ebarx_trace_state(fwd, 100000, x, NULL, NULL) != EBARX_STATUS_INVALID_ARGUMENT) return 3;
  if (ebarx_last_error() == NULL || strlen(ebarx_last_error()) == 0) return 4;

  ebarx_trace_free(fwd);
  ebarx_trace_free(bwd);
  ebarx_dataset_free(d);
  printf("version %s\n", ebarx_version());
  return 0;
}
