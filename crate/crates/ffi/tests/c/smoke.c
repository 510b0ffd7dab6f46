#include <math.h>
#include <stdio.h>
#include "fblab.h"

static int check(FblabStatus s, const char *what) {
  if (s != FBLAB_STATUS_OK) {
    fprintf(stderr, "%s: status %d: %s\n", what, (int)s, fblab_last_error());
    return 1;
  }
  return 0;
}

int main(void) {
  FblabParams *p = NULL;
  if (check(fblab_params_new(1.0, &p), "params")) return 1;
  FblabExponents e;
  if (check(fblab_params_exponents(p, &e), "exponents")) return 1;
  if (fabs(e.alpha - 2.0 / 3.0) > 1e-15) return 2;

  FblabRadial *r = NULL;
  if (check(fblab_radial_solve(p, 1, 1e-12, &r), "radial")) return 1;
  double mu = 0.0;
  if (check(fblab_radial_mu(r, &mu), "mu")) return 1;
  printf("mu=%.6f\n", mu);
  if (fabs(mu - e.alpha) > 1e-5) return 3;

  FblabParams *bad = NULL;
  if (fblab_params_new(2.5, &bad) != FBLAB_STATUS_INVALID_ARGUMENT || bad != NULL) return 4;
  if (fblab_last_error()[0] == '\0') return 5;

  fblab_radial_free(r);
  fblab_params_free(p);
  fblab_params_free(NULL);
  return 0;
}
