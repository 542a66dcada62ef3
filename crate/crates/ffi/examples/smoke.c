#include "gravimetric.h"
#include <stdio.h>
int main(void) {
  double adj, pct;
  printf("%s %f\n", gm_version(), gm_percent_effect(0.5));
  if (gm_gni_adjustment(181.0, 115.5, 114.7, &adj, &pct) != GM_STATUS_OK) return 1;
  printf("%.1f %.2f\n", adj, pct);
  GmDataset *ds = NULL;
  GmStatus s = gm_dataset_load("/nonexistent", &ds);
  printf("%d %s\n", (int)s, gm_last_error_message());
  return 0;
}
