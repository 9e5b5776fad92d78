/* Builds the one-state self-loop chain through the C interface and prints
 * the two-step safety probability. */
#include <stdio.h>

#include "impact.h"

static const char *CONFIG =
    "[state]\nlb = 0\nub = 0\neta = 1\n"
    "[dynamics]\nf1 = 0*x1\n"
    "[noise]\ntype = normal\nsigma = 0.5/1.2815515655446004\n"
    "[spec]\ntype = safety\n"
    "[synthesis]\nepsilon = 1e-9\nhorizon = 2\n";

int main(void) {
  ImpactConfig *config = NULL;
  ImpactImdp *imdp = NULL;
  ImpactController *controller = NULL;
  double p_min = 0.0, p_max = 0.0;

  if (impact_config_parse(CONFIG, &config) != IMPACT_STATUS_OK ||
      impact_abstraction_build(config, 1, &imdp) != IMPACT_STATUS_OK ||
      impact_synthesize(config, imdp, 1, &controller) != IMPACT_STATUS_OK ||
      impact_controller_row(controller, 0, NULL, &p_min, &p_max) != IMPACT_STATUS_OK) {
    fprintf(stderr, "error: %s\n", impact_last_error());
    return 1;
  }
  if (impact_config_parse(NULL, &config) != IMPACT_STATUS_NULL_ARGUMENT) {
    return 2;
  }
  printf("%s %.12f %.12f\n", impact_version(), p_min, p_max);
  impact_controller_free(controller);
  impact_imdp_free(imdp);
  impact_config_free(config);
  return 0;
}
