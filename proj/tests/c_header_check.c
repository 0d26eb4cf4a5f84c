/* Compiles the public header as C and checks a few calls through it. */
#include <stdio.h>
#include <string.h>

#include "coop/coop.h"

int main(void) {
  coop_space* space = NULL;
  char* config = NULL;
  if (coop_space_load(NULL, &space) != COOP_NULL_ARGUMENT) return 1;
  if (coop_space_load("/nonexistent.json", &space) != COOP_ARTIFACT_MISSING_ERROR) return 2;
  if (strcmp(coop_status_name(COOP_ARTIFACT_MISSING_ERROR), "ArtifactMissingError") != 0) return 3;
  if (coop_synthetic_config("{\"seed\": 3}", &config) != COOP_OK) return 4;
  if (strstr(config, "\"seed\":3") == NULL) return 5;
  coop_string_free(config);
  printf("coop %s\n", coop_version());
  return 0;
}
