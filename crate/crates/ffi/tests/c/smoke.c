#include <stdio.h>
#include <string.h>

#include "aamatrix.h"

int main(void) {
    char *name = NULL;
    if (aam_combination_name(2, 2, &name) != AAM_STATUS_OK) return 1;
    if (strcmp(name, "User-Responsive Autonomy") != 0) return 2;
    aam_string_free(name);

    AamProfile *p = NULL;
    if (aam_profile_builtin("Nobody", &p) != AAM_STATUS_NOT_FOUND) return 3;
    if (aam_last_error() == NULL) return 4;
    if (aam_profile_builtin("Auto-GPT", &p) != AAM_STATUS_OK) return 5;

    uint8_t au = 9, al = 9;
    if (aam_profile_levels(p, 11, &au, &al) != AAM_STATUS_OK || au != 2 || al != 0) return 6;

    int64_t counts[4] = {3, 3, 4, 2};
    AamConfigCounts c;
    char *combined = NULL;
    if (aam_configuration_counts(counts, 4, 3, &c, &combined) != AAM_STATUS_OK) return 7;
    if (c.total_single_options != 108 || strcmp(combined, "282429536481") != 0) return 8;
    aam_string_free(combined);

    aam_profile_free(p);
    puts("ok");
    return 0;
}
