#include <math.h>
#include <stdio.h>

#include "kedmd.h"

int main(void) {
    kedmd_kernel *kernel = NULL;
    if (kedmd_kernel_new(3, 1, 1.0, &kernel) != KEDMD_STATUS_OK) {
        fprintf(stderr, "%s\n", kedmd_last_error_message());
        return 1;
    }
    double x[3] = {0.0, 0.0, 0.0};
    double z[3] = {0.3, 0.0, 0.4};
    double v = 0.0;
    kedmd_kernel_eval(kernel, x, z, &v);
    kedmd_kernel_free(kernel);
    if (fabs(v - 0.0625 * 3.0 / 20.0) > 1e-15) {
        fprintf(stderr, "unexpected kernel value %g\n", v);
        return 1;
    }

    kedmd_kernel *bad = NULL;
    if (kedmd_kernel_new(2, 0, 1.0, &bad) != KEDMD_STATUS_CONFIG || bad != NULL) {
        return 1;
    }
    printf("ok %.17g\n", v);
    return 0;
}
