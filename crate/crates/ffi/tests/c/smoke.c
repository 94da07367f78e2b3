#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "wei_norman.h"

int main(void) {
    WnModel *model = NULL;
    if (wn_model_birth_death("constant:1", "constant:1", 20, &model) != WN_STATUS_OK) {
        fprintf(stderr, "create: %s\n", wn_last_error());
        return 1;
    }
    size_t dim = 0;
    wn_model_dim(model, &dim);
    double *p = malloc(dim * sizeof(double));
    if (wn_solve(model, WN_METHOD_WEI_NORMAN, 1.0, p, dim) != WN_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", wn_last_error());
        return 1;
    }
    double mean = 1.0 - exp(-1.0);
    double err = fabs(p[0] - exp(-mean));
    double total = 0.0;
    for (size_t i = 0; i < dim; i++) {
        total += p[i];
    }
    printf("dim=%zu p0_err=%.3e total=%.15f\n", dim, err, total);

    WnStatus bad = wn_model_pure_birth("constant:1", "rational", 1, &model);
    if (bad != WN_STATUS_INVALID_ARGUMENT || wn_last_error() == NULL) {
        return 1;
    }
    free(p);
    wn_model_free(model);
    return (err < 1e-10 && fabs(total - 1.0) < 1e-12) ? 0 : 1;
}
