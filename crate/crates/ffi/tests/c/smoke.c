#include <math.h>
#include <stdio.h>
#include "adahessian.h"

#define CHECK(cond)                                                        \
    do {                                                                   \
        if (!(cond)) {                                                     \
            const char *err = ah_last_error();                             \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,         \
                    err ? err : "no error");                               \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    AhProblem *p = NULL;
    CHECK(ah_problem_new("diagonal-quadratic", 0, &p) == AH_STATUS_OK);
    CHECK(ah_problem_dim(p) == 2);

    double theta[2], g[2], d[2];
    CHECK(ah_problem_initial_point(p, 0, theta, 2) == AH_STATUS_OK);
    CHECK(ah_problem_gradient(p, theta, 2, g) == AH_STATUS_OK);
    CHECK(ah_problem_estimate_diag(p, theta, 2, 1, 0, 1, d) == AH_STATUS_OK);

    AhHyper hyper = ah_hyper_default();
    hyper.lr = 1.0;
    hyper.eps = 0.0;
    size_t groups[1] = {2};
    AhOptimizer *opt = NULL;
    CHECK(ah_optimizer_new(&hyper, groups, 1, 1, &opt) == AH_STATUS_OK);
    CHECK(ah_optimizer_step(opt, theta, g, d, 2, 1.0) == AH_STATUS_OK);
    CHECK(hypot(theta[0], theta[1]) <= 1e-12);

    double loss = -1.0;
    CHECK(ah_problem_evaluate(p, theta, 2, &loss) == AH_STATUS_OK);
    CHECK(loss == 0.0);
    CHECK(ah_problem_gradient(p, theta, 3, g) == AH_STATUS_DIMENSION_MISMATCH);
    CHECK(ah_last_error() != NULL);

    ah_optimizer_free(opt);
    ah_problem_free(p);
    printf("ok %s\n", ah_version());
    return 0;
}
