#include <stdio.h>
#include <stdlib.h>
#include <math.h>
#include "pvp.h"

#define CHECK(x) do { PvpStatus s_ = (x); if (s_ != PVP_STATUS_OK) { \
    const char *m = pvp_last_error(); fprintf(stderr, "%s -> %d: %s\n", #x, s_, m ? m : "?"); return 1; } } while (0)

int main(void) {
    PvpEnv *env = NULL;
    CHECK(pvp_env_new("{\"env\":\"gridworld\",\"width\":6,\"height\":6,\"layout\":\"empty\"}", &env));
    size_t obs_dim = 0, n = 0;
    bool discrete = false;
    CHECK(pvp_env_spec(env, &obs_dim, &discrete, &n));
    if (!discrete || n != 4) return 2;
    double *obs = malloc(obs_dim * sizeof(double));
    CHECK(pvp_env_reset(env, 7, obs, obs_dim));
    PvpStep st = {0};
    int steps = 0;
    while (!st.done && steps < 1000) {
        double a;
        CHECK(pvp_env_expert_action(env, &a, 1));
        CHECK(pvp_env_step_discrete(env, (size_t)a, obs, obs_dim, &st));
        steps++;
    }
    if (!st.success || st.violation) return 3;

    if (pvp_env_step_discrete(env, 0, obs, obs_dim, &st) == PVP_STATUS_OK) return 4;
    if (pvp_last_error() == NULL) return 5;

    double qh[2] = {1.0, 0.0}, qn[2] = {-1.0, 0.0}, loss = -1;
    CHECK(pvp_pv_loss(qh, qn, 2, 1.0, &loss));
    if (fabs(loss - 1.0) > 1e-12) return 6;
    double bound = 0;
    CHECK(pvp_compute_bound(0.99, 0.05, 0.01, 0.5, &bound));
    if (fabs(bound - 3.5) > 1e-9) return 7;
    if (pvp_compute_bound(1.0, 0, 0, 0, &bound) != PVP_STATUS_INVALID_ARGUMENT) return 8;

    free(obs);
    pvp_env_free(env);
    printf("ok %d\n", steps);
    return 0;
}
