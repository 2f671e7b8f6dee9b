#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dexkit.h"

#define CHECK(expr)                                                         \
    do {                                                                    \
        DexStatus s_ = (expr);                                              \
        if (s_ != DEX_STATUS_OK) {                                          \
            const char *m_ = dex_last_error();                              \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_, m_ ? m_ : ""); \
            return 1;                                                       \
        }                                                                   \
    } while (0)

int main(void) {
    DexRig *rig = NULL;
    CHECK(dex_rig_new_default(&rig));

    size_t dof = 0;
    CHECK(dex_chain_dof(rig, DEX_FINGER_INDEX, &dof));
    double theta[8] = {0.1, 0.4, 0.3, 0.2};
    double tip[3], solved[8], residual = 0.0, reached[3];
    double seed[8] = {0};
    bool converged = false;
    CHECK(dex_fk(rig, DEX_FINGER_INDEX, theta, dof, tip));
    CHECK(dex_ik(rig, DEX_FINGER_INDEX, tip, seed, dof, solved, &residual, &converged));
    CHECK(dex_fk(rig, DEX_FINGER_INDEX, solved, dof, reached));
    double err = 0.0;
    for (int i = 0; i < 3; i++) err += (reached[i] - tip[i]) * (reached[i] - tip[i]);
    if (!converged || sqrt(err) > 1e-4) {
        fprintf(stderr, "ik did not reach an fk target\n");
        return 1;
    }

    if (dex_chain_dof(rig, 9, &dof) != DEX_STATUS_INVALID_ARGUMENT || dex_last_error() == NULL) {
        fprintf(stderr, "bad finger accepted\n");
        return 1;
    }

    DexGesture *gesture = NULL;
    DexGestureEvent event = DEX_GESTURE_EVENT_NONE;
    CHECK(dex_gesture_new(0.5, &gesture));
    CHECK(dex_gesture_step(gesture, true, 0.0, &event));
    CHECK(dex_gesture_step(gesture, true, 0.6, &event));
    if (event != DEX_GESTURE_EVENT_START) {
        fprintf(stderr, "expected start\n");
        return 1;
    }
    dex_gesture_free(gesture);

    double scores[4] = {0.1, 0.9, 0.2, 0.3};
    bool keep[4];
    CHECK(dex_filter_percentile(scores, 4, 50.0, keep));
    if (!keep[0] || keep[1] || !keep[2] || keep[3]) {
        fprintf(stderr, "unexpected retention\n");
        return 1;
    }

    dex_rig_free(rig);
    printf("ok\n");
    return 0;
}
