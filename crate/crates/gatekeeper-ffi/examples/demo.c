/* Minimal C consumer: build records, run the metric sweep, calibrate a
 * threshold.
 *
 * Build (from the workspace root, after `cargo build --release`):
 *   cc crates/gatekeeper-ffi/examples/demo.c \
 *      -Icrates/gatekeeper-ffi/include \
 *      target/release/libgatekeeper_ffi.a -lpthread -ldl -lm -o demo
 */

#include <gatekeeper.h>
#include <stdio.h>

int main(void) {
    const double signals[] = {0.95, 0.40, 0.90, 0.35, 0.80, 0.30};
    const uint8_t s_correct[] = {1, 0, 1, 0, 1, 0};
    const uint8_t l_correct[] = {1, 1, 1, 1, 1, 0};

    GkRecords *records = NULL;
    GkStatus status =
        gk_records_from_binary(signals, s_correct, l_correct, 6, &records);
    if (status != GK_STATUS_OK) {
        fprintf(stderr, "building records failed: %d\n", (int)status);
        return 1;
    }

    GkMetrics metrics;
    status = gk_records_metrics(records, 0, true, &metrics);
    if (status != GK_STATUS_OK) {
        fprintf(stderr, "metric sweep failed: %d\n", (int)status);
        gk_records_free(records);
        return 1;
    }
    printf("toolkit %s\n", gk_version());
    printf("acc_s=%.3f acc_l=%.3f auroc=%.3f s_d=%.3f\n", metrics.acc_s,
           metrics.acc_l, metrics.s_auroc, metrics.s_d);

    double tau, achieved;
    status = gk_calibrate_threshold(signals, 6, 0.5, &tau, &achieved);
    if (status != GK_STATUS_OK) {
        fprintf(stderr, "calibration failed: %d\n", (int)status);
        gk_records_free(records);
        return 1;
    }
    printf("tau=%.3f achieved_ratio=%.3f\n", tau, achieved);

    gk_records_free(records);
    return 0;
}
