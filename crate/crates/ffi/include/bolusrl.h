#ifndef BOLUSRL_H
#define BOLUSRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of BG bins in [`BolusEvalSummary::bins`].
#define BOLUS_BIN_COUNT 5

// Result code of every exported function.
typedef enum BolusStatus {
  BOLUS_STATUS_OK = 0,
  BOLUS_STATUS_NULL_ARGUMENT = 1,
  BOLUS_STATUS_INVALID_INPUT = 2,
  BOLUS_STATUS_NOT_FOUND = 3,
  BOLUS_STATUS_IO = 4,
  BOLUS_STATUS_PARSE = 5,
  BOLUS_STATUS_SIMULATION = 6,
  BOLUS_STATUS_PANIC = 7,
} BolusStatus;

// Opaque learned Q-model.
typedef struct BolusModel BolusModel;

// Opaque simulated patient.
typedef struct BolusPatient BolusPatient;

// Summary of one simulated evaluation on the default meal scenario.
typedef struct BolusEvalSummary {
  // Fractions of 3-minute readings in [40,70), [70,112.5), [112.5,180),
  // [180,350) and [350,600].
  double bins[BOLUS_BIN_COUNT];
  double hypo_fraction;
  double mean_reward;
  uint32_t days;
} BolusEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length, so a
// caller can size the buffer with a first call passing `len = 0`.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t bolus_last_error(char *buf, size_t len);

// Advisor dose: `cho / cir + max(bg - bg_target, 0) / cf`.
//
// # Safety
// `dose` must be null or valid for writes.
enum BolusStatus bolus_advisor_dose(double cho,
                                    double bg,
                                    double cir,
                                    double cf,
                                    double bg_target,
                                    double *dose);

// Dose range used for exploration at a meal.
//
// # Safety
// `lo` and `hi` must be null or valid for writes.
enum BolusStatus bolus_exploration_bounds(double cho, double bg, double *lo, double *hi);

// Risk-based reward of a BG reading, zero at 112.5 mg/dL.
//
// # Safety
// `reward` must be null or valid for writes.
enum BolusStatus bolus_risk_reward(double bg, double scale, double *reward);

// Creates a handle for one of the built-in adults (ids 1, 2, 3).
//
// # Safety
// `patient` must be null or valid for writes.
enum BolusStatus bolus_patient_preset(uint32_t id, struct BolusPatient **patient);

// Loads patient `id` from a presets file.
//
// # Safety
// `path` must be null or a NUL-terminated string; `patient` must be null or
// valid for writes.
enum BolusStatus bolus_patient_load(const char *path, uint32_t id, struct BolusPatient **patient);

// Releases a patient handle. Null is ignored.
//
// # Safety
// `patient` must be null or a handle not yet freed.
void bolus_patient_free(struct BolusPatient *patient);

// Loads a Q-model text file.
//
// # Safety
// `path` must be null or a NUL-terminated string; `model` must be null or
// valid for writes.
enum BolusStatus bolus_model_load(const char *path, struct BolusModel **model);

// Writes a Q-model in the same text format [`bolus_model_load`] reads.
//
// # Safety
// `model` must be null or a live handle; `path` null or NUL-terminated.
enum BolusStatus bolus_model_save(const struct BolusModel *model, const char *path);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void bolus_model_free(struct BolusModel *model);

// Q(meal_id, bg, ins) of a model.
//
// # Safety
// `model` must be null or a live handle; `q` null or valid for writes.
enum BolusStatus bolus_model_q_value(const struct BolusModel *model,
                                     uint32_t meal_id,
                                     double bg,
                                     double ins,
                                     double *q);

// Greedy dose over `grid_points` evenly spaced doses of the model's range.
//
// # Safety
// `model` must be null or a live handle; `dose` null or valid for writes.
enum BolusStatus bolus_model_greedy_dose(const struct BolusModel *model,
                                         uint32_t meal_id,
                                         double bg,
                                         size_t grid_points,
                                         double *dose);

// Simulates `days` of the default meal scenario under the advisor.
//
// # Safety
// `patient` must be null or a live handle; `summary` null or valid for
// writes.
enum BolusStatus bolus_evaluate_advisor(const struct BolusPatient *patient,
                                        double cir,
                                        double cf,
                                        double bg_target,
                                        uint32_t days,
                                        uint64_t seed,
                                        struct BolusEvalSummary *summary);

// Simulates `days` of the default meal scenario under a model's greedy
// policy over `grid_points` doses.
//
// # Safety
// `patient` and `model` must be null or live handles; `summary` null or
// valid for writes.
enum BolusStatus bolus_evaluate_model(const struct BolusPatient *patient,
                                      const struct BolusModel *model,
                                      size_t grid_points,
                                      uint32_t days,
                                      uint64_t seed,
                                      struct BolusEvalSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOLUSRL_H */
