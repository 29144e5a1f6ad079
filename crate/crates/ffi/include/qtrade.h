#ifndef QTRADE_H
#define QTRADE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Agents in results-table order.
 */
typedef enum QtAgent {
  QT_AGENT_BASELINE = 0,
  QT_AGENT_Q_LEARNING = 1,
  QT_AGENT_APPROXIMATE_LINEAR = 2,
  QT_AGENT_DEEP_Q_LEARNING = 3,
} QtAgent;

/*
 Supervised baselines, in report order.
 */
typedef enum QtAlgorithm {
  QT_ALGORITHM_OLS = 0,
  QT_ALGORITHM_PERSISTENCE = 1,
  QT_ALGORITHM_LOGISTIC = 2,
} QtAlgorithm;

/*
 Result of every fallible call.
 */
typedef enum QtStatus {
  QT_STATUS_OK = 0,
  /*
   Bad argument or call sequence.
   */
  QT_STATUS_USAGE = 1,
  /*
   A configuration value is out of bounds or unparsable.
   */
  QT_STATUS_CONFIG = 2,
  /*
   Input data failed to parse or validate, or is too short.
   */
  QT_STATUS_DATA = 3,
  /*
   The data cannot support the requested run.
   */
  QT_STATUS_SETUP = 4,
  QT_STATUS_IO = 5,
  QT_STATUS_NUMERICAL = 6,
  /*
   A required pointer argument was null.
   */
  QT_STATUS_NULL_POINTER = 7,
  /*
   The library panicked; the handle involved should be discarded.
   */
  QT_STATUS_PANIC = 8,
} QtStatus;

/*
 Opaque run configuration, held as `key=value` settings over the defaults.
 */
typedef struct QtConfig QtConfig;

/*
 Opaque evaluation result for all four agents.
 */
typedef struct QtReport QtReport;

/*
 Opaque price series.
 */
typedef struct QtSeries QtSeries;

/*
 One row of an evaluation report. Without a confidence interval (a
 single run) `has_interval` is false and the stdev and bounds are NaN.
 */
typedef struct QtReportRow {
  enum QtAgent agent;
  double mean_profit;
  double profit_stdev;
  double ci_lower;
  double ci_upper;
  bool has_interval;
  double mean_regret;
  double mean_buy_fraction;
  uintptr_t n_runs;
} QtReportRow;

typedef struct QtAccuracy {
  enum QtAlgorithm algorithm;
  double train_accuracy;
  double test_accuracy;
} QtAccuracy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if none failed.
 The string stays valid until the next failing call on the same thread.
 */
const char *qt_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qt_version(void);

/*
 Loads a `Date,Open,High,Low,Close[,Adj Close,Volume]` CSV file.

 # Safety
 `path` and `company` must be NUL-terminated strings; `out` must be writable.
 */
enum QtStatus qt_series_load(const char *path, const char *company, struct QtSeries **out);

/*
 New series holding only the bars dated on or after `year-month-day`.

 # Safety
 `series` must be a live handle; `out` must be writable.
 */
enum QtStatus qt_series_filter_from(const struct QtSeries *series,
                                    int32_t year,
                                    uint32_t month,
                                    uint32_t day,
                                    struct QtSeries **out);

/*
 Number of bars; 0 for a null handle.

 # Safety
 `series` must be null or a live handle.
 */
uintptr_t qt_series_len(const struct QtSeries *series);

/*
 Close price of bar `index`.

 # Safety
 `series` must be a live handle; `out` must be writable.
 */
enum QtStatus qt_series_close(const struct QtSeries *series, uintptr_t index, double *out);

/*
 # Safety
 `series` must be null or a handle not yet freed.
 */
void qt_series_free(struct QtSeries *series);

/*
 A configuration with every setting at its default.
 */
struct QtConfig *qt_config_new(void);

/*
 Sets one setting by its long command-line name, e.g. `"n-runs"`, `"10"`.
 The value is checked immediately.

 # Safety
 `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum QtStatus qt_config_set(struct QtConfig *config, const char *key, const char *value);

/*
 # Safety
 `config` must be null or a handle not yet freed.
 */
void qt_config_free(struct QtConfig *config);

/*
 Student confidence interval `mean ± t · stdev / sqrt(n)` at `level`.

 # Safety
 `lower` and `upper` must be writable.
 */
enum QtStatus qt_student_ci(double mean,
                            double stdev,
                            uintptr_t n,
                            double level,
                            double *lower,
                            double *upper);

/*
 Retrains and scores all four agents on `series` (already filtered) under
 `config`.

 # Safety
 `config` and `series` must be live handles; `out` must be writable.
 */
enum QtStatus qt_evaluate(const struct QtConfig *config,
                          const struct QtSeries *series,
                          struct QtReport **out);

/*
 Number of agent rows; 0 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
uintptr_t qt_report_len(const struct QtReport *report);

/*
 Copies row `index` into `out`.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum QtStatus qt_report_row(const struct QtReport *report,
                            uintptr_t index,
                            struct QtReportRow *out);

/*
 Writes `results_<company>.csv` and `histogram_<company>.csv` into `out_dir`.

 # Safety
 `report` must be a live handle; `company` and `out_dir` NUL-terminated strings.
 */
enum QtStatus qt_report_write(const struct QtReport *report,
                              const char *company,
                              const char *out_dir);

/*
 # Safety
 `report` must be null or a handle not yet freed.
 */
void qt_report_free(struct QtReport *report);

/*
 Runs the regression, persistence and logistic baselines on `series`.
 Writes up to `capacity` rows into `out` and the total row count (3) into
 `written`.

 # Safety
 `config` and `series` must be live handles; `out` must hold `capacity`
 rows; `written` must be writable.
 */
enum QtStatus qt_predict(const struct QtConfig *config,
                         const struct QtSeries *series,
                         struct QtAccuracy *out,
                         uintptr_t capacity,
                         uintptr_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QTRADE_H */
