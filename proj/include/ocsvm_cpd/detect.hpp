#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ocsvm_cpd/dataset.hpp"
#include "ocsvm_cpd/svm.hpp"

namespace ocsvm_cpd {

/// Per-cycle labels: 1 where the model says normal, 0 where it says outlier.
std::vector<int> predict_series(const TrainedModel& model, const TimeSeriesInstance& instance,
                                const Normalizer& normalizer);
std::vector<int> predict_normalized(const TrainedModel& model, const Matrix& rows);

/// Sliding majority vote over an odd window, truncated at the series edges.
/// A tied vote keeps the original label. window = 1 is the identity.
std::vector<int> smooth_labels(std::span<const int> labels, std::size_t window);

struct ChangePoint {
    std::size_t change_cycle = 0;    // last healthy cycle
    std::vector<double> loss_curve;  // entry k is the loss of splitting after cycle k + 1
};

/// Sweeps every split c in [1, T-1] and returns the earliest one with the
/// lowest log loss against the clipped labels.
ChangePoint infer_change_point(std::span<const int> labels, double eps = 1e-7);

struct DetectionReport {
    std::int64_t unit_id = 0;
    std::size_t cycles = 0;
    std::size_t change_cycle = 0;
    double life_fraction = 0.0;
    std::vector<int> labels;  // after smoothing
    std::vector<double> loss_curve;
    std::size_t window = 1;
    std::string error;  // non-empty when this unit could not be processed

    bool ok() const noexcept { return error.empty(); }
};

/// Reports come back in input order; a failing unit yields a report whose
/// `error` is set instead of aborting the batch.
std::vector<DetectionReport> detect_batch(const TrainedModel& model,
                                          const std::vector<TimeSeriesInstance>& instances,
                                          const Normalizer& normalizer, std::size_t window,
                                          double eps = 1e-7, std::size_t threads = 1);

/// `unit,change_cycle,T,life_fraction,window`; failed units are skipped.
void write_reports_csv(std::ostream& out, const std::vector<DetectionReport>& reports);
/// `candidate_c,loss`
void write_loss_curve_csv(std::ostream& out, const DetectionReport& report);

struct ReportRow {
    std::int64_t unit_id = 0;
    std::size_t change_cycle = 0;
    std::size_t cycles = 0;
    double life_fraction = 0.0;
    std::size_t window = 1;
};
std::vector<ReportRow> parse_reports_csv(std::istream& in);

struct EvalMetrics {
    std::size_t units = 0;
    double tolerance_pct = 10.0;
    double hit_rate = 0.0;
    double mae_cycles = 0.0;
    double mae_fraction = 0.0;
};

/// Scores reports against truth rows. Every truth unit must have a report
/// (DataError naming the first missing unit).
EvalMetrics evaluate_reports(const std::vector<ReportRow>& reports, const std::vector<TruthRow>& truth,
                             double tolerance_pct);

}  // namespace ocsvm_cpd
