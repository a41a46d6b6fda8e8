#include "ocsvm_cpd/detect.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ocsvm_cpd/de.hpp"
#include "ocsvm_cpd/errors.hpp"

namespace ocsvm_cpd {

std::vector<int> predict_normalized(const TrainedModel& model, const Matrix& rows) {
    std::vector<int> labels(rows.rows());
    for (std::size_t t = 0; t < rows.rows(); ++t) labels[t] = classify(model, rows.row(t)) > 0 ? 1 : 0;
    return labels;
}

std::vector<int> predict_series(const TrainedModel& model, const TimeSeriesInstance& instance,
                                const Normalizer& normalizer) {
    return predict_normalized(model, apply_normalizer(normalizer, instance));
}

std::vector<int> smooth_labels(std::span<const int> labels, std::size_t window) {
    if (window == 0 || window % 2 == 0) throw std::invalid_argument("smooth_labels: window must be odd");
    if (window > labels.size()) throw std::invalid_argument("smooth_labels: window longer than the series");
    std::vector<int> out(labels.begin(), labels.end());
    if (window == 1) return out;
    const std::size_t half = window / 2;
    const std::size_t n = labels.size();
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= half ? t - half : 0;
        const std::size_t hi = std::min(n - 1, t + half);
        std::size_t ones = 0;
        for (std::size_t k = lo; k <= hi; ++k) ones += labels[k] ? 1 : 0;
        const std::size_t zeros = hi - lo + 1 - ones;
        if (ones > zeros) out[t] = 1;
        else if (zeros > ones) out[t] = 0;
    }
    return out;
}

ChangePoint infer_change_point(std::span<const int> labels, double eps) {
    const std::size_t T = labels.size();
    if (T < 2) throw std::invalid_argument("infer_change_point: need at least 2 cycles");
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("infer_change_point: eps must lie in (0, 0.5)");

    // With hard labels each cycle contributes either -ln(1-eps) (agreement) or
    // -ln(eps) (disagreement), so the loss at c is a function of the integer
    // mismatch count. Working from counts keeps ties exact.
    const double agree = -std::log1p(-eps);
    const double disagree = -std::log(eps);
    std::size_t total_ones = 0;
    for (int l : labels) total_ones += l ? 1 : 0;

    ChangePoint cp;
    cp.loss_curve.reserve(T - 1);
    std::size_t prefix_ones = 0;
    std::size_t best_mismatch = T + 1;
    for (std::size_t c = 1; c < T; ++c) {
        prefix_ones += labels[c - 1] ? 1 : 0;
        const std::size_t prefix_zeros = c - prefix_ones;
        const std::size_t suffix_ones = total_ones - prefix_ones;
        const std::size_t mismatch = prefix_zeros + suffix_ones;
        const double loss = (static_cast<double>(mismatch) * disagree + static_cast<double>(T - mismatch) * agree) /
                            static_cast<double>(T);
        cp.loss_curve.push_back(loss);
        if (mismatch < best_mismatch) {
            best_mismatch = mismatch;
            cp.change_cycle = c;
        }
    }
    return cp;
}

std::vector<DetectionReport> detect_batch(const TrainedModel& model,
                                          const std::vector<TimeSeriesInstance>& instances,
                                          const Normalizer& normalizer, std::size_t window, double eps,
                                          std::size_t threads) {
    std::vector<DetectionReport> reports(instances.size());
    parallel_for(instances.size(), threads, [&](std::size_t k) {
        const auto& inst = instances[k];
        auto& r = reports[k];
        r.unit_id = inst.unit_id;
        r.cycles = inst.cycles();
        r.window = window;
        try {
            r.labels = smooth_labels(predict_series(model, inst, normalizer), window);
            auto cp = infer_change_point(r.labels, eps);
            r.change_cycle = cp.change_cycle;
            r.loss_curve = std::move(cp.loss_curve);
            r.life_fraction = static_cast<double>(r.change_cycle) / static_cast<double>(r.cycles);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
    });
    return reports;
}

void write_reports_csv(std::ostream& out, const std::vector<DetectionReport>& reports) {
    out << "unit,change_cycle,T,life_fraction,window\n";
    for (const auto& r : reports) {
        if (!r.ok()) continue;
        out << r.unit_id << ',' << r.change_cycle << ',' << r.cycles << ',' << format_double(r.life_fraction) << ','
            << r.window << '\n';
    }
}

void write_loss_curve_csv(std::ostream& out, const DetectionReport& report) {
    out << "candidate_c,loss\n";
    for (std::size_t k = 0; k < report.loss_curve.size(); ++k)
        out << (k + 1) << ',' << format_double(report.loss_curve[k]) << '\n';
}

std::vector<ReportRow> parse_reports_csv(std::istream& in) {
    std::vector<ReportRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (header) {
            if (line != "unit,change_cycle,T,life_fraction,window")
                throw ParseError(line_no, "report header must be 'unit,change_cycle,T,life_fraction,window'");
            header = false;
            continue;
        }
        std::istringstream fields(line);
        ReportRow r;
        char c1, c2, c3, c4;
        if (!(fields >> r.unit_id >> c1 >> r.change_cycle >> c2 >> r.cycles >> c3 >> r.life_fraction >> c4 >>
              r.window) ||
            c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',')
            throw ParseError(line_no, "malformed report row");
        rows.push_back(r);
    }
    return rows;
}

EvalMetrics evaluate_reports(const std::vector<ReportRow>& reports, const std::vector<TruthRow>& truth,
                             double tolerance_pct) {
    if (!(tolerance_pct >= 0.0)) throw std::invalid_argument("tolerance must be nonnegative");
    std::map<std::int64_t, const ReportRow*> by_unit;
    for (const auto& r : reports) by_unit[r.unit_id] = &r;

    EvalMetrics m;
    m.tolerance_pct = tolerance_pct;
    std::size_t hits = 0;
    for (const auto& t : truth) {
        const auto it = by_unit.find(t.unit_id);
        if (it == by_unit.end()) throw DataError("no report for unit " + std::to_string(t.unit_id));
        const auto& r = *it->second;
        const double err = std::abs(static_cast<double>(r.change_cycle) - static_cast<double>(t.true_change_cycle));
        const double T = static_cast<double>(t.cycles);
        if (err <= tolerance_pct / 100.0 * T) ++hits;
        m.mae_cycles += err;
        m.mae_fraction += err / T;
        ++m.units;
    }
    if (m.units > 0) {
        const double n = static_cast<double>(m.units);
        m.hit_rate = static_cast<double>(hits) / n;
        m.mae_cycles /= n;
        m.mae_fraction /= n;
    }
    return m;
}

}  // namespace ocsvm_cpd
