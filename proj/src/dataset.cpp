#include "ocsvm_cpd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ocsvm_cpd/errors.hpp"
#include "ocsvm_cpd/rng.hpp"

namespace ocsvm_cpd {

namespace {

bool parse_number(std::string_view token, double& out) {
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::int64_t as_integer(double v, std::size_t line, const char* what) {
    if (v != std::floor(v)) throw ParseError(line, std::string(what) + " is not an integer");
    return static_cast<std::int64_t>(v);
}

// Accumulates rows into instances while enforcing grouping and contiguity.
class InstanceBuilder {
public:
    InstanceBuilder(std::size_t n_settings, std::size_t n_sensors)
        : n_settings_(n_settings), n_sensors_(n_sensors) {}

    void add(std::int64_t unit, std::int64_t cycle, std::span<const double> settings,
             std::span<const double> sensors) {
        if (out_.empty() || out_.back().unit_id != unit) {
            if (seen_.count(unit))
                throw DataError("unit " + std::to_string(unit) + " appears in non-adjacent rows");
            seen_[unit] = true;
            TimeSeriesInstance inst;
            inst.unit_id = unit;
            inst.op_settings = Matrix(0, n_settings_);
            inst.sensors = Matrix(0, n_sensors_);
            out_.push_back(std::move(inst));
        }
        auto& inst = out_.back();
        const auto expected = static_cast<std::int64_t>(inst.cycles()) + 1;
        if (cycle != expected)
            throw DataError("unit " + std::to_string(unit) + ": expected cycle " +
                            std::to_string(expected) + ", found " + std::to_string(cycle));
        inst.op_settings.append_row(settings);
        inst.sensors.append_row(sensors);
    }

    std::vector<TimeSeriesInstance> take() { return std::move(out_); }

private:
    std::size_t n_settings_;
    std::size_t n_sensors_;
    std::map<std::int64_t, bool> seen_;
    std::vector<TimeSeriesInstance> out_;
};

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        fields.emplace_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

bool is_setting_name(const std::string& name) {
    if (name.size() <= 7 || name.compare(0, 7, "setting") != 0) return false;
    return std::all_of(name.begin() + 7, name.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::vector<double> TimeSeriesInstance::settings_at(std::size_t t) const {
    if (op_settings.cols() == 0) return {};
    const auto r = op_settings.row(t);
    return {r.begin(), r.end()};
}

std::vector<TimeSeriesInstance> parse_cmapss(std::istream& in) {
    InstanceBuilder builder(kCmapssSettings, kCmapssSensors);
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        values.clear();
        std::istringstream tokens(line);
        std::string tok;
        while (tokens >> tok) {
            double v;
            if (!parse_number(tok, v)) throw ParseError(line_no, "not a finite number: '" + tok + "'");
            values.push_back(v);
        }
        if (values.size() != kCmapssColumns)
            throw ParseError(line_no, "expected " + std::to_string(kCmapssColumns) + " columns, found " +
                                          std::to_string(values.size()));
        const auto unit = as_integer(values[0], line_no, "unit id");
        const auto cycle = as_integer(values[1], line_no, "cycle");
        const std::span<const double> row(values);
        builder.add(unit, cycle, row.subspan(2, kCmapssSettings),
                    row.subspan(2 + kCmapssSettings, kCmapssSensors));
    }
    return builder.take();
}

void write_cmapss(std::ostream& out, const std::vector<TimeSeriesInstance>& instances) {
    for (const auto& inst : instances) {
        if (inst.op_settings.cols() != kCmapssSettings || inst.sensors.cols() != kCmapssSensors)
            throw std::invalid_argument("write_cmapss: instance does not have the C-MAPSS layout");
        for (std::size_t t = 0; t < inst.cycles(); ++t) {
            out << inst.unit_id << ' ' << (t + 1);
            for (double v : inst.op_settings.row(t)) out << ' ' << format_double(v);
            for (double v : inst.sensors.row(t)) out << ' ' << format_double(v);
            out << '\n';
        }
    }
}

CsvDataset parse_csv(std::istream& in) {
    CsvDataset data;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        header = split_csv(line);
        break;
    }
    if (header.empty()) return data;
    if (header.size() < 2 || header[0] != "unit" || header[1] != "cycle")
        throw ParseError(line_no, "CSV header must start with 'unit,cycle'");

    std::vector<bool> setting_col(header.size(), false);
    for (std::size_t c = 2; c < header.size(); ++c) {
        setting_col[c] = is_setting_name(header[c]);
        (setting_col[c] ? data.setting_names : data.feature_names).push_back(header[c]);
    }

    InstanceBuilder builder(data.setting_names.size(), data.feature_names.size());
    std::vector<double> settings, features;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                          std::to_string(fields.size()));
        settings.clear();
        features.clear();
        double unit = 0, cycle = 0;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            double v;
            if (!parse_number(fields[c], v))
                throw ParseError(line_no, "not a finite number in column '" + header[c] + "'");
            if (c == 0) unit = v;
            else if (c == 1) cycle = v;
            else (setting_col[c] ? settings : features).push_back(v);
        }
        builder.add(as_integer(unit, line_no, "unit id"), as_integer(cycle, line_no, "cycle"), settings,
                    features);
    }
    data.instances = builder.take();
    return data;
}

void write_csv(std::ostream& out, const CsvDataset& data) {
    out << "unit,cycle";
    for (const auto& n : data.setting_names) out << ',' << n;
    for (const auto& n : data.feature_names) out << ',' << n;
    out << '\n';
    for (const auto& inst : data.instances) {
        for (std::size_t t = 0; t < inst.cycles(); ++t) {
            out << inst.unit_id << ',' << (t + 1);
            for (double v : inst.op_settings.row(t)) out << ',' << format_double(v);
            for (double v : inst.sensors.row(t)) out << ',' << format_double(v);
            out << '\n';
        }
    }
}

Normalizer fit_normalizer(const std::vector<TimeSeriesInstance>& instances, double healthy_fraction,
                          NormalizerMode mode, int condition_decimals) {
    if (instances.empty()) throw std::invalid_argument("fit_normalizer: no instances");
    if (!(healthy_fraction > 0.0 && healthy_fraction <= 1.0))
        throw std::invalid_argument("fit_normalizer: healthy_fraction must lie in (0, 1]");
    const std::size_t d = instances.front().sensors.cols();
    std::size_t min_t = instances.front().cycles();
    for (const auto& inst : instances) {
        if (inst.sensors.cols() != d) throw DataError("fit_normalizer: instances differ in feature count");
        min_t = std::min(min_t, inst.cycles());
    }
    if (healthy_fraction * static_cast<double>(min_t) < 2.0)
        throw std::invalid_argument("fit_normalizer: healthy_fraction * min(T) must be at least 2");

    struct Accum {
        std::size_t count = 0;
        std::vector<double> sum, sq_dev;
    };
    const std::vector<double> no_key;
    auto key_of = [&](const TimeSeriesInstance& inst, std::size_t t) {
        return mode == NormalizerMode::per_condition ? condition_key(inst.settings_at(t), condition_decimals)
                                                     : no_key;
    };
    // Visits every (row, group) pair in the healthy prefixes.
    auto for_each_fit_row = [&](auto&& fn) {
        for (const auto& inst : instances) {
            const auto prefix =
                static_cast<std::size_t>(std::floor(healthy_fraction * static_cast<double>(inst.cycles())));
            for (std::size_t t = 0; t < prefix; ++t) fn(key_of(inst, t), inst.sensors.row(t));
        }
    };

    // Rounded keys compare exactly, so the map order is deterministic.
    std::map<std::vector<double>, Accum> groups;
    Accum pooled{0, std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for_each_fit_row([&](const std::vector<double>& key, std::span<const double> row) {
        auto& g = groups[key];
        if (g.sum.empty()) {
            g.sum.assign(d, 0.0);
            g.sq_dev.assign(d, 0.0);
        }
        ++g.count;
        ++pooled.count;
        for (std::size_t j = 0; j < d; ++j) {
            g.sum[j] += row[j];
            pooled.sum[j] += row[j];
        }
    });
    for (const auto& [key, g] : groups)
        if (g.count < 2)
            throw DataError("condition group " + format_condition_key(key) + " has fewer than 2 rows");

    for_each_fit_row([&](const std::vector<double>& key, std::span<const double> row) {
        auto& g = groups[key];
        for (std::size_t j = 0; j < d; ++j) {
            const double dg = row[j] - g.sum[j] / static_cast<double>(g.count);
            const double dp = row[j] - pooled.sum[j] / static_cast<double>(pooled.count);
            g.sq_dev[j] += dg * dg;
            pooled.sq_dev[j] += dp * dp;
        }
    });
    auto std_of = [](const Accum& a, std::size_t j) {
        return std::sqrt(a.sq_dev[j] / static_cast<double>(a.count));
    };

    Normalizer norm;
    norm.mode = mode;
    norm.condition_decimals = condition_decimals;
    norm.input_width = d;
    for (std::size_t j = 0; j < d; ++j) {
        bool keep = std_of(pooled, j) >= Normalizer::kMinStd;
        for (const auto& [key, g] : groups) keep = keep && std_of(g, j) >= Normalizer::kMinStd;
        if (keep) norm.feature_mask.push_back(j);
    }
    if (norm.feature_mask.empty()) throw DataError("fit_normalizer: every feature is constant");

    for (const auto& [key, g] : groups) {
        ConditionStats stats;
        stats.key = key;
        for (std::size_t j : norm.feature_mask) {
            stats.mean.push_back(g.sum[j] / static_cast<double>(g.count));
            stats.std.push_back(std_of(g, j));
        }
        norm.groups.push_back(std::move(stats));
    }
    return norm;
}

Matrix apply_normalizer(const Normalizer& normalizer, const TimeSeriesInstance& instance) {
    const auto& mask = normalizer.feature_mask;
    if (normalizer.input_width != 0 && instance.sensors.cols() != normalizer.input_width)
        throw DataError("unit " + std::to_string(instance.unit_id) + " has " +
                        std::to_string(instance.sensors.cols()) + " feature columns, normalizer expects " +
                        std::to_string(normalizer.input_width));
    for (std::size_t j : mask)
        if (j >= instance.sensors.cols())
            throw DataError("unit " + std::to_string(instance.unit_id) + " has no feature column " +
                            std::to_string(j));
    Matrix out(instance.cycles(), mask.size());
    for (std::size_t t = 0; t < instance.cycles(); ++t) {
        const auto& g = normalizer.group_for(instance.settings_at(t));
        const auto row = instance.sensors.row(t);
        for (std::size_t j = 0; j < mask.size(); ++j) out(t, j) = (row[mask[j]] - g.mean[j]) / g.std[j];
    }
    return out;
}

SyntheticData generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    if (config.num_units == 0) throw std::invalid_argument("synthetic: num_units must be positive");
    if (config.dim == 0) throw std::invalid_argument("synthetic: dim must be at least 1");
    if (config.t_min < 20 || config.t_max > 10000 || config.t_min > config.t_max)
        throw std::invalid_argument("synthetic: T range must lie within [20, 10000]");
    if (!(config.rho_min > 0.0 && config.rho_max < 1.0 && config.rho_min <= config.rho_max))
        throw std::invalid_argument("synthetic: rho range must lie inside (0, 1)");
    if (!(config.noise_std >= 0.0) || !(config.drift_magnitude >= 0.0) || !(config.ramp_power >= 0.0))
        throw std::invalid_argument("synthetic: noise, drift and ramp power must be nonnegative");

    Rng rng(seed);
    SyntheticData data;
    for (std::size_t u = 0; u < config.num_units; ++u) {
        const auto T = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(config.t_min),
                                                                static_cast<std::int64_t>(config.t_max)));
        const double rho = config.rho_min == config.rho_max ? config.rho_min
                                                            : rng.uniform(config.rho_min, config.rho_max);
        const auto change = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(rho * static_cast<double>(T))), 1, T - 1);

        std::vector<double> dir(config.dim);
        double norm = 0.0;
        while (norm == 0.0) {
            norm = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
        }
        for (auto& v : dir) v /= norm;

        TimeSeriesInstance inst;
        inst.unit_id = static_cast<std::int64_t>(u + 1);
        inst.op_settings = Matrix(T, kCmapssSettings, 0.0);
        inst.sensors = Matrix(T, config.dim);
        for (std::size_t t = 1; t <= T; ++t) {
            double shift = 0.0;
            if (t > change) {
                const double progress = static_cast<double>(t - change) / static_cast<double>(T - change);
                shift = config.drift_magnitude * std::pow(progress, config.ramp_power);
            }
            for (std::size_t j = 0; j < config.dim; ++j)
                inst.sensors(t - 1, j) = shift * dir[j] + config.noise_std * rng.normal();
        }

        data.truths.push_back({inst.unit_id, change, T, config.drift_magnitude, dir});
        data.instances.push_back(std::move(inst));
    }
    return data;
}

CsvDataset synthetic_to_csv(const SyntheticData& data) {
    CsvDataset csv;
    csv.setting_names = {"setting1", "setting2", "setting3"};
    const std::size_t d = data.instances.empty() ? 0 : data.instances.front().sensors.cols();
    for (std::size_t j = 0; j < d; ++j) csv.feature_names.push_back("f" + std::to_string(j + 1));
    csv.instances = data.instances;
    return csv;
}

void write_truth_csv(std::ostream& out, const std::vector<SyntheticTruth>& truths) {
    out << "unit,true_change_cycle,T\n";
    for (const auto& t : truths) out << t.unit_id << ',' << t.true_change_cycle << ',' << t.cycles << '\n';
}

std::vector<TruthRow> parse_truth_csv(std::istream& in) {
    std::vector<TruthRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (header) {
            if (fields.size() != 3 || fields[0] != "unit" || fields[1] != "true_change_cycle" || fields[2] != "T")
                throw ParseError(line_no, "truth header must be 'unit,true_change_cycle,T'");
            header = false;
            continue;
        }
        if (fields.size() != 3) throw ParseError(line_no, "expected 3 fields");
        double v[3];
        for (int k = 0; k < 3; ++k)
            if (!parse_number(fields[k], v[k])) throw ParseError(line_no, "not a number: '" + fields[k] + "'");
        rows.push_back({as_integer(v[0], line_no, "unit"),
                        static_cast<std::size_t>(as_integer(v[1], line_no, "true_change_cycle")),
                        static_cast<std::size_t>(as_integer(v[2], line_no, "T"))});
    }
    return rows;
}

}  // namespace ocsvm_cpd
