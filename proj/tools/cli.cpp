#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ocsvm_cpd/calibration.hpp"
#include "ocsvm_cpd/dataset.hpp"
#include "ocsvm_cpd/detect.hpp"
#include "ocsvm_cpd/errors.hpp"
#include "ocsvm_cpd/io.hpp"
#include "ocsvm_cpd/rng.hpp"

namespace ocsvm_cpd::cli {

namespace fs = std::filesystem;

namespace {

// Train-unit sampling draws from its own stream so it does not share the
// first draws of the DE initialization under the same seed.
constexpr std::uint64_t kSelectionSalt = 0x9E3779B97F4A7C15ull;

constexpr const char* kThreadsEnv = "OCSVM_CPD_THREADS";

// CLI11 silently drops an environment value that fails validation; reject it instead.
void check_threads_env() {
    const char* raw = std::getenv(kThreadsEnv);
    if (raw == nullptr || *raw == '\0') return;
    std::size_t used = 0;
    long value = 0;
    try {
        value = std::stol(raw, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != std::string(raw).size() || value < 1)
        throw CLI::ValidationError(kThreadsEnv, "must be a positive integer, got '" + std::string(raw) + "'");
}

bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// CLI11 only reads config files attached to the top-level app. For a
// subcommand, each key in the file becomes `--key=value` appended after the
// user's arguments, unless that flag was given or its environment variable is set.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
    if (args.empty()) return args;
    CLI::App* sub = app.get_subcommand_no_throw(args.front());
    if (sub == nullptr) return args;

    std::string file;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
    }
    if (file.empty()) return args;

    const auto items = CLI::ConfigTOML().from_file(file);
    std::vector<std::string> extra;
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;  // section markers
        if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents.front() == sub->get_name()))
            throw CLI::ConfigError::Extras(item.fullname());
        const std::string flag = "--" + item.name;
        CLI::Option* opt = sub->get_option_no_throw(flag);
        if (opt == nullptr || opt == sub->get_config_ptr()) throw CLI::ConfigError::Extras(item.name);
        if (flag_given(args, flag)) continue;
        if (!opt->get_envname().empty()) {
            const char* env = std::getenv(opt->get_envname().c_str());
            if (env != nullptr && *env != '\0') continue;
        }
        if (opt->get_type_size_max() == 0) {
            if (item.inputs.size() == 1 && CLI::detail::to_flag_value(item.inputs.front()) > 0) extra.push_back(flag);
            continue;
        }
        for (const auto& v : item.inputs) extra.push_back(flag + "=" + v);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

struct DataSource {
    std::string path;
    std::string format = "auto";

    std::string resolved_format() const {
        if (format != "auto") return format;
        return fs::path(path).extension() == ".csv" ? "csv" : "cmapss";
    }
};

std::vector<TimeSeriesInstance> load_instances(const DataSource& src) {
    std::ifstream in(src.path);
    if (!in) throw DataError("cannot open data file " + src.path);
    if (src.resolved_format() == "csv") return parse_csv(in).instances;
    return parse_cmapss(in);
}

void add_data_options(CLI::App& sub, DataSource& src) {
    sub.add_option("--data", src.path, "Input series (C-MAPSS text or CSV)")->required();
    sub.add_option("--format", src.format, "Input format")
        ->check(CLI::IsMember({"auto", "cmapss", "csv"}))
        ->capture_default_str();
}

void write_with_meta(const fs::path& path, const std::string& content, const Json& echo) {
    write_file_atomic(path, content);
    auto meta = path;
    meta += ".meta.json";
    write_file_atomic(meta, echo.dump(2) + "\n");
}

std::string format_metric(double v) { return format_double(v); }

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
    DataSource data;
    std::string out;
    std::string trace;
    std::size_t train_count = 20;
    std::vector<std::int64_t> units;
    double healthy_fraction = 0.5;
    std::string normalizer = "global";
    int condition_decimals = 1;
    CalibrationConfig config;
    double tolerance = -1.0;  // negative = off
    std::string strategy = "best1bin";
    bool verbose = false;
};

std::vector<std::size_t> select_training(const std::vector<TimeSeriesInstance>& all, const CalibrateArgs& a) {
    std::vector<std::size_t> picked;
    if (!a.units.empty()) {
        for (auto id : a.units) {
            auto it = std::find_if(all.begin(), all.end(), [&](const auto& inst) { return inst.unit_id == id; });
            if (it == all.end()) throw DataError("unit " + std::to_string(id) + " is not in the data");
            picked.push_back(static_cast<std::size_t>(it - all.begin()));
        }
    } else {
        if (a.train_count > all.size())
            throw DataError("--train-count " + std::to_string(a.train_count) + " exceeds the " +
                            std::to_string(all.size()) + " units available");
        std::vector<std::size_t> order(all.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        Rng rng(a.config.seed ^ kSelectionSalt);
        for (std::size_t k = 0; k < a.train_count; ++k)
            std::swap(order[k], order[k + static_cast<std::size_t>(rng.below(order.size() - k))]);
        picked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(a.train_count));
    }
    std::sort(picked.begin(), picked.end(), [&](std::size_t x, std::size_t y) { return all[x].unit_id < all[y].unit_id; });
    if (std::adjacent_find(picked.begin(), picked.end()) != picked.end()) throw DataError("--units lists a unit twice");
    return picked;
}

int cmd_calibrate(CalibrateArgs& a, std::ostream& out, std::ostream& err) {
    if (a.tolerance >= 0.0) a.config.tolerance = a.tolerance;
    a.config.strategy = de_strategy_from_string(a.strategy);
    a.config.validate();

    const auto all = load_instances(a.data);
    if (all.empty()) throw DataError("no units in " + a.data.path);
    std::vector<TimeSeriesInstance> train;
    std::vector<std::int64_t> ids;
    for (std::size_t k : select_training(all, a)) {
        if (all[k].cycles() < 4)
            throw DataError("unit " + std::to_string(all[k].unit_id) + " has fewer than 4 cycles");
        train.push_back(all[k]);
        ids.push_back(all[k].unit_id);
    }

    const auto norm = fit_normalizer(train, a.healthy_fraction, normalizer_mode_from_string(a.normalizer),
                                     a.condition_decimals);
    std::size_t warnings = 0;
    const auto result = calibrate(train, norm, a.config, [&](const std::string& w) {
        ++warnings;
        if (a.verbose) err << "warning: " << w << '\n';
    });

    // Thread count is left out on purpose: outputs must not depend on it.
    Json echo = {{"command", "calibrate"},
                 {"data", a.data.path},
                 {"format", a.data.resolved_format()},
                 {"healthy_fraction", a.healthy_fraction},
                 {"normalizer", a.normalizer},
                 {"condition_decimals", a.condition_decimals},
                 {"train_count", ids.size()},
                 {"train_units", ids},
                 {"calibration", to_json(a.config)}};
    write_file_atomic(a.out, result_to_json(result, echo).dump(2) + "\n");
    if (!a.trace.empty()) {
        DETrace trace;
        for (const auto& g : result.trace) trace.generations.push_back({g.generation, {}, g.best_loss, g.mean_loss, g.evaluations});
        std::ostringstream csv;
        write_trace_csv(csv, trace);
        write_with_meta(a.trace, csv.str(), echo);
    }

    out << "gamma " << format_double(result.best.gamma) << "\nloss " << format_double(result.loss) << '\n';
    if (warnings > 0) err << warnings << " infeasible candidates scored +inf\n";
    if (a.verbose) err << "calibration took " << result.seconds << " s\n";
    return kOk;
}

// ------------------------------------------------------------------- detect

struct DetectArgs {
    std::string model;
    DataSource data;
    std::string out;
    std::string loss_curves;
    std::size_t window = 1;
    double eps = 1e-7;
    std::size_t threads = 1;
};

int cmd_detect(const DetectArgs& a, std::ostream& out, std::ostream& err) {
    const auto model = load_model_file(a.model);
    if (model.normalizer.empty()) throw SchemaError("model has no normalizer; it was not produced by calibrate");
    const auto instances = load_instances(a.data);
    const auto reports = detect_batch(model, instances, model.normalizer, a.window, a.eps, a.threads);

    Json echo = {{"command", "detect"},
                 {"model", a.model},
                 {"data", a.data.path},
                 {"format", a.data.resolved_format()},
                 {"window", a.window},
                 {"eps", a.eps}};
    std::ostringstream csv;
    write_reports_csv(csv, reports);
    write_with_meta(a.out, csv.str(), echo);

    if (!a.loss_curves.empty()) {
        fs::create_directories(a.loss_curves);
        for (const auto& r : reports) {
            if (!r.ok()) continue;
            std::ostringstream curve;
            write_loss_curve_csv(curve, r);
            write_file_atomic(fs::path(a.loss_curves) / ("unit_" + std::to_string(r.unit_id) + ".csv"), curve.str());
        }
    }

    std::size_t failed = 0;
    for (const auto& r : reports) {
        if (r.ok()) continue;
        ++failed;
        err << "unit " << r.unit_id << ": " << r.error << '\n';
    }
    out << reports.size() - failed << " of " << reports.size() << " units processed\n";
    return failed == 0 ? kOk : kDataError;
}

// -------------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    std::string truth;
    SyntheticConfig config;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const auto data = generate_synthetic(a.config, a.seed);
    const auto& c = a.config;
    Json echo = {{"command", "synth"},
                 {"units", c.num_units},
                 {"dim", c.dim},
                 {"t_min", c.t_min},
                 {"t_max", c.t_max},
                 {"rho_min", c.rho_min},
                 {"rho_max", c.rho_max},
                 {"drift", c.drift_magnitude},
                 {"ramp_power", c.ramp_power},
                 {"noise", c.noise_std},
                 {"seed", a.seed}};
    std::ostringstream series, truth;
    write_csv(series, synthetic_to_csv(data));
    write_truth_csv(truth, data.truths);
    write_with_meta(a.out, series.str(), echo);
    write_with_meta(a.truth, truth.str(), echo);
    out << data.instances.size() << " units written\n";
    return kOk;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
    std::string reports;
    std::string truth;
    double tolerance = 10.0;
    std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    std::ifstream rin(a.reports);
    if (!rin) throw DataError("cannot open reports file " + a.reports);
    std::ifstream tin(a.truth);
    if (!tin) throw DataError("cannot open truth file " + a.truth);
    const auto m = evaluate_reports(parse_reports_csv(rin), parse_truth_csv(tin), a.tolerance);

    out << "units " << m.units << "\nhit_rate " << format_metric(m.hit_rate) << " (within " << format_metric(a.tolerance)
        << "% of T)\nmae_cycles " << format_metric(m.mae_cycles) << "\nmae_fraction " << format_metric(m.mae_fraction)
        << '\n';
    if (!a.out.empty()) {
        Json j = {{"units", m.units},
                  {"tolerance_pct", m.tolerance_pct},
                  {"hit_rate", m.hit_rate},
                  {"mae_cycles", m.mae_cycles},
                  {"mae_fraction", m.mae_fraction},
                  {"config_echo", {{"command", "eval"}, {"reports", a.reports}, {"truth", a.truth}, {"tolerance", a.tolerance}}}};
        write_file_atomic(a.out, j.dump(2) + "\n");
    }
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Self-calibrating one-class SVM change-point detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "0.1.0");

    CalibrateArgs cal;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Search kernel width and change points on training units");
    calibrate_cmd->set_config("--config", "", "Key-value config file; command-line flags take precedence");
    add_data_options(*calibrate_cmd, cal.data);
    calibrate_cmd->add_option("--out", cal.out, "Calibration result JSON")->required();
    calibrate_cmd->add_option("--trace", cal.trace, "Per-generation trace CSV");
    auto* count_opt = calibrate_cmd->add_option("--train-count", cal.train_count, "Number of randomly selected training units")
                          ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()))
                          ->capture_default_str();
    calibrate_cmd->add_option("--units", cal.units, "Explicit training unit ids")->delimiter(',')->excludes(count_opt);
    calibrate_cmd->add_option("--seed", cal.config.seed, "Seed for unit selection and the search")->capture_default_str();
    calibrate_cmd->add_option("--healthy-fraction", cal.healthy_fraction, "Leading share of each series used for normalization")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    calibrate_cmd->add_option("--normalizer", cal.normalizer, "Normalization mode")
        ->check(CLI::IsMember({"global", "per_condition"}))
        ->capture_default_str();
    calibrate_cmd->add_option("--condition-decimals", cal.condition_decimals, "Rounding of op settings into condition keys")
        ->check(CLI::Range(0, 6))
        ->capture_default_str();
    calibrate_cmd->add_option("--nu", cal.config.nu, "One-class SVM nu")->capture_default_str();
    calibrate_cmd->add_option("--population", cal.config.population, "DE population size")->capture_default_str();
    calibrate_cmd->add_option("--generations", cal.config.generations, "DE update generations")->capture_default_str();
    calibrate_cmd->add_option("--log10-gamma-min", cal.config.bounds.log10_gamma_min)->capture_default_str();
    calibrate_cmd->add_option("--log10-gamma-max", cal.config.bounds.log10_gamma_max)->capture_default_str();
    calibrate_cmd->add_option("--rho-min", cal.config.bounds.rho_min)->capture_default_str();
    calibrate_cmd->add_option("--rho-max", cal.config.bounds.rho_max)->capture_default_str();
    calibrate_cmd->add_option("--strategy", cal.strategy, "DE strategy")
        ->check(CLI::IsMember({"best1bin", "rand1bin"}))
        ->capture_default_str();
    calibrate_cmd->add_option("--f-min", cal.config.f_min, "Lower end of the dithered mutation factor")->capture_default_str();
    calibrate_cmd->add_option("--f-max", cal.config.f_max, "Upper end of the dithered mutation factor")->capture_default_str();
    calibrate_cmd->add_option("--cr", cal.config.cr, "Crossover rate")->capture_default_str();
    calibrate_cmd->add_option("--tolerance", cal.tolerance, "Relative early-stop tolerance (off when negative)")
        ->capture_default_str();
    calibrate_cmd->add_option("--kkt-tol", cal.config.smo.kkt_tol, "SMO stopping tolerance")->capture_default_str();
    calibrate_cmd->add_option("--max-iter", cal.config.smo.max_iter, "SMO pair-update limit")->capture_default_str();
    calibrate_cmd->add_option("--eps", cal.config.eps, "Log-loss clipping")->capture_default_str();
    calibrate_cmd->add_option("--threads", cal.config.threads, "Parallel fitness evaluations")
        ->envname(kThreadsEnv)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    calibrate_cmd->add_flag("-v,--verbose", cal.verbose, "Print per-candidate warnings and timing");

    DetectArgs det;
    auto* detect_cmd = app.add_subcommand("detect", "Locate change points with a calibrated model");
    detect_cmd->set_config("--config", "", "Key-value config file; command-line flags take precedence");
    detect_cmd->add_option("--model", det.model, "Calibration result or model JSON")->required();
    add_data_options(*detect_cmd, det.data);
    detect_cmd->add_option("--out", det.out, "Report CSV")->required();
    detect_cmd->add_option("--window", det.window, "Odd majority-vote smoothing window (1 = off)")
        ->check(CLI::Validator([](const std::string& v) { return std::stoul(v) % 2 == 1 ? "" : "window must be odd"; },
                               "ODD"))
        ->capture_default_str();
    detect_cmd->add_option("--eps", det.eps, "Log-loss clipping")->capture_default_str();
    detect_cmd->add_option("--emit-loss-curves", det.loss_curves, "Directory for per-unit loss curves");
    detect_cmd->add_option("--threads", det.threads, "Units processed in parallel")
        ->envname(kThreadsEnv)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    SynthArgs syn;
    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic run-to-failure series with known change points");
    synth_cmd->set_config("--config", "", "Key-value config file; command-line flags take precedence");
    synth_cmd->add_option("--out", syn.out, "Series CSV")->required();
    synth_cmd->add_option("--truth", syn.truth, "Ground-truth CSV")->required();
    synth_cmd->add_option("--units", syn.config.num_units)->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--dim", syn.config.dim)->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--t-min", syn.config.t_min)->capture_default_str();
    synth_cmd->add_option("--t-max", syn.config.t_max)->capture_default_str();
    synth_cmd->add_option("--rho-min", syn.config.rho_min)->capture_default_str();
    synth_cmd->add_option("--rho-max", syn.config.rho_max)->capture_default_str();
    synth_cmd->add_option("--drift", syn.config.drift_magnitude, "Drift size in noise standard deviations")->capture_default_str();
    synth_cmd->add_option("--ramp-power", syn.config.ramp_power, "Shape of the post-change ramp")->capture_default_str();
    synth_cmd->add_option("--noise", syn.config.noise_std)->capture_default_str();
    synth_cmd->add_option("--seed", syn.seed)->capture_default_str();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score detection reports against ground truth");
    eval_cmd->add_option("--reports", ev.reports, "Report CSV from detect")->required();
    eval_cmd->add_option("--truth", ev.truth, "Ground-truth CSV")->required();
    eval_cmd->add_option("--tolerance", ev.tolerance, "Hit tolerance in percent of T")->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "Metrics JSON");

    try {
        check_threads_env();
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(app, std::move(args));
        std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*calibrate_cmd) return cmd_calibrate(cal, out, err);
        if (*detect_cmd) return cmd_detect(det, out, err);
        if (*synth_cmd) return cmd_synth(syn, out);
        if (*eval_cmd) return cmd_eval(ev, out);
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const CalibrationError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsageError;
}

}  // namespace ocsvm_cpd::cli
