#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using ocsvm_cpd::cli::kDataError;
using ocsvm_cpd::cli::kOk;
using ocsvm_cpd::cli::kUsageError;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run ocsvm(std::vector<std::string> args) {
    args.insert(args.begin(), "ocsvm-cpd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = ocsvm_cpd::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count_lines(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class Workdir {
public:
    Workdir() : path_(fs::temp_directory_path() / ("ocsvm_cpd_cli_" + std::to_string(counter_++))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~Workdir() { fs::remove_all(path_); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

// Small, strongly separated data set that calibrates in well under a second.
void make_easy_data(const Workdir& w) {
    const auto r = ocsvm({"synth", "--out", w / "train.csv", "--truth", w / "truth.csv", "--units", "6", "--dim", "3",
                          "--t-min", "60", "--t-max", "90", "--drift", "8", "--ramp-power", "0", "--seed", "4"});
    REQUIRE(r.code == kOk);
}

const std::vector<std::string> kFastSearch{"--population", "16", "--generations", "4", "--seed", "9"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(ocsvm({}).code == kUsageError);
    CHECK(ocsvm({"frobnicate"}).code == kUsageError);
    CHECK(ocsvm({"calibrate", "--data", "x.txt"}).code == kUsageError);  // no --out
    CHECK(ocsvm({"calibrate", "--data", "x.txt", "--out", "y.json", "--train-count", "0"}).code == kUsageError);
    CHECK(ocsvm({"detect", "--model", "m", "--data", "d", "--out", "o", "--window", "4"}).code == kUsageError);
    CHECK(ocsvm({"calibrate", "--data", "x", "--out", "y", "--units", "1", "--train-count", "3"}).code == kUsageError);
    const auto help = ocsvm({"calibrate", "--help"});
    CHECK(help.code == kOk);
    CHECK(help.out.find("--train-count") != std::string::npos);
}

TEST_CASE("synth writes deterministic bytes with a config sidecar") {
    Workdir w;
    const std::vector<std::string> base{"synth", "--units", "5", "--seed", "12"};
    REQUIRE(ocsvm(with(base, {"--out", w / "a.csv", "--truth", w / "a_truth.csv"})).code == kOk);
    REQUIRE(ocsvm(with(base, {"--out", w / "b.csv", "--truth", w / "b_truth.csv"})).code == kOk);
    CHECK(slurp(w / "a.csv") == slurp(w / "b.csv"));
    CHECK(slurp(w / "a_truth.csv") == slurp(w / "b_truth.csv"));
    CHECK(count_lines(slurp(w / "a_truth.csv")) == 6);

    const auto meta = nlohmann::json::parse(slurp(w / "a.csv.meta.json"));
    CHECK(meta.at("units") == 5);
    CHECK(meta.at("seed") == 12);

    REQUIRE(ocsvm({"synth", "--units", "2", "--seed", "12", "--drift", "0", "--out", w / "z.csv", "--truth",
                   w / "z_truth.csv"})
                .code == kOk);
    CHECK(nlohmann::json::parse(slurp(w / "z.csv.meta.json")).at("drift") == 0.0);
}

TEST_CASE("calibrate, detect and eval end to end") {
    Workdir w;
    make_easy_data(w);
    const auto cal = ocsvm(with({"calibrate", "--data", w / "train.csv", "--train-count", "6", "--out", w / "model.json",
                                 "--trace", w / "trace.csv"},
                                kFastSearch));
    REQUIRE_MESSAGE(cal.code == kOk, cal.err);

    const auto result = nlohmann::json::parse(slurp(w / "model.json"));
    const double gamma = result.at("best").at("gamma");
    CHECK(gamma >= 1e-2);
    CHECK(gamma <= 1e2);
    CHECK(result.at("config_echo").at("train_units").size() == 6);
    CHECK(result.at("config_echo").at("calibration").at("population") == 16);
    CHECK_FALSE(result.at("config_echo").at("calibration").contains("threads"));
    CHECK(count_lines(slurp(w / "trace.csv")) == 1 + 5);
    CHECK(fs::exists(w / "trace.csv.meta.json"));

    // Detecting on the training file reproduces the calibrated split.
    const auto det = ocsvm({"detect", "--model", w / "model.json", "--data", w / "train.csv", "--out", w / "reports.csv",
                            "--emit-loss-curves", w / "curves"});
    REQUIRE_MESSAGE(det.code == kOk, det.err);
    std::ifstream reports(w / "reports.csv");
    std::string line;
    std::getline(reports, line);
    CHECK(line == "unit,change_cycle,T,life_fraction,window");
    std::size_t close = 0, rows = 0;
    const auto& units = result.at("config_echo").at("train_units");
    const auto& cycles = result.at("best").at("change_cycles");
    while (std::getline(reports, line)) {
        std::istringstream fields(line);
        std::string unit, c;
        std::getline(fields, unit, ',');
        std::getline(fields, c, ',');
        for (std::size_t k = 0; k < units.size(); ++k)
            if (units[k].get<long>() == std::stol(unit) && std::abs(std::stol(c) - cycles[k].get<long>()) <= 5) ++close;
        ++rows;
    }
    CHECK(rows == 6);
    CHECK(close >= 5);  // >= 80% of units
    CHECK(fs::exists(w / "curves/unit_1.csv"));
    CHECK(nlohmann::json::parse(slurp(w / "reports.csv.meta.json")).at("command") == "detect");

    const auto ev = ocsvm({"eval", "--reports", w / "reports.csv", "--truth", w / "truth.csv", "--out", w / "metrics.json"});
    REQUIRE(ev.code == kOk);
    CHECK(ev.out.find("hit_rate") != std::string::npos);
    const auto metrics = nlohmann::json::parse(slurp(w / "metrics.json"));
    CHECK(metrics.at("units") == 6);
    // Detection quality on held-out data is an acceptance concern; a 16x4
    // search is too small to assert on it here.
    CHECK(metrics.at("hit_rate").get<double>() >= 0.0);
    CHECK(metrics.at("hit_rate").get<double>() <= 1.0);
}

TEST_CASE("calibrate output is byte-identical across thread counts and unit replay") {
    Workdir w;
    make_easy_data(w);
    const std::vector<std::string> base{"calibrate", "--data", w / "train.csv", "--train-count", "4"};
    REQUIRE(ocsvm(with(with(base, kFastSearch), {"--out", w / "t1.json", "--threads", "1"})).code == kOk);
    REQUIRE(ocsvm(with(with(base, kFastSearch), {"--out", w / "t3.json", "--threads", "3"})).code == kOk);
    CHECK(slurp(w / "t1.json") == slurp(w / "t3.json"));

    const auto first = nlohmann::json::parse(slurp(w / "t1.json"));
    std::string ids;
    for (const auto& id : first.at("config_echo").at("train_units")) ids += (ids.empty() ? "" : ",") + std::to_string(id.get<long>());
    REQUIRE(ocsvm(with({"calibrate", "--data", w / "train.csv", "--units", ids, "--out", w / "replay.json"}, kFastSearch)).code ==
            kOk);
    const auto replay = nlohmann::json::parse(slurp(w / "replay.json"));
    CHECK(replay.at("model") == first.at("model"));
    CHECK(replay.at("best") == first.at("best"));
}

TEST_CASE("config file values apply and flags override them") {
    Workdir w;
    make_easy_data(w);
    std::ofstream(w / "run.toml") << "population = 12\ngenerations = 2\nseed = 5\nnu = 0.2\n";
    REQUIRE(ocsvm({"calibrate", "--config", w / "run.toml", "--data", w / "train.csv", "--train-count", "3", "--out",
                   w / "a.json", "--generations", "3"})
                .code == kOk);
    const auto echo = nlohmann::json::parse(slurp(w / "a.json")).at("config_echo").at("calibration");
    CHECK(echo.at("population") == 12);
    CHECK(echo.at("generations") == 3);
    CHECK(echo.at("seed") == 5);
    CHECK(echo.at("nu") == 0.2);

    std::ofstream(w / "typo.toml") << "populaton = 12\n";
    CHECK(ocsvm({"calibrate", "--config", w / "typo.toml", "--data", w / "train.csv", "--out", w / "b.json"}).code ==
          kUsageError);
    CHECK(ocsvm({"calibrate", "--config", w / "absent.toml", "--data", w / "train.csv", "--out", w / "b.json"}).code ==
          kUsageError);
    CHECK_FALSE(fs::exists(w / "b.json"));

    // Paths can come from the file too; a [synth] section is accepted.
    std::ofstream(w / "synth.toml") << "[synth]\nunits = 3\nseed = 2\nout = \"" << (w / "s.csv") << "\"\ntruth = \""
                                    << (w / "s_truth.csv") << "\"\n";
    REQUIRE(ocsvm({"synth", "--config", w / "synth.toml"}).code == kOk);
    CHECK(count_lines(slurp(w / "s_truth.csv")) == 4);
}

TEST_CASE("data and schema errors exit 1 without writing outputs") {
    Workdir w;
    const auto missing = ocsvm({"calibrate", "--data", w / "nope.txt", "--out", w / "m.json"});
    CHECK(missing.code == kDataError);
    CHECK(missing.err.find("nope.txt") != std::string::npos);
    CHECK_FALSE(fs::exists(w / "m.json"));

    make_easy_data(w);
    CHECK(ocsvm({"calibrate", "--data", w / "train.csv", "--train-count", "7", "--out", w / "m.json"}).code == kDataError);
    CHECK(ocsvm({"calibrate", "--data", w / "train.csv", "--units", "1,99", "--out", w / "m.json"}).code == kDataError);
    CHECK_FALSE(fs::exists(w / "m.json"));

    std::ofstream(w / "bad.json") << "{\"gamma\": [";
    const auto bad = ocsvm({"detect", "--model", w / "bad.json", "--data", w / "train.csv", "--out", w / "r.csv"});
    CHECK(bad.code == kDataError);
    CHECK_FALSE(fs::exists(w / "r.csv"));

    std::ofstream(w / "wrong.json") << "{\"format_version\": 1, \"gamma\": 1.0}";
    CHECK(ocsvm({"detect", "--model", w / "wrong.json", "--data", w / "train.csv", "--out", w / "r.csv"}).code ==
          kDataError);

    std::ofstream(w / "garbled.txt") << "1 1 0 0 100 1 2 3\n";
    CHECK(ocsvm({"calibrate", "--data", w / "garbled.txt", "--out", w / "m.json"}).code == kDataError);
}

TEST_CASE("detect on an empty file writes a header-only report") {
    Workdir w;
    make_easy_data(w);
    REQUIRE(ocsvm(with({"calibrate", "--data", w / "train.csv", "--train-count", "3", "--out", w / "m.json"}, kFastSearch))
                .code == kOk);
    std::ofstream(w / "empty.txt").close();
    const auto r = ocsvm({"detect", "--model", w / "m.json", "--data", w / "empty.txt", "--out", w / "r.csv"});
    CHECK(r.code == kOk);
    CHECK(slurp(w / "r.csv") == "unit,change_cycle,T,life_fraction,window\n");
}

TEST_CASE("eval scores reports and names missing units") {
    Workdir w;
    std::ofstream(w / "truth.csv") << "unit,true_change_cycle,T\n1,70,100\n2,120,200\n3,40,50\n";
    std::ofstream(w / "perfect.csv") << "unit,change_cycle,T,life_fraction,window\n1,70,100,0.7,1\n2,120,200,0.6,1\n3,40,50,0.8,1\n";
    std::ofstream(w / "partial.csv") << "unit,change_cycle,T,life_fraction,window\n1,70,100,0.7,1\n3,40,50,0.8,1\n";
    const auto perfect = ocsvm({"eval", "--reports", w / "perfect.csv", "--truth", w / "truth.csv"});
    CHECK(perfect.code == kOk);
    CHECK(perfect.out.find("hit_rate 1 ") != std::string::npos);
    CHECK(perfect.out.find("mae_cycles 0\n") != std::string::npos);
    const auto partial = ocsvm({"eval", "--reports", w / "partial.csv", "--truth", w / "truth.csv"});
    CHECK(partial.code == kDataError);
    CHECK(partial.err.find("unit 2") != std::string::npos);
}

TEST_CASE("thread count can come from the environment") {
    Workdir w;
    make_easy_data(w);
    ::setenv("OCSVM_CPD_THREADS", "0", 1);
    CHECK(ocsvm(with({"calibrate", "--data", w / "train.csv", "--train-count", "3", "--out", w / "m.json"}, kFastSearch))
              .code == kUsageError);
    ::setenv("OCSVM_CPD_THREADS", "many", 1);
    CHECK(ocsvm({"eval", "--reports", "r", "--truth", "t"}).code == kUsageError);
    ::setenv("OCSVM_CPD_THREADS", "2", 1);
    CHECK(ocsvm(with({"calibrate", "--data", w / "train.csv", "--train-count", "3", "--out", w / "m.json"}, kFastSearch)).code ==
          kOk);
    ::unsetenv("OCSVM_CPD_THREADS");
}
