#include "ocsvm_cpd/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ocsvm_cpd/errors.hpp"

namespace ocsvm_cpd {

namespace {

const Json& require(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
    return j.at(key);
}

double require_number(const Json& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_number()) throw SchemaError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::vector<double> number_array(const Json& v, const char* what) {
    if (!v.is_array()) throw SchemaError(std::string(what) + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number()) throw SchemaError(std::string(what) + " must hold numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<std::size_t> index_array(const Json& v, const char* what) {
    if (!v.is_array()) throw SchemaError(std::string(what) + " must be an array");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0))
            throw SchemaError(std::string(what) + " must hold nonnegative integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

// JSON has no infinity; infeasible generations carry null.
Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json to_json(const Normalizer& normalizer) {
    Json groups = Json::array();
    for (const auto& g : normalizer.groups) groups.push_back({{"key", g.key}, {"mean", g.mean}, {"std", g.std}});
    return {{"mode", to_string(normalizer.mode)},
            {"condition_decimals", normalizer.condition_decimals},
            {"input_width", normalizer.input_width},
            {"feature_mask", normalizer.feature_mask},
            {"groups", groups}};
}

Normalizer normalizer_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("normalizer must be an object");
    Normalizer n;
    if (j.empty()) return n;
    const auto& mode = require(j, "mode");
    if (!mode.is_string()) throw SchemaError("normalizer mode must be a string");
    try {
        n.mode = normalizer_mode_from_string(mode.get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
    n.condition_decimals = static_cast<int>(require_number(j, "condition_decimals"));
    if (j.contains("input_width")) n.input_width = static_cast<std::size_t>(require_number(j, "input_width"));
    n.feature_mask = index_array(require(j, "feature_mask"), "normalizer.feature_mask");
    for (std::size_t k : n.feature_mask)
        if (n.input_width != 0 && k >= n.input_width) throw SchemaError("feature_mask index beyond input_width");
    const auto& groups = require(j, "groups");
    if (!groups.is_array()) throw SchemaError("normalizer groups must be an array");
    for (const auto& g : groups) {
        ConditionStats s;
        s.key = number_array(require(g, "key"), "group key");
        s.mean = number_array(require(g, "mean"), "group mean");
        s.std = number_array(require(g, "std"), "group std");
        if (s.mean.size() != n.feature_mask.size() || s.std.size() != n.feature_mask.size())
            throw SchemaError("normalizer group width does not match feature_mask");
        for (double sd : s.std)
            if (!(sd >= Normalizer::kMinStd)) throw SchemaError("normalizer std below threshold");
        n.groups.push_back(std::move(s));
    }
    if (!n.feature_mask.empty() && n.groups.empty()) throw SchemaError("normalizer has no groups");
    return n;
}

Json to_json(const TrainedModel& model) {
    Json svs = Json::array();
    for (std::size_t k = 0; k < model.support_vectors.rows(); ++k) {
        const auto row = model.support_vectors.row(k);
        svs.push_back(std::vector<double>(row.begin(), row.end()));
    }
    const Json normalizer = model.normalizer.empty() ? Json::object() : to_json(model.normalizer);
    return {{"gamma", model.gamma},
            {"nu", model.nu},
            {"offset_b", model.offset_b},
            {"alphas", model.alphas},
            {"support_vectors", svs},
            {"feature_mask", model.feature_mask},
            {"normalizer", normalizer},
            {"format_version", kModelFormatVersion}};
}

TrainedModel model_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("model document must be a JSON object");
    const auto& version = require(j, "format_version");
    if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion)
        throw SchemaError("unsupported format_version");
    TrainedModel m;
    m.gamma = require_number(j, "gamma");
    m.nu = require_number(j, "nu");
    m.offset_b = require_number(j, "offset_b");
    if (!(m.gamma > 0.0)) throw SchemaError("gamma must be positive");
    if (!(m.nu > 0.0 && m.nu <= 1.0)) throw SchemaError("nu must lie in (0, 1]");
    m.alphas = number_array(require(j, "alphas"), "alphas");
    const auto& svs = require(j, "support_vectors");
    if (!svs.is_array()) throw SchemaError("support_vectors must be an array");
    for (const auto& row : svs) {
        const auto values = number_array(row, "support vector");
        if (m.support_vectors.rows() > 0 && values.size() != m.support_vectors.cols())
            throw SchemaError("support vectors differ in dimension");
        m.support_vectors.append_row(values);
    }
    if (m.alphas.empty() || m.alphas.size() != m.support_vectors.rows())
        throw SchemaError("alphas and support_vectors must be nonempty and the same length");
    for (double a : m.alphas)
        if (!(a > 0.0)) throw SchemaError("alphas must be strictly positive");
    m.feature_mask = index_array(require(j, "feature_mask"), "feature_mask");
    m.normalizer = normalizer_from_json(require(j, "normalizer"));
    if (!m.normalizer.empty() && m.normalizer.feature_mask.size() != m.support_vectors.cols())
        throw SchemaError("normalizer width does not match support vector dimension");
    return m;
}

Json to_json(const CalibrationConfig& config) {
    Json j = {{"nu", config.nu},
              {"population", config.population},
              {"generations", config.generations},
              {"log10_gamma_bounds", {config.bounds.log10_gamma_min, config.bounds.log10_gamma_max}},
              {"rho_bounds", {config.bounds.rho_min, config.bounds.rho_max}},
              {"strategy", to_string(config.strategy)},
              {"mutation", {config.f_min, config.f_max}},
              {"crossover", config.cr},
              {"tolerance", config.tolerance ? Json(*config.tolerance) : Json(nullptr)},
              {"seed", config.seed},
              {"kkt_tol", config.smo.kkt_tol},
              {"max_iter", config.smo.max_iter},
              {"log_loss_eps", config.eps}};
    return j;
}

Json result_to_json(const CalibrationResult& result, const Json& config_echo) {
    Json trace = Json::array();
    for (const auto& g : result.trace)
        trace.push_back({{"generation", g.generation},
                         {"best_loss", finite_or_null(g.best_loss)},
                         {"mean_loss", finite_or_null(g.mean_loss)}});
    return {{"best",
             {{"gamma", result.best.gamma},
              {"rho", result.best.rho},
              {"change_cycles", result.best.change_cycles}}},
            {"loss", result.loss},
            {"trace", trace},
            {"model", to_json(result.model)},
            {"config_echo", config_echo}};
}

TrainedModel load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("model") && !j.contains("alphas")) return model_from_json(j.at("model"));
    return model_from_json(j);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace ocsvm_cpd
