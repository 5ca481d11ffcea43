#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imbal/binning.hpp"
#include "imbal/error.hpp"
#include "imbal/logistic.hpp"

namespace imbal {

using json = nlohmann::json;

// Doubles are written in shortest round-trip form, so every artifact below
// reads back bit-identical.

inline json to_json(const BinningScheme& s)
{
    json bins = json::array();
    for (std::size_t j = 0; j < s.bins.size(); ++j) {
        bins.push_back({{"label", s.bin_label(j)},
                        {"count", s.bins[j].count},
                        {"events", s.bins[j].events},
                        {"woe", s.bins[j].woe}});
    }
    return {{"variable", s.variable},
            {"method", to_string(s.method)},
            {"cuts", s.cuts},
            {"has_missing_bin", s.has_missing_bin},
            {"usable", s.usable},
            {"bins", bins}};
}

inline BinningScheme scheme_from_json(const json& j)
{
    try {
        BinningScheme s;
        s.variable = j.at("variable").get<std::string>();
        s.method = parse_bin_method(j.at("method").get<std::string>());
        s.cuts = j.at("cuts").get<std::vector<double>>();
        s.has_missing_bin = j.at("has_missing_bin").get<bool>();
        s.usable = j.value("usable", true);
        for (const auto& b : j.at("bins")) {
            s.bins.push_back(BinStats{b.at("count").get<std::size_t>(), b.at("events").get<std::size_t>(),
                                      b.at("woe").get<double>()});
        }
        if (s.bins.size() != s.cuts.size() + 1 + (s.has_missing_bin ? 1 : 0))
            throw DataError("scheme for '" + s.variable + "' has inconsistent bin and cut counts");
        if (!std::is_sorted(s.cuts.begin(), s.cuts.end()) ||
            std::adjacent_find(s.cuts.begin(), s.cuts.end()) != s.cuts.end())
            throw DataError("scheme for '" + s.variable + "' has cuts that are not strictly increasing");
        return s;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed binning scheme: ") + e.what());
    }
}

inline json schemes_to_json(const std::vector<BinningScheme>& schemes)
{
    json arr = json::array();
    for (const auto& s : schemes) arr.push_back(to_json(s));
    return {{"format", "imbal-binning-schemes"}, {"version", 1}, {"schemes", arr}};
}

inline std::vector<BinningScheme> schemes_from_json(const json& j)
{
    if (j.value("format", "") != "imbal-binning-schemes") throw DataError("not a binning scheme document");
    std::vector<BinningScheme> out;
    for (const auto& s : j.at("schemes")) out.push_back(scheme_from_json(s));
    return out;
}

inline json to_json(const ClassWeights& w)
{
    return {{"w1", w.w1}, {"w0", w.w0}, {"tau", w.tau}, {"ybar", w.ybar}};
}

inline ClassWeights weights_from_json(const json& j)
{
    return {j.at("w1").get<double>(), j.at("w0").get<double>(), j.at("tau").get<double>(), j.at("ybar").get<double>()};
}

inline json to_json(const ModelFit& f)
{
    json coef = json::array();
    for (std::size_t i = 0; i < f.names.size(); ++i)
        coef.push_back({{"name", f.names[i]}, {"value", f.beta(static_cast<Eigen::Index>(i))}});
    return {{"coefficients", coef},
            {"weights", to_json(f.weights)},
            {"convergence",
             {{"log_likelihood", f.log_likelihood},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"stop", to_string(f.stop)},
              {"gradient_norm", f.gradient_norm},
              {"trace", f.trace},
              {"warnings", f.warnings}}}};
}

inline StopReason parse_stop_reason(const std::string& s)
{
    if (s == "gradient") return StopReason::gradient;
    if (s == "likelihood") return StopReason::likelihood;
    if (s == "line_search") return StopReason::line_search;
    return StopReason::max_iterations;
}

inline ModelFit fit_from_json(const json& j)
{
    try {
        ModelFit f;
        const auto& coef = j.at("coefficients");
        f.beta.resize(static_cast<Eigen::Index>(coef.size()));
        for (std::size_t i = 0; i < coef.size(); ++i) {
            f.names.push_back(coef[i].at("name").get<std::string>());
            f.beta(static_cast<Eigen::Index>(i)) = coef[i].at("value").get<double>();
        }
        f.weights = weights_from_json(j.at("weights"));
        const auto& c = j.at("convergence");
        f.log_likelihood = c.at("log_likelihood").get<double>();
        f.iterations = c.at("iterations").get<int>();
        f.converged = c.at("converged").get<bool>();
        f.stop = parse_stop_reason(c.at("stop").get<std::string>());
        f.gradient_norm = c.at("gradient_norm").get<double>();
        f.trace = c.value("trace", std::vector<double>{});
        f.warnings = c.value("warnings", std::vector<std::string>{});
        return f;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model fit: ") + e.what());
    }
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace imbal
