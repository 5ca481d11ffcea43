#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "imbal/binning.hpp"
#include "imbal/dataset.hpp"
#include "imbal/diagnostics.hpp"
#include "imbal/error.hpp"
#include "imbal/evaluation.hpp"
#include "imbal/logistic.hpp"
#include "imbal/serialize.hpp"
#include "imbal/stats.hpp"

namespace imbal {

// ---------------------------------------------------------------------------
// Configuration

struct TauSettings {
    std::vector<double> grid;  // explicit grid; empty means `points` values from ybar to `upper`
    std::size_t points = 20;
    double upper = 0.5;
    std::optional<double> model3;  // fixed tau instead of the sweep result
    std::optional<double> model5;
};

struct PipelineConfig {
    std::string data;
    CsvSchema schema;
    SplitSpec split;
    BinMethod method = BinMethod::quantile;
    BinningOptions binning;
    bool drop_reference = true;
    double iv_threshold = 0.1;
    StrengthThresholds strength = kDefaultStrength;
    double linearity_margin = 0.1;
    std::string interval_drop = "all";  // "all" predictors or only the "modeled" ones
    TauSettings tau;
    FitOptions optimizer;
    std::string output_dir = "out";
};

inline json config_to_json(const PipelineConfig& c)
{
    json columns = {{"target", c.schema.target},
                    {"predictors", c.schema.predictors},
                    {"ignore", c.schema.ignore},
                    {"missing_values", c.schema.missing_tokens}};
    columns["id"] = c.schema.id ? json(*c.schema.id) : json(nullptr);
    json tau = {{"grid", c.tau.grid}, {"points", c.tau.points}, {"upper", c.tau.upper}};
    tau["model3"] = c.tau.model3 ? json(*c.tau.model3) : json(nullptr);
    tau["model5"] = c.tau.model5 ? json(*c.tau.model5) : json(nullptr);
    return {{"data", c.data},
            {"columns", columns},
            {"split",
             {{"train_fraction", c.split.train_fraction},
              {"folds", c.split.fold_count},
              {"stratified", c.split.stratified},
              {"seed", c.split.seed}}},
            {"binning",
             {{"method", to_string(c.method)},
              {"max_bins", c.binning.max_bins},
              {"merge_alpha", c.binning.merge_alpha},
              {"split_alpha", c.binning.split_alpha},
              {"min_bin_fraction", c.binning.min_bin_fraction},
              {"n_ranks", c.binning.n_ranks},
              {"drop_reference", c.drop_reference}}},
            {"screening",
             {{"iv_threshold", c.iv_threshold},
              {"strength_thresholds", c.strength},
              {"linearity_margin", c.linearity_margin}}},
            {"interval_drop", c.interval_drop},
            {"tau", tau},
            {"optimizer",
             {{"max_iterations", c.optimizer.max_iterations},
              {"ll_tolerance", c.optimizer.ll_tolerance},
              {"gradient_tolerance", c.optimizer.gradient_tolerance},
              {"max_halvings", c.optimizer.max_halvings},
              {"standardize", c.optimizer.standardize},
              {"separation_threshold", c.optimizer.separation_threshold}}},
            {"output_dir", c.output_dir}};
}

/// Missing keys keep their defaults; present keys are range-checked.
inline PipelineConfig config_from_json(const json& j)
{
    PipelineConfig c;
    try {
        c.data = j.value("data", c.data);
        if (j.contains("columns")) {
            const auto& cols = j.at("columns");
            c.schema.target = cols.value("target", c.schema.target);
            if (cols.contains("id") && !cols.at("id").is_null()) c.schema.id = cols.at("id").get<std::string>();
            c.schema.predictors = cols.value("predictors", c.schema.predictors);
            c.schema.ignore = cols.value("ignore", c.schema.ignore);
            c.schema.missing_tokens = cols.value("missing_values", c.schema.missing_tokens);
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
            c.split.fold_count = s.value("folds", c.split.fold_count);
            c.split.stratified = s.value("stratified", c.split.stratified);
            c.split.seed = s.value("seed", c.split.seed);
        }
        if (j.contains("binning")) {
            const auto& b = j.at("binning");
            c.method = parse_bin_method(b.value("method", to_string(c.method)));
            c.binning.max_bins = b.value("max_bins", c.binning.max_bins);
            c.binning.merge_alpha = b.value("merge_alpha", c.binning.merge_alpha);
            c.binning.split_alpha = b.value("split_alpha", c.binning.split_alpha);
            c.binning.min_bin_fraction = b.value("min_bin_fraction", c.binning.min_bin_fraction);
            c.binning.n_ranks = b.value("n_ranks", c.binning.n_ranks);
            c.drop_reference = b.value("drop_reference", c.drop_reference);
        }
        if (j.contains("screening")) {
            const auto& s = j.at("screening");
            c.iv_threshold = s.value("iv_threshold", c.iv_threshold);
            c.strength = s.value("strength_thresholds", c.strength);
            c.linearity_margin = s.value("linearity_margin", c.linearity_margin);
        }
        c.interval_drop = j.value("interval_drop", c.interval_drop);
        if (j.contains("tau")) {
            const auto& t = j.at("tau");
            c.tau.grid = t.value("grid", c.tau.grid);
            c.tau.points = t.value("points", c.tau.points);
            c.tau.upper = t.value("upper", c.tau.upper);
            if (t.contains("model3") && !t.at("model3").is_null()) c.tau.model3 = t.at("model3").get<double>();
            if (t.contains("model5") && !t.at("model5").is_null()) c.tau.model5 = t.at("model5").get<double>();
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            c.optimizer.max_iterations = o.value("max_iterations", c.optimizer.max_iterations);
            c.optimizer.ll_tolerance = o.value("ll_tolerance", c.optimizer.ll_tolerance);
            c.optimizer.gradient_tolerance = o.value("gradient_tolerance", c.optimizer.gradient_tolerance);
            c.optimizer.max_halvings = o.value("max_halvings", c.optimizer.max_halvings);
            c.optimizer.standardize = o.value("standardize", c.optimizer.standardize);
            c.optimizer.separation_threshold = o.value("separation_threshold", c.optimizer.separation_threshold);
        }
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("config: " + what);
    };
    check(!c.schema.target.empty(), "columns.target is required");
    check(c.split.train_fraction > 0.0 && c.split.train_fraction < 1.0, "split.train_fraction must lie in (0,1)");
    check(c.split.fold_count >= 2, "split.folds must be at least 2");
    check(c.binning.max_bins >= 2, "binning.max_bins must be at least 2");
    check(c.binning.merge_alpha > 0.0 && c.binning.merge_alpha < 1.0, "binning.merge_alpha must lie in (0,1)");
    check(c.binning.split_alpha > 0.0 && c.binning.split_alpha < 1.0, "binning.split_alpha must lie in (0,1)");
    check(c.binning.min_bin_fraction >= 0.0 && c.binning.min_bin_fraction < 0.5,
          "binning.min_bin_fraction must lie in [0,0.5)");
    check(c.binning.n_ranks >= 1, "binning.n_ranks must be positive");
    check(c.iv_threshold >= 0.0, "screening.iv_threshold must be non-negative");
    check(c.strength[0] <= c.strength[1] && c.strength[1] <= c.strength[2],
          "screening.strength_thresholds must be non-decreasing");
    check(c.interval_drop == "all" || c.interval_drop == "modeled", "interval_drop must be 'all' or 'modeled'");
    check(c.tau.points >= 1, "tau.points must be positive");
    check(c.tau.upper >= kTauFloor && c.tau.upper < 1.0, "tau.upper must lie in [0.01,1)");
    for (double t : c.tau.grid) check(t >= kTauFloor && t < 1.0, "tau.grid values must lie in [0.01,1)");
    for (const auto& t : {c.tau.model3, c.tau.model5})
        if (t) check(*t >= kTauFloor && *t < 1.0, "tau.model3/model5 must lie in [0.01,1)");
    check(c.optimizer.max_iterations >= 1, "optimizer.max_iterations must be positive");
    return c;
}

inline PipelineConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    auto c = config_from_json(j);
    // Relative data paths are resolved against the config file's directory.
    namespace fs = std::filesystem;
    if (!c.data.empty() && fs::path(c.data).is_relative())
        c.data = (fs::path(path).parent_path() / c.data).lexically_normal().string();
    return c;
}

// ---------------------------------------------------------------------------
// Artifact output

/// 64-bit FNV-1a content digest.
inline std::string digest(const std::string& bytes)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : width_(header.size()) { row(header); }

    CsvTable& row(const std::vector<std::string>& cells)
    {
        if (cells.size() != width_) throw std::logic_error("CSV row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << quote(cells[i]);
        }
        out_ << '\n';
        return *this;
    }

    std::string str() const { return out_.str(); }

private:
    static std::string quote(const std::string& s)
    {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"') q += '"';
            q += ch;
        }
        return q + '"';
    }

    std::size_t width_;
    std::ostringstream out_;
};

inline std::string num(double v) { return format_number(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

/// Collects a stage's files in memory and writes them, plus the run
/// manifest, in one go.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::string dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { pending_[name] = std::move(content); }
    void add(const std::string& name, const CsvTable& t) { add(name, t.str()); }
    void add(const std::string& name, const json& j) { add(name, j.dump(2) + "\n"); }

    void time_stage(const std::string& stage, double seconds) { timings_[stage] = seconds; }

    const std::string& dir() const { return dir_; }
    std::filesystem::path path(const std::string& name) const { return std::filesystem::path(dir_) / name; }

    /// Writes pending files and merges them into manifest.json.
    void flush(const std::string& command, const PipelineConfig& cfg)
    {
        namespace fs = std::filesystem;
        fs::create_directories(dir_);
        for (const auto& [name, content] : pending_) {
            std::ofstream out(path(name), std::ios::binary);
            if (!out) throw DataError("cannot write '" + path(name).string() + "'");
            out << content;
        }

        json manifest;
        if (fs::exists(path("manifest.json"))) {
            try {
                manifest = read_json_file(path("manifest.json").string());
            } catch (const DataError&) {
                manifest = json::object();
            }
        }
        auto& artifacts = manifest["artifacts"];
        if (!artifacts.is_object()) artifacts = json::object();
        for (const auto& [name, content] : pending_) artifacts[name] = {{"digest", digest(content)}, {"bytes", content.size()}};
        auto& stages = manifest["stages"];
        if (!stages.is_object()) stages = json::object();
        for (const auto& [stage, secs] : timings_) stages[stage] = {{"seconds", secs}};
        manifest["last_command"] = command;
        manifest["seed"] = cfg.split.seed;
        manifest["config"] = config_to_json(cfg);
        std::ofstream out(path("manifest.json"));
        out << manifest.dump(2) << "\n";
        pending_.clear();
        timings_.clear();
    }

private:
    std::string dir_;
    std::map<std::string, std::string> pending_;
    std::map<std::string, double> timings_;
};

class StageTimer {
public:
    StageTimer(ArtifactWriter& w, std::string stage) : w_(w), stage_(std::move(stage)), t0_(Clock::now()) {}
    ~StageTimer() { w_.time_stage(stage_, std::chrono::duration<double>(Clock::now() - t0_).count()); }
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;

private:
    using Clock = std::chrono::steady_clock;
    ArtifactWriter& w_;
    std::string stage_;
    Clock::time_point t0_;
};

// ---------------------------------------------------------------------------
// Model designs

enum class Family { interval, discretized };

inline std::string to_string(Family f) { return f == Family::interval ? "interval" : "discretized"; }

inline Family family_of(int model) { return model >= 4 ? Family::discretized : Family::interval; }

/// Numeric design for a model: raw interval columns, or one-hot dummies of
/// the given schemes.
struct Design {
    Family family = Family::interval;
    std::vector<std::string> variables;   // source variables
    std::vector<std::string> columns;     // design column names
    std::vector<BinningScheme> schemes;   // discretized family only
    bool drop_reference = true;
};

inline Eigen::MatrixXd build_matrix(const Design& design, const Dataset& d)
{
    if (design.family == Family::discretized) {
        return one_hot(std::span<const BinningScheme>(design.schemes), d, design.drop_reference).values;
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(d.rows()), static_cast<Eigen::Index>(design.variables.size()));
    for (std::size_t c = 0; c < design.variables.size(); ++c) {
        const auto& col = d.column(design.variables[c]);
        for (std::size_t r = 0; r < d.rows(); ++r) {
            if (is_missing(col[r])) {
                throw DataError("row " + d.ids[r] + ": variable '" + design.variables[c] +
                                "' is missing and the interval model has no missing bin");
            }
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
        }
    }
    return x;
}

inline Design interval_design(std::vector<std::string> vars)
{
    Design d;
    d.family = Family::interval;
    d.columns = vars;
    d.variables = std::move(vars);
    return d;
}

inline Design discretized_design(std::vector<BinningScheme> schemes, bool drop_reference)
{
    Design d;
    d.family = Family::discretized;
    d.drop_reference = drop_reference;
    for (const auto& s : schemes) {
        d.variables.push_back(s.variable);
        for (std::size_t b = (drop_reference ? 1 : 0); b < s.bin_count(); ++b) d.columns.push_back(dummy_name(s, b));
    }
    d.schemes = std::move(schemes);
    return d;
}

inline json design_to_json(const Design& d)
{
    json j = {{"family", to_string(d.family)}, {"variables", d.variables}, {"columns", d.columns},
              {"drop_reference", d.drop_reference}};
    if (d.family == Family::discretized) {
        json arr = json::array();
        for (const auto& s : d.schemes) arr.push_back(to_json(s));
        j["schemes"] = arr;
    }
    return j;
}

inline Design design_from_json(const json& j)
{
    try {
        Design d;
        d.family = j.at("family").get<std::string>() == "discretized" ? Family::discretized : Family::interval;
        d.variables = j.at("variables").get<std::vector<std::string>>();
        d.columns = j.at("columns").get<std::vector<std::string>>();
        d.drop_reference = j.value("drop_reference", true);
        if (d.family == Family::discretized)
            for (const auto& s : j.at("schemes")) d.schemes.push_back(scheme_from_json(s));
        return d;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed design: ") + e.what());
    }
}

/// A fitted model as written by `train`: design, coefficients and the
/// probability cutoff chosen on the test part.
struct TrainedModel {
    int model = 0;
    Design design;
    ModelFit fit;
    double cutoff = 0.5;
};

inline json to_json(const TrainedModel& m)
{
    json j = to_json(m.fit);
    j["format"] = "imbal-model-fit";
    j["version"] = 1;
    j["model"] = m.model;
    j["cutoff"] = m.cutoff;
    j["design"] = design_to_json(m.design);
    return j;
}

inline TrainedModel trained_model_from_json(const json& j)
{
    if (j.value("format", "") != "imbal-model-fit") throw DataError("not a model fit document");
    TrainedModel m;
    m.model = j.value("model", 0);
    m.fit = fit_from_json(j);
    m.cutoff = j.at("cutoff").get<double>();
    m.design = design_from_json(j.at("design"));
    if (static_cast<std::size_t>(m.fit.beta.size()) != m.design.columns.size() + 1)
        throw DataError("model fit and design disagree on the number of columns");
    return m;
}

inline std::vector<double> score_rows(const TrainedModel& m, const Dataset& d)
{
    return predict_proba(m.fit, build_matrix(m.design, d));
}

// ---------------------------------------------------------------------------
// Stage results

struct ExploreResult {
    MissingnessSummary missingness;
    std::vector<EmpiricalLogitTable> tables;
    std::vector<std::optional<LinearityScore>> linearity;
};

struct BinResult {
    std::vector<BinningScheme> schemes;
    std::vector<IVReport> iv;  // sorted by IV, descending
    std::vector<std::string> selected;
    std::vector<std::string> unusable;
};

struct MethodComparison {
    BinMethod method;
    std::size_t variables = 0;
    std::size_t dummies = 0;
    double test_auc = 0.0;
};

struct SweepResult {
    Family family;
    TauSweep sweep;
};

struct TrainResult {
    TrainedModel model;
    CVResult cv;
    ConfusionReport test;
    CutoffChoice cutoff;
    double test_auc = 0.0;
    std::optional<VIFReport> vif;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
};

// ---------------------------------------------------------------------------
// The pipeline

/// Runs the stages against one config. Stages communicate only through the
/// files they write to the output directory.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), out_(cfg_.output_dir) {}

    const PipelineConfig& config() const { return cfg_; }
    ArtifactWriter& writer() { return out_; }

    const Dataset& data()
    {
        if (!data_) {
            if (cfg_.data.empty()) throw ConfigError("config: 'data' path is not set");
            check_header(cfg_.data, cfg_.schema);
            data_ = load_csv(cfg_.data, cfg_.schema);
            if (data_->rows() < 2) throw DataError(cfg_.data + ": fewer than 2 data rows");
            const auto ev = data_->events();
            if (ev == 0 || ev == data_->rows()) throw DataError(cfg_.data + ": target needs both classes");
        }
        return *data_;
    }

    void set_data(Dataset d) { data_ = std::move(d); }

    const std::vector<std::string>& predictors() { return data().names; }

    const RowSplit& row_split()
    {
        if (!split_) split_ = split_rows(data(), cfg_.split);
        return *split_;
    }

    Dataset train_part() { return data().subset(row_split().train); }
    Dataset test_part() { return data().subset(row_split().test); }

    /// Drops rows with missing interval values, over all predictors or only
    /// the modelled ones depending on the config.
    Dataset interval_rows(const Dataset& part, const std::vector<std::string>& modeled)
    {
        const auto& vars = cfg_.interval_drop == "all" ? part.names : modeled;
        return apply_missing_policy(part, MissingPolicy::drop_rows, vars).data;
    }

    // -- explore ------------------------------------------------------------

    ExploreResult explore()
    {
        StageTimer timer(out_, "explore");
        const auto& d = data();
        ExploreResult res;
        res.missingness = missingness_summary(d);

        CsvTable miss({"variable", "missing", "missing_fraction"});
        for (std::size_t i = 0; i < d.names.size(); ++i) {
            miss.row({d.names[i], num(res.missingness.missing[i]),
                      num(static_cast<double>(res.missingness.missing[i]) / static_cast<double>(d.rows()))});
        }
        out_.add("missingness.csv", miss);
        std::vector<std::string> head{"variable"};
        head.insert(head.end(), d.names.begin(), d.names.end());
        CsvTable co(head);
        for (std::size_t i = 0; i < d.names.size(); ++i) {
            std::vector<std::string> r{d.names[i]};
            for (std::size_t j = 0; j < d.names.size(); ++j) r.push_back(num(res.missingness.co_missing[i][j]));
            co.row(r);
        }
        out_.add("missingness_pairs.csv", co);

        CsvTable lin({"variable", "rank_groups", "r2_value", "r2_rank", "value_slope", "value_intercept", "rank_slope",
                      "rank_intercept", "recommendation"});
        for (std::size_t v = 0; v < d.names.size(); ++v) {
            const auto& name = d.names[v];
            auto t = empirical_logit_table(d.columns[v], d.target, cfg_.binning.n_ranks, name);
            CsvTable tab({"rank_first", "rank_last", "min", "max", "mean", "count", "events", "elogit"});
            CsvTable by_value({"mean", "elogit"});
            CsvTable by_rank({"rank", "elogit"});
            for (const auto& r : t.rows) {
                tab.row({num(r.first_rank), num(r.last_rank), num(r.min), num(r.max), num(r.mean), num(r.count),
                         num(r.events), num(r.elogit)});
                by_value.row({num(r.mean), num(r.elogit)});
                by_rank.row({num(r.rank_position()), num(r.elogit)});
            }
            out_.add("elogit_" + name + ".csv", tab);
            out_.add("elogit_value_" + name + ".csv", by_value);
            out_.add("elogit_rank_" + name + ".csv", by_rank);

            std::optional<LinearityScore> ls;
            if (t.rows.size() >= 3) ls = linearity_score(t, cfg_.linearity_margin);
            if (ls) {
                lin.row({name, num(t.rows.size()), num(ls->r2_value), num(ls->r2_rank), num(ls->value_line.slope),
                         num(ls->value_line.intercept), num(ls->rank_line.slope), num(ls->rank_line.intercept),
                         ls->discretize ? "discretize" : "interval"});
            } else {
                lin.row({name, num(t.rows.size()), "", "", "", "", "", "", "too_few_ranks"});
            }
            res.tables.push_back(std::move(t));
            res.linearity.push_back(ls);
        }
        out_.add("linearity.csv", lin);
        return res;
    }

    // -- bin ----------------------------------------------------------------

    BinResult bin_with(BinMethod method, const Dataset& train)
    {
        BinResult res;
        for (std::size_t v = 0; v < train.names.size(); ++v) {
            auto s = build_scheme(train.columns[v], train.target, method, cfg_.binning, train.names[v]);
            if (!s.usable) res.unusable.push_back(s.variable);
            res.schemes.push_back(std::move(s));
        }
        for (const auto& s : res.schemes) {
            if (!s.usable) continue;
            res.iv.push_back(information_value(s, cfg_.strength));
        }
        std::stable_sort(res.iv.begin(), res.iv.end(), [](const IVReport& a, const IVReport& b) { return a.iv > b.iv; });
        res.selected = select_variables(res.iv, cfg_.iv_threshold);
        return res;
    }

    BinResult bin(std::optional<BinMethod> method_override = std::nullopt)
    {
        StageTimer timer(out_, "bin");
        const auto method = method_override.value_or(cfg_.method);
        const auto train = train_part();
        auto res = bin_with(method, train);
        out_.add("schemes.json", schemes_to_json(res.schemes));
        out_.add("iv.csv", iv_table(res));
        return res;
    }

    CsvTable iv_table(const BinResult& res) const
    {
        CsvTable t({"variable", "bins", "information_value", "strength", "selected"});
        for (const auto& r : res.iv) {
            const bool sel = std::find(res.selected.begin(), res.selected.end(), r.variable) != res.selected.end();
            t.row({r.variable, num(r.bins), num(r.iv), to_string(r.strength), sel ? "yes" : "no"});
        }
        for (const auto& u : res.unusable) t.row({u, "1", "", "unusable", "no"});
        return t;
    }

    /// Fits the discretized model on the training part for each method and
    /// reports its AUC on the test part.
    std::vector<MethodComparison> compare_methods()
    {
        StageTimer timer(out_, "bin_compare");
        const auto train = train_part();
        const auto test = test_part();
        std::vector<MethodComparison> rows;
        CsvTable t({"method", "selected_variables", "dummies", "test_auc"});
        for (auto m : {BinMethod::distance, BinMethod::quantile, BinMethod::gini, BinMethod::optimal}) {
            auto res = bin_with(m, train);
            MethodComparison mc{m, res.selected.size(), 0, 0.0};
            if (!res.selected.empty() && test.events() > 0) {
                auto design = discretized_design(schemes_for(res.schemes, res.selected), cfg_.drop_reference);
                const auto xtr = build_matrix(design, train);
                const auto f = fit(xtr, train.target, ClassWeights::unit(train.event_rate()), cfg_.optimizer,
                                   design.columns);
                mc.dummies = design.columns.size();
                mc.test_auc = auc(predict_proba(f, build_matrix(design, test)), test.target);
            }
            t.row({to_string(m), num(mc.variables), num(mc.dummies), num(mc.test_auc)});
            rows.push_back(mc);
        }
        out_.add("method_comparison.csv", t);
        return rows;
    }

    // -- prerequisites read back from disk ------------------------------------

    std::vector<BinningScheme> load_schemes() const
    {
        const auto p = out_.path("schemes.json");
        if (!std::filesystem::exists(p))
            throw ConfigError("missing prerequisite artifact '" + p.string() + "': run the 'bin' stage first");
        return schemes_from_json(read_json_file(p.string()));
    }

    std::vector<std::string> selected_from(const std::vector<BinningScheme>& schemes) const
    {
        std::vector<IVReport> iv;
        for (const auto& s : schemes)
            if (s.usable) iv.push_back(information_value(s, cfg_.strength));
        return select_variables(iv, cfg_.iv_threshold);
    }

    static std::vector<BinningScheme> schemes_for(const std::vector<BinningScheme>& all,
                                                  const std::vector<std::string>& vars)
    {
        std::vector<BinningScheme> out;
        for (const auto& v : vars) {
            auto it = std::find_if(all.begin(), all.end(), [&](const BinningScheme& s) { return s.variable == v; });
            if (it == all.end()) throw ConfigError("no binning scheme for variable '" + v + "'");
            out.push_back(*it);
        }
        return out;
    }

    double tau_for(int model)
    {
        const auto fixed = model == 3 ? cfg_.tau.model3 : cfg_.tau.model5;
        if (fixed) return *fixed;
        const auto fam = to_string(family_of(model));
        const auto p = out_.path("sweep_" + fam + ".json");
        if (!std::filesystem::exists(p)) {
            throw ConfigError("missing prerequisite artifact '" + p.string() + "': run 'sweep --model " +
                              std::to_string(model) + "' or set tau.model" + std::to_string(model));
        }
        return read_json_file(p.string()).at("best_tau").get<double>();
    }

    struct ModelData {
        Design design;
        Dataset train;
        Dataset test;
    };

    ModelData model_data(int model)
    {
        if (model < 1 || model > 5) throw ConfigError("model must be 1..5");
        ModelData md;
        const auto train = train_part();
        const auto test = test_part();
        if (model == 1) {
            md.design = interval_design(predictors());
        } else {
            const auto schemes = load_schemes();
            const auto selected = selected_from(schemes);
            if (selected.empty()) throw DataError("no variable passes the IV threshold");
            if (family_of(model) == Family::interval)
                md.design = interval_design(selected);
            else
                md.design = discretized_design(schemes_for(schemes, selected), cfg_.drop_reference);
        }
        if (md.design.family == Family::interval) {
            md.train = interval_rows(train, md.design.variables);
            md.test = interval_rows(test, md.design.variables);
        } else {
            md.train = train;
            md.test = test;
        }
        return md;
    }

    ClassWeights weights_for(int model, const Dataset& train)
    {
        const double ybar = train.event_rate();
        if (model == 3 || model == 5) return class_weights(tau_for(model), ybar);
        return ClassWeights::unit(ybar);
    }

    // -- sweep --------------------------------------------------------------

    SweepResult sweep(Family family)
    {
        StageTimer timer(out_, "sweep_" + to_string(family));
        auto md = model_data(family == Family::interval ? 2 : 4);
        const auto x = build_matrix(md.design, md.train);
        const auto folds = make_folds(md.train, cfg_.split);
        const double ybar = md.train.event_rate();
        auto grid = cfg_.tau.grid.empty() ? default_tau_grid(ybar, cfg_.tau.points, cfg_.tau.upper) : cfg_.tau.grid;
        SweepResult res{family, sweep_tau(x, md.train.target, grid, folds, cfg_.optimizer)};

        CsvTable t({"tau", "w1", "w0", "mean_auc", "std_auc", "failed_folds"});
        for (const auto& p : res.sweep.points) {
            t.row({num(p.tau), num(p.weights.w1), num(p.weights.w0), num(p.cv.mean), num(p.cv.std),
                   num(p.cv.failed_folds.size())});
        }
        const auto& best = res.sweep.best_point();
        out_.add("sweep_" + to_string(family) + ".csv", t);
        out_.add("sweep_" + to_string(family) + ".json",
                 json{{"family", to_string(family)},
                      {"best_tau", best.tau},
                      {"weights", to_json(best.weights)},
                      {"mean_auc", best.cv.mean},
                      {"std_auc", best.cv.std}});
        return res;
    }

    // -- cv / train ---------------------------------------------------------

    CVResult cross_validate_model(int model, const ModelData& md, const ClassWeights& w)
    {
        const auto x = build_matrix(md.design, md.train);
        const auto folds = make_folds(md.train, cfg_.split);
        auto res = cross_validate(
            [&](const Fold& f) {
                const auto m = fit(take_rows(x, f.train), take(md.train.target, f.train), w, cfg_.optimizer,
                                   md.design.columns);
                return predict_proba(m, take_rows(x, f.validate));
            },
            folds, md.train.target);
        write_cv(model, res);
        return res;
    }

    void write_cv(int model, const CVResult& res)
    {
        const auto tag = "model" + std::to_string(model);
        CsvTable t({"fold", "auc", "status"});
        for (std::size_t i = 0; i < res.summary.folds_used.size(); ++i) {
            const auto f = res.summary.folds_used[i];
            t.row({num(f + 1), num(res.summary.aucs[i]), "ok"});
            CsvTable roc_t({"fpr", "tpr", "threshold"});
            const auto& c = res.curves[i];
            for (std::size_t k = 0; k < c.fpr.size(); ++k) roc_t.row({num(c.fpr[k]), num(c.tpr[k]), num(c.threshold[k])});
            out_.add("roc_" + tag + "_fold" + std::to_string(f + 1) + ".csv", roc_t);
        }
        for (std::size_t i = 0; i < res.summary.failed_folds.size(); ++i)
            t.row({num(res.summary.failed_folds[i] + 1), "", "failed: " + res.summary.failures[i]});
        t.row({"mean", num(res.summary.mean), res.summary.incomplete() ? "incomplete" : "ok"});
        t.row({"std", num(res.summary.std), res.summary.incomplete() ? "incomplete" : "ok"});
        out_.add("cv_" + tag + ".csv", t);
    }

    CVResult cv(int model)
    {
        StageTimer timer(out_, "cv_model" + std::to_string(model));
        auto md = model_data(model);
        return cross_validate_model(model, md, weights_for(model, md.train));
    }

    TrainResult train(int model)
    {
        StageTimer timer(out_, "train_model" + std::to_string(model));
        auto md = model_data(model);
        TrainResult res;
        const auto w = weights_for(model, md.train);
        res.train_rows = md.train.rows();
        res.test_rows = md.test.rows();
        res.cv = cross_validate_model(model, md, w);

        const auto xtr = build_matrix(md.design, md.train);
        res.model.model = model;
        res.model.design = md.design;
        res.model.fit = fit(xtr, md.train.target, w, cfg_.optimizer, md.design.columns);

        const auto scores = predict_proba(res.model.fit, build_matrix(md.design, md.test));
        res.cutoff = choose_cutoff(scores, md.test.target);
        res.model.cutoff = res.cutoff.cutoff;
        res.test = confusion(scores, md.test.target, res.cutoff.cutoff);
        res.test_auc = auc(scores, md.test.target);

        if (md.design.family == Family::interval && md.design.variables.size() >= 2)
            res.vif = vif(xtr, md.design.variables);

        const auto tag = "model" + std::to_string(model);
        out_.add("fit_" + tag + ".json", to_json(res.model));

        CsvTable coef({"parameter", "estimate"});
        for (std::size_t i = 0; i < res.model.fit.names.size(); ++i)
            coef.row({res.model.fit.names[i], num(res.model.fit.beta(static_cast<Eigen::Index>(i)))});
        out_.add("coefficients_" + tag + ".csv", coef);

        CsvTable perf({"model", "type1_error", "type2_error", "accuracy", "f1", "cutoff", "tp", "fp", "tn", "fn",
                       "test_auc"});
        perf.row(performance_row(model, res));
        out_.add("performance_" + tag + ".csv", perf);

        if (res.vif) {
            CsvTable v({"variable", "vif", "r2"});
            for (std::size_t i = 0; i < res.vif->names.size(); ++i)
                v.row({res.vif->names[i], num(res.vif->vif[i]), num(res.vif->r2[i])});
            out_.add("vif_" + tag + ".csv", v);
        }
        return res;
    }

    static std::vector<std::string> performance_row(int model, const TrainResult& r)
    {
        return {std::to_string(model), num(r.test.type1), num(r.test.type2), num(r.test.accuracy), num(r.test.f1),
                num(r.test.cutoff), num(r.test.tp), num(r.test.fp), num(r.test.tn), num(r.test.fn), num(r.test_auc)};
    }

    // -- evaluate: the whole comparison ---------------------------------------

    struct EvaluateResult {
        BinResult bins;
        SweepResult interval_sweep;
        SweepResult discretized_sweep;
        std::vector<TrainResult> models;  // models 1..5
    };

    EvaluateResult evaluate()
    {
        EvaluateResult res;
        res.bins = bin();
        flush("evaluate");  // later stages read schemes.json back
        res.interval_sweep = sweep(Family::interval);
        res.discretized_sweep = sweep(Family::discretized);
        flush("evaluate");
        for (int m = 1; m <= 5; ++m) res.models.push_back(train(m));

        CsvTable cvt({"model", "mean_auc", "std_auc", "folds", "failed_folds"});
        CsvTable perf({"model", "type1_error", "type2_error", "accuracy", "f1", "cutoff", "tp", "fp", "tn", "fn",
                       "test_auc"});
        for (const auto& r : res.models) {
            cvt.row({std::to_string(r.model.model), num(r.cv.summary.mean), num(r.cv.summary.std),
                     num(r.cv.summary.aucs.size()), num(r.cv.summary.failed_folds.size())});
            perf.row(performance_row(r.model.model, r));
        }
        out_.add("cv_auc.csv", cvt);
        out_.add("performance.csv", perf);
        flush("evaluate");
        return res;
    }

    // -- score --------------------------------------------------------------

    /// Scores `data_path` with a serialized model; the target column is used
    /// only if present. Returns the scored table.
    CsvTable score(const std::string& fit_path, const std::string& data_path)
    {
        StageTimer timer(out_, "score");
        const auto model = trained_model_from_json(read_json_file(fit_path));
        auto schema = cfg_.schema;
        schema.predictors = model.design.variables;
        if (!header_has(data_path, schema.target)) schema.target.clear();
        const auto d = load_csv(data_path, schema);
        const auto p = score_rows(model, d);
        CsvTable t({"id", "probability", "predicted"});
        for (std::size_t i = 0; i < d.rows(); ++i) t.row({d.ids[i], num(p[i]), p[i] > model.cutoff ? "1" : "0"});
        out_.add("scored.csv", t);
        return t;
    }

    void flush(const std::string& command) { out_.flush(command, cfg_); }

private:
    static std::vector<std::string> header_of(const std::string& path)
    {
        std::ifstream in(path);
        std::string line;
        if (!in || !std::getline(in, line)) throw DataError("cannot read header of '" + path + "'");
        if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto cells = detail::split_csv_line(line);
        for (auto& c : cells) c = std::string(detail::trim(c));
        return cells;
    }

    static bool header_has(const std::string& path, const std::string& column)
    {
        const auto cells = header_of(path);
        return std::find(cells.begin(), cells.end(), column) != cells.end();
    }

    // Columns named by the config must exist before any parsing starts.
    static void check_header(const std::string& path, const CsvSchema& schema)
    {
        const auto cells = header_of(path);
        std::vector<std::string> wanted = schema.predictors;
        wanted.push_back(schema.target);
        if (schema.id) wanted.push_back(*schema.id);
        for (const auto& w : wanted)
            if (std::find(cells.begin(), cells.end(), w) == cells.end())
                throw ConfigError("config references column '" + w + "' which is not in the header of '" + path + "'");
    }

    PipelineConfig cfg_;
    ArtifactWriter out_;
    std::optional<Dataset> data_;
    std::optional<RowSplit> split_;
};

} // namespace imbal
