#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "imbal/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace imbal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("imbal_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Small synthetic credit file plus a config tuned for fast tests.
struct Fixture {
    fs::path dir;
    fs::path csv;
    fs::path config;
    PipelineConfig cfg;
};

Fixture make_fixture(const std::string& name, std::size_t rows = 3000)
{
    Fixture f;
    f.dir = scratch(name);
    f.csv = f.dir / "credit.csv";
    synth::write_csv(synth::credit_like(rows, 41), f.csv.string());
    json j = {{"data", f.csv.string()},
              {"columns", {{"target", "Default"}, {"id", "Id"}}},
              {"split", {{"folds", 4}, {"seed", 7}}},
              {"tau", {{"points", 4}}},
              {"output_dir", (f.dir / "out").string()}};
    f.config = f.dir / "config.json";
    std::ofstream(f.config) << j.dump(2);
    f.cfg = load_config(f.config.string());
    return f;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(IMBAL_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

} // namespace

TEST(Config, DefaultsAndRoundTrip)
{
    PipelineConfig c = config_from_json(json{{"columns", {{"target", "y"}}}});
    EXPECT_EQ(c.binning.max_bins, 20u);
    EXPECT_EQ(c.split.fold_count, 10u);
    EXPECT_EQ(c.split.train_fraction, 0.7);
    EXPECT_EQ(c.iv_threshold, 0.1);
    EXPECT_EQ(c.method, BinMethod::quantile);
    c.tau.model3 = 0.37;
    c.schema.id = "";
    c.tau.grid = {0.1, 0.2};
    const auto j = config_to_json(c);
    const auto back = config_from_json(j);
    EXPECT_EQ(config_to_json(back), j);
}

TEST(Config, RangeChecks)
{
    auto bad = [](json patch) {
        json j = {{"columns", {{"target", "y"}}}};
        j.merge_patch(patch);
        return j;
    };
    EXPECT_THROW(config_from_json(json::object()), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"split", {{"folds", 1}}}})), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"split", {{"train_fraction", 1.5}}}})), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"binning", {{"max_bins", 1}}}})), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"binning", {{"method", "kmeans"}}}})), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"tau", {{"grid", {0.005}}}}})), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"screening", {{"iv_threshold", -1}}}})), ConfigError);
    EXPECT_THROW(config_from_json(bad({{"split", {{"folds", "ten"}}}})), ConfigError);
}

TEST(Artifacts, DigestAndCsvQuoting)
{
    EXPECT_EQ(digest(""), "cbf29ce484222325");
    EXPECT_EQ(digest("a"), "af63dc4c8601ec8c");
    CsvTable t({"a", "b"});
    t.row({"x,y", "say \"hi\""});
    EXPECT_EQ(t.str(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
    EXPECT_THROW(t.row({"only one"}), std::logic_error);
}

TEST(Pipeline, ExploreEmitsTablesPerPredictor)
{
    auto f = make_fixture("explore");
    Pipeline p(f.cfg);
    auto r = p.explore();
    p.flush("explore");
    EXPECT_EQ(r.tables.size(), 8u);
    const auto out = fs::path(f.cfg.output_dir);
    for (const auto& n : p.predictors()) {
        EXPECT_TRUE(fs::exists(out / ("elogit_" + n + ".csv"))) << n;
        EXPECT_TRUE(fs::exists(out / ("elogit_rank_" + n + ".csv"))) << n;
    }
    EXPECT_EQ(r.missingness.missing_bearing(), std::vector<std::string>{"Income"});
    EXPECT_EQ(lines_of(slurp(out / "linearity.csv")).size(), 9u);
    const auto manifest = read_json_file((out / "manifest.json").string());
    EXPECT_TRUE(manifest["artifacts"].contains("missingness.csv"));
    EXPECT_EQ(manifest["artifacts"]["linearity.csv"]["digest"], digest(slurp(out / "linearity.csv")));
}

TEST(Pipeline, SinglePredictorExploreWritesOneTable)
{
    auto f = make_fixture("single");
    f.cfg.schema.predictors = {"Age"};
    Pipeline p(f.cfg);
    auto r = p.explore();
    EXPECT_EQ(r.tables.size(), 1u);
    EXPECT_EQ(r.tables[0].variable, "Age");
}

TEST(Pipeline, BinSelectsAndFlagsConstantColumns)
{
    auto f = make_fixture("bin");
    Pipeline p(f.cfg);
    auto d = p.data();
    d.names.push_back("Constant");
    d.columns.emplace_back(d.rows(), 1.0);
    p.set_data(d);
    auto r = p.bin();
    EXPECT_EQ(r.unusable, std::vector<std::string>{"Constant"});
    EXPECT_TRUE(std::is_sorted(r.iv.begin(), r.iv.end(), [](auto& a, auto& b) { return a.iv > b.iv; }));
    ASSERT_FALSE(r.selected.empty());
    EXPECT_EQ(r.selected.front(), r.iv.front().variable);
    for (const auto& s : r.schemes)
        if (s.variable == "Income") {
            EXPECT_TRUE(s.has_missing_bin);
        }
    EXPECT_EQ(std::find(r.selected.begin(), r.selected.end(), "Constant"), r.selected.end());
}

TEST(Pipeline, TrainNeedsSchemesAndSweep)
{
    auto f = make_fixture("prereq");
    Pipeline p(f.cfg);
    EXPECT_THROW(p.train(4), ConfigError);
    p.bin();
    p.flush("bin");
    EXPECT_THROW(p.train(5), ConfigError);  // no sweep result and no fixed tau
    EXPECT_NO_THROW(p.train(4));
}

TEST(Pipeline, ModelFiveEqualsModelFourAtSampleRate)
{
    auto f = make_fixture("m5");
    {
        Pipeline p(f.cfg);
        p.bin();
        p.flush("bin");
    }
    Pipeline probe(f.cfg);
    auto cfg = f.cfg;
    cfg.tau.model5 = probe.train_part().event_rate();
    Pipeline p(cfg);
    auto m4 = p.train(4);
    auto m5 = p.train(5);
    EXPECT_EQ(m5.model.fit.weights.w1, 1.0);
    EXPECT_EQ(m5.model.fit.weights.w0, 1.0);
    ASSERT_EQ(m4.model.fit.beta.size(), m5.model.fit.beta.size());
    for (Eigen::Index j = 0; j < m4.model.fit.beta.size(); ++j)
        EXPECT_NEAR(m4.model.fit.beta(j), m5.model.fit.beta(j), 1e-8);
}

TEST(Pipeline, ScoringRoundTripIsBitExact)
{
    auto f = make_fixture("score");
    Pipeline p(f.cfg);
    p.bin();
    p.flush("bin");
    auto trained = p.train(4);
    p.flush("train");

    const auto path = fs::path(f.cfg.output_dir) / "fit_model4.json";
    const auto loaded = trained_model_from_json(read_json_file(path.string()));
    const auto train = p.train_part();
    const auto in_memory = predict_proba(trained.model.fit, build_matrix(trained.model.design, train));
    EXPECT_EQ(score_rows(loaded, train), in_memory);

    // The whole file, Income holes included, scores through the missing bin.
    auto table = p.score(path.string(), f.csv.string());
    const auto rows = lines_of(table.str());
    ASSERT_EQ(rows.size(), p.data().rows() + 1);
    std::map<std::string, std::string> prob;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto cells = detail::split_csv_line(rows[i]);
        prob[cells[0]] = cells[1];
    }
    for (std::size_t i = 0; i < train.rows(); ++i) EXPECT_EQ(prob[train.ids[i]], format_number(in_memory[i]));
}

TEST(Pipeline, IntervalModelRejectsMissingAtScoring)
{
    auto f = make_fixture("score_interval");
    Pipeline p(f.cfg);
    p.train(1);
    p.flush("train");
    EXPECT_THROW(p.score((fs::path(f.cfg.output_dir) / "fit_model1.json").string(), f.csv.string()), DataError);
}

TEST(Pipeline, StageIsolationAndDeterminism)
{
    auto f = make_fixture("determinism");
    auto run = [&](const std::string& out, bool fresh_each_stage) {
        auto cfg = f.cfg;
        cfg.output_dir = (f.dir / out).string();
        if (fresh_each_stage) {
            {
                Pipeline a(cfg);
                a.bin();
                a.flush("bin");
            }
            {
                Pipeline b(cfg);
                b.sweep(Family::discretized);
                b.flush("sweep");
            }
            Pipeline c(cfg);
            c.train(5);
            c.flush("train");
        } else {
            Pipeline a(cfg);
            a.bin();
            a.flush("bin");
            a.sweep(Family::discretized);
            a.flush("sweep");
            a.train(5);
            a.flush("train");
        }
        return fs::path(cfg.output_dir);
    };
    const auto a = run("a", false);
    const auto b = run("b", true);
    for (const auto& name : {"schemes.json", "iv.csv", "sweep_discretized.csv", "fit_model5.json", "cv_model5.csv",
                             "performance_model5.csv"}) {
        ASSERT_TRUE(fs::exists(a / name)) << name;
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    }
}

TEST(Pipeline, SweepGridOfOnePoint)
{
    auto f = make_fixture("sweep1");
    f.cfg.tau.grid = {0.3};
    Pipeline p(f.cfg);
    p.bin();
    p.flush("bin");
    auto r = p.sweep(Family::interval);
    ASSERT_EQ(r.sweep.points.size(), 1u);
    EXPECT_EQ(r.sweep.best_point().tau, 0.3);
}

TEST(Pipeline, EvaluateWritesComparisonTables)
{
    auto f = make_fixture("evaluate", 2500);
    Pipeline p(f.cfg);
    auto r = p.evaluate();
    ASSERT_EQ(r.models.size(), 5u);
    const auto out = fs::path(f.cfg.output_dir);
    EXPECT_EQ(lines_of(slurp(out / "cv_auc.csv")).size(), 6u);
    EXPECT_EQ(lines_of(slurp(out / "performance.csv")).size(), 6u);
    for (const auto& m : r.models) {
        EXPECT_GT(m.cv.summary.mean, 0.5);
        EXPECT_EQ(m.test.total(), m.test_rows);
        for (std::size_t fold = 1; fold <= 4; ++fold)
            EXPECT_TRUE(fs::exists(out / ("roc_model" + std::to_string(m.model.model) + "_fold" +
                                          std::to_string(fold) + ".csv")));
    }
    EXPECT_TRUE(fs::exists(out / "vif_model2.csv"));
}

TEST(Cli, ExitCodes)
{
    auto f = make_fixture("cli");
    const auto cfg = f.config.string();
    const auto out = (f.dir / "cli_out").string();
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("explore"), 1);                              // missing --config
    EXPECT_EQ(run_cli("explore --config " + cfg + " --out " + out), 0);
    EXPECT_EQ(run_cli("train --config " + cfg + " --model 4 --out " + out), 1);  // no schemes yet
    EXPECT_EQ(run_cli("bin --config " + cfg + " --out " + out + " --method optimal"), 0);
    EXPECT_EQ(read_json_file(out + "/schemes.json")["schemes"][0]["method"], "optimal");
    EXPECT_EQ(run_cli("train --config " + cfg + " --model 4 --out " + out), 0);
    EXPECT_EQ(run_cli("score --config " + cfg + " --out " + out + " --fit " + out + "/fit_model4.json --input " +
                      f.csv.string()),
              0);
    EXPECT_TRUE(fs::exists(fs::path(out) / "scored.csv"));

    // a column named in the config but absent from the file
    json j = read_json_file(cfg);
    j["columns"]["predictors"] = {"Age", "Nope"};
    std::ofstream(f.dir / "bad_column.json") << j.dump();
    EXPECT_EQ(run_cli("explore --config " + (f.dir / "bad_column.json").string()), 1);

    // an unparseable data cell
    std::ofstream(f.dir / "bad.csv") << "Id,Default,Age\n1,0,30\n2,1,abc\n";
    j = read_json_file(cfg);
    j["data"] = (f.dir / "bad.csv").string();
    std::ofstream(f.dir / "bad_data.json") << j.dump();
    EXPECT_EQ(run_cli("explore --config " + (f.dir / "bad_data.json").string()), 2);
}

TEST(Cli, RerunGivesIdenticalDigests)
{
    auto f = make_fixture("cli_digest");
    const auto cfg = f.config.string();
    for (const char* out : {"r1", "r2"}) {
        const auto o = (f.dir / out).string();
        ASSERT_EQ(run_cli("explore --config " + cfg + " --out " + o), 0);
        ASSERT_EQ(run_cli("bin --config " + cfg + " --out " + o), 0);
    }
    const auto m1 = read_json_file((f.dir / "r1" / "manifest.json").string());
    const auto m2 = read_json_file((f.dir / "r2" / "manifest.json").string());
    EXPECT_EQ(m1["artifacts"], m2["artifacts"]);
    EXPECT_GT(m1["artifacts"].size(), 20u);
}

TEST(Config, RelativeDataPathFollowsConfigFile)
{
    const auto dir = scratch("relative");
    fs::create_directories(dir / "conf");
    std::ofstream(dir / "conf" / "c.json") << R"({"data": "../d.csv", "columns": {"target": "y"}})";
    const auto c = load_config((dir / "conf" / "c.json").string());
    EXPECT_EQ(fs::path(c.data), (dir / "d.csv").lexically_normal());
    EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
}
