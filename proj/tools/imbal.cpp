// imbal: stage-by-stage driver for the imbalanced credit scoring pipeline.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "imbal/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> data;
};

imbal::PipelineConfig resolve(const Options& o)
{
    auto cfg = imbal::load_config(o.config);
    if (o.out) cfg.output_dir = *o.out;
    if (o.seed) cfg.split.seed = *o.seed;
    if (o.data) cfg.data = *o.data;
    return cfg;
}

void print_cv(int model, const imbal::CVResult& r)
{
    std::cout << "model " << model << ": mean AUC " << imbal::format_number(r.summary.mean) << ", std "
              << imbal::format_number(r.summary.std);
    if (r.summary.incomplete()) std::cout << " (" << r.summary.failed_folds.size() << " folds failed)";
    std::cout << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Logistic credit scoring under class imbalance"};
    app.require_subcommand(1);
    Options opt;
    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", opt.config, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", opt.out, "output directory (overrides config)");
        sub->add_option("--seed", opt.seed, "random seed (overrides config)");
        sub->add_option("--data", opt.data, "data CSV (overrides config)");
    };

    auto* explore = app.add_subcommand("explore", "missingness, empirical logits and linearity scores");
    common(explore);

    auto* bin = app.add_subcommand("bin", "binning schemes and information values");
    common(bin);
    std::string method;
    bool compare = false;
    bin->add_option("-m,--method", method, "distance, quantile, gini or optimal");
    bin->add_flag("--compare", compare, "compare all four methods by test AUC");

    int model = 0;
    auto* sweep = app.add_subcommand("sweep", "cross-validated tau sweep for model 3 or 5");
    common(sweep);
    sweep->add_option("--model", model, "3 or 5")->required()->check(CLI::IsMember({3, 5}));

    auto* cv = app.add_subcommand("cv", "cross-validated AUC for one model");
    common(cv);
    cv->add_option("--model", model, "1..5")->required()->check(CLI::Range(1, 5));

    auto* train = app.add_subcommand("train", "fit one model and evaluate it on the test part");
    common(train);
    train->add_option("--model", model, "1..5")->required()->check(CLI::Range(1, 5));

    auto* evaluate = app.add_subcommand("evaluate", "run every stage and write the comparison tables");
    common(evaluate);

    auto* score = app.add_subcommand("score", "score a CSV with a serialized model");
    common(score);
    std::string fit_path, input;
    score->add_option("--fit", fit_path, "fit_model<N>.json")->required()->check(CLI::ExistingFile);
    score->add_option("--input", input, "CSV to score")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        imbal::Pipeline p(resolve(opt));
        if (explore->parsed()) {
            const auto r = p.explore();
            for (std::size_t i = 0; i < r.tables.size(); ++i) {
                const auto& ls = r.linearity[i];
                std::cout << r.tables[i].variable << ": "
                          << (ls ? (ls->discretize ? "discretize" : "interval") : "too few ranks") << "\n";
            }
            p.flush("explore");
        } else if (bin->parsed()) {
            if (compare) {
                for (const auto& c : p.compare_methods())
                    std::cout << imbal::to_string(c.method) << ": test AUC " << imbal::format_number(c.test_auc)
                              << " (" << c.variables << " variables)\n";
            } else {
                std::optional<imbal::BinMethod> m;
                if (!method.empty()) m = imbal::parse_bin_method(method);
                const auto r = p.bin(m);
                for (const auto& iv : r.iv)
                    std::cout << iv.variable << ": IV " << imbal::format_number(iv.iv) << " ("
                              << imbal::to_string(iv.strength) << ")\n";
            }
            p.flush("bin");
        } else if (sweep->parsed()) {
            const auto r = p.sweep(imbal::family_of(model));
            const auto& b = r.sweep.best_point();
            std::cout << "best tau " << imbal::format_number(b.tau) << ": mean AUC " << imbal::format_number(b.cv.mean)
                      << "\n";
            p.flush("sweep");
        } else if (cv->parsed()) {
            print_cv(model, p.cv(model));
            p.flush("cv");
        } else if (train->parsed()) {
            const auto r = p.train(model);
            print_cv(model, r.cv);
            std::cout << "test: type I " << imbal::format_number(r.test.type1) << ", type II "
                      << imbal::format_number(r.test.type2) << ", accuracy " << imbal::format_number(r.test.accuracy)
                      << ", F1 " << imbal::format_number(r.test.f1) << "\n";
            p.flush("train");
        } else if (evaluate->parsed()) {
            const auto r = p.evaluate();
            for (const auto& m : r.models) print_cv(m.model.model, m.cv);
        } else if (score->parsed()) {
            p.score(fit_path, input);
            p.flush("score");
        }
    } catch (const imbal::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const imbal::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const imbal::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
