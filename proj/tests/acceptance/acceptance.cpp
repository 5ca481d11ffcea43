// Acceptance checks. `--properties` needs no data; `--credit [csv]` needs the
// Give-Me-Some-Credit training file (path argument or CREDIT_CSV) and exits 77
// when it is absent.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>

#include "imbal/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace imbal;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& detail)
{
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(double v) { return format_number(v); }

std::vector<std::uint8_t> random_labels(std::mt19937_64& rng, std::size_t n, double rate)
{
    std::bernoulli_distribution b(rate);
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = b(rng);
    y[0] = 1;
    y[1] = 0;
    return y;
}

// Plain Newton-Raphson on the unweighted likelihood, written out by hand.
Eigen::VectorXd newton_oracle(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y)
{
    const Eigen::Index n = x.rows(), p = x.cols() + 1;
    Eigen::MatrixXd a(n, p);
    a.col(0).setOnes();
    a.rightCols(p - 1) = x;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd pi = (-(a * b).array()).exp();
        pi = (pi.array() + 1.0).inverse().matrix();
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) r(i) = y[static_cast<std::size_t>(i)] - pi(i);
        const Eigen::VectorXd w = (pi.array() * (1.0 - pi.array())).matrix();
        const Eigen::MatrixXd h = a.transpose() * w.asDiagonal() * a;
        const Eigen::VectorXd step = h.ldlt().solve(a.transpose() * r);
        b += step;
        if (step.norm() < 1e-13) break;
    }
    return b;
}

double concordance(std::span<const double> s, std::span<const std::uint8_t> y)
{
    double num = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            pairs += 1.0;
            num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return num / pairs;
}

void criterion8()
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t n = 20 + rng() % 181, p = 1 + rng() % 10;
        Eigen::MatrixXd x(n, p);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
        const auto y = random_labels(rng, n, 0.05 + 0.4 * std::uniform_real_distribution<double>()(rng));
        const double ybar = std::count(y.begin(), y.end(), 1) / static_cast<double>(n);
        const auto w = class_weights(0.02 + 0.9 * std::uniform_real_distribution<double>()(rng), ybar);
        Eigen::VectorXd beta(p + 1);
        for (Eigen::Index j = 0; j <= static_cast<Eigen::Index>(p); ++j) beta(j) = 0.5 * z(rng);
        const auto g = weighted_gradient(beta, x, y, w);
        Eigen::VectorXd fd(p + 1);
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            const double h = 1e-5 * std::max(1.0, std::abs(beta(j)));
            Eigen::VectorXd up = beta, dn = beta;
            up(j) += h;
            dn(j) -= h;
            fd(j) = (weighted_log_likelihood(up, x, y, w) - weighted_log_likelihood(dn, x, y, w)) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / std::max(1.0, fd.norm()));
    }
    report(8, worst < 1e-4, "worst relative gradient error " + fmt(worst) + " over 50 instances (< 1e-4)");
}

void criterion9()
{
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t n = 300, p = 1 + rng() % 5;
        Eigen::MatrixXd x(n, p);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
        std::vector<std::uint8_t> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = z(rng) < -1.0 + 0.8 * x(static_cast<Eigen::Index>(i), 0);
        const double ybar = std::count(y.begin(), y.end(), 1) / static_cast<double>(n);
        const auto ours = fit(x, y, ClassWeights::unit(ybar)).beta;
        const auto oracle = newton_oracle(x, y);
        worst = std::max(worst, (ours - oracle).cwiseAbs().maxCoeff());
    }
    bool closed = true;
    double closed_err = 0.0;
    for (auto [n1, n0] : {std::pair{40, 160}, {7, 993}, {300, 200}}) {
        std::vector<std::uint8_t> y(static_cast<std::size_t>(n1 + n0), 0);
        std::fill_n(y.begin(), n1, 1);
        const Eigen::MatrixXd x(y.size(), 0);
        const double ybar = n1 / static_cast<double>(n1 + n0);
        const auto plain = fit(x, y, ClassWeights::unit(ybar));
        const auto w = class_weights(0.3, ybar);
        const auto weighted = fit(x, y, w);
        closed_err = std::max({closed_err, std::abs(plain.beta(0) - std::log(double(n1) / n0)),
                               std::abs(weighted.beta(0) - std::log(w.w1 * n1 / (w.w0 * n0)))});
        closed = closed && plain.converged && weighted.converged;
    }
    report(9, worst < 1e-8 && closed && closed_err < 1e-8,
           "unit weights vs unweighted oracle max diff " + fmt(worst) + ", intercept-only closed forms max diff " +
               fmt(closed_err) + " (< 1e-8)");
}

void criterion10()
{
    std::mt19937_64 rng(10);
    std::normal_distribution<double> z;
    double worst = 0.0, worst_transform = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 2 + rng() % 499;
        const auto y = random_labels(rng, n, 0.2);
        std::vector<double> s(n);
        const bool coarse = inst % 3 == 0;  // plenty of ties
        for (auto& v : s) v = coarse ? std::round(z(rng) * 2.0) : z(rng);
        const double a = auc(s, y);
        worst = std::max(worst, std::abs(a - concordance(s, y)));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) + 5.0;
        worst_transform = std::max(worst_transform, std::abs(auc(t, y) - a));
    }
    report(10, worst < 1e-12 && worst_transform < 1e-12,
           "AUC vs concordance oracle max diff " + fmt(worst) + ", under monotone transform " +
               fmt(worst_transform) + " (< 1e-12)");
}

void criterion11()
{
    std::mt19937_64 rng(11);
    bool nonneg = true, monotone = true;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t k = 2 + rng() % 19;
        std::vector<BinStats> bins;
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t n = 2 + rng() % 400;
            bins.push_back({n, 1 + rng() % (n - 1), 0.0});
        }
        const double iv = information_value(bins);
        nonneg = nonneg && iv >= 0.0;
        const std::size_t j = rng() % (k - 1);
        auto merged = bins;
        merged[j].count += merged[j + 1].count;
        merged[j].events += merged[j + 1].events;
        merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        monotone = monotone && information_value(merged) <= iv + 1e-12;
    }
    const std::vector<BinStats> flat{{100, 10, 0}, {300, 30, 0}, {50, 5, 0}, {1000, 100, 0}};
    const double zero = information_value(flat);

    const auto d = synth::credit_like(20000, 11);
    bool exact = true;
    for (std::size_t v = 0; v < d.names.size(); ++v) {
        const auto t = empirical_logit_table(d.columns[v], d.target, 100, d.names[v]);
        for (const auto& r : t.rows) {
            const double again =
                std::log((static_cast<double>(r.events) + 0.5) / (static_cast<double>(r.count - r.events) + 0.5));
            exact = exact && again == r.elogit;
        }
    }
    report(11, nonneg && monotone && std::abs(zero) < 1e-15 && exact,
           std::string("IV >= 0 ") + (nonneg ? "holds" : "violated") + ", merge monotone " +
               (monotone ? "holds" : "violated") + ", equal-rate IV " + fmt(zero) + ", elogit bit-exact " +
               (exact ? "yes" : "no"));
}

void criterion12()
{
    std::mt19937_64 rng(12);
    const auto d = synth::credit_like(8000, 12);
    std::vector<BinningScheme> schemes;
    for (std::size_t v = 0; v < d.names.size(); ++v)
        schemes.push_back(
            build_scheme(d.columns[v], d.target, static_cast<BinMethod>(v % 4), BinningOptions{}, d.names[v]));

    const auto full = one_hot(schemes, d, false);
    bool sums = true;
    for (std::size_t v = 0; v < schemes.size(); ++v) {
        for (Eigen::Index r = 0; r < full.values.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < full.columns.size(); ++c)
                if (full.source[c] == v) s += full.values(r, static_cast<Eigen::Index>(c));
            sums = sums && s == 1.0;
        }
    }

    bool scan = true;
    std::uniform_real_distribution<double> u(-5.0, 1e5);
    for (int i = 0; i < 10000; ++i) {
        const auto& s = schemes[static_cast<std::size_t>(i) % schemes.size()];
        double x = u(rng);
        if (i % 5 == 0 && !s.cuts.empty()) x = s.cuts[rng() % s.cuts.size()];
        if (i % 97 == 0) x = kMissing;
        std::size_t expect = 0;
        if (is_missing(x)) {
            expect = s.has_missing_bin ? s.missing_index() : SIZE_MAX;
        } else {
            while (expect < s.cuts.size() && x > s.cuts[expect]) ++expect;
        }
        if (expect == SIZE_MAX) {
            bool threw = false;
            try {
                assign_bin(s, x);
            } catch (const DataError&) {
                threw = true;
            }
            scan = scan && threw;
        } else {
            scan = scan && assign_bin(s, x) == expect;
        }
    }

    const auto design = discretized_design(schemes, true);
    const auto x = build_matrix(design, d);
    TrainedModel m{4, design, fit(x, d.target, ClassWeights::unit(d.event_rate())), 0.5};
    const auto before = score_rows(m, d);
    const auto reloaded = trained_model_from_json(json::parse(to_json(m).dump()));
    auto design2 = reloaded.design;
    design2.schemes = schemes_from_json(json::parse(schemes_to_json(design.schemes).dump()));
    const auto after = score_rows(reloaded, d);
    const auto after2 = score_rows(TrainedModel{4, design2, reloaded.fit, 0.5}, d);
    report(12, sums && scan && before == after && before == after2,
           std::string("one-hot row sums ") + (sums ? "all 1" : "wrong") + ", assign_bin vs scan on 10000 values " +
               (scan ? "agree" : "disagree") + ", round-trip scores " +
               (before == after && before == after2 ? "bit-identical" : "differ"));
}

void criterion13()
{
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    bool ok = true;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 2 + rng() % 299;
        const auto y = random_labels(rng, n, 0.15);
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = inst % 2 ? std::round(4.0 * z(rng)) / 8.0 : z(rng) + y[i];
        const auto c = choose_cutoff(s, y);
        // every distinct score as threshold plus one below all
        std::vector<double> cand(s);
        cand.push_back(*std::min_element(s.begin(), s.end()) - 1.0);
        double best = 2.0;
        for (double t : cand) {
            const auto r = confusion(s, y, t);
            best = std::min(best, std::abs(r.sensitivity() - r.specificity()));
        }
        const auto at = confusion(s, y, c.cutoff);
        ok = ok && std::abs(std::abs(at.sensitivity() - at.specificity()) - best) < 1e-12 &&
             std::abs(c.gap - best) < 1e-12;
    }
    report(13, ok, "choose_cutoff gap equals exhaustive minimum on 200 instances");
}

int properties()
{
    const auto start = std::chrono::steady_clock::now();
    criterion8();
    criterion9();
    criterion10();
    criterion11();
    criterion12();
    criterion13();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "property suite took " << fmt(secs) << " s" << std::endl;
    if (secs >= 60.0) {
        std::cout << "FAIL property suite exceeded 60 s" << std::endl;
        ++failures;
    }
    return failures ? 1 : 0;
}

// ---------------------------------------------------------------------------

const std::string kUtil = "RevolvingUtilizationOfUnsecuredLines";
const std::string kLate30 = "NumberOfTime30-59DaysPastDueNotWorse";
const std::string kLate60 = "NumberOfTime60-89DaysPastDueNotWorse";
const std::string kLate90 = "NumberOfTimes90DaysLate";
const std::string kAge = "age";

bool near(double v, double target, double tol) { return std::abs(v - target) <= tol; }

double coef(const ModelFit& f, const std::string& name)
{
    for (std::size_t i = 0; i < f.names.size(); ++i)
        if (f.names[i] == name) return f.beta(static_cast<Eigen::Index>(i));
    throw DataError("no coefficient named " + name);
}

int credit(const std::string& csv)
{
    PipelineConfig cfg;
    cfg.data = csv;
    cfg.schema.target = "SeriousDlqin2yrs";
    cfg.schema.id = "";
    cfg.output_dir = (fs::temp_directory_path() / ("imbal_acceptance_" + std::to_string(::getpid()))).string();
    Pipeline p(cfg);

    const auto& d = p.data();
    const auto events = d.events();
    report(1, events == 10026 && d.rows() - events == 139974 && near(100.0 * d.event_rate(), 6.68, 0.005),
           std::to_string(events) + " events / " + std::to_string(d.rows() - events) + " non-events, rate " +
               fmt(100.0 * d.event_rate()) + "%");

    const auto dropped = apply_missing_policy(d, MissingPolicy::drop_rows, d.names);
    report(2,
           dropped.removed == 29731 && near(100.0 * dropped.removed_fraction, 19.82, 0.005) &&
               near(100.0 * dropped.event_rate, 6.95, 0.05),
           "removed " + std::to_string(dropped.removed) + " rows (" + fmt(100.0 * dropped.removed_fraction) +
               "%), post-drop rate " + fmt(100.0 * dropped.event_rate) + "%");

    const auto r = p.evaluate();

    const auto& iv = r.bins.iv;
    auto sel = r.bins.selected;
    std::sort(sel.begin(), sel.end());
    std::vector<std::string> expected{kUtil, kLate30, kLate90, kLate60, kAge};
    std::vector<std::string> expected_sorted = expected;
    std::sort(expected_sorted.begin(), expected_sorted.end());
    double util_iv = -1.0;
    for (const auto& rep : iv)
        if (rep.variable == kUtil) util_iv = rep.iv;
    bool order = iv.size() >= 4;
    for (std::size_t i = 0; order && i < 4; ++i) order = iv[i].variable == expected[i];
    std::string ranking;
    for (std::size_t i = 0; i < std::min<std::size_t>(iv.size(), 5); ++i)
        ranking += (i ? ", " : "") + iv[i].variable + "=" + fmt(iv[i].iv);
    report(3, sel == expected_sorted && near(util_iv, 1.1635, 0.15) && order,
           std::to_string(r.bins.selected.size()) + " selected; top IVs " + ranking);

    const double targets[] = {0.69, 0.68, 0.79, 0.83};
    bool cv_ok = true;
    std::string cv_text;
    for (int m = 0; m < 4; ++m) {
        const auto& s = r.models[static_cast<std::size_t>(m)].cv.summary;
        cv_ok = cv_ok && near(s.mean, targets[m], 0.02) && !s.incomplete();
        if (m < 3) cv_ok = cv_ok && r.models[3].cv.summary.std < s.std;
        cv_text += "M" + std::to_string(m + 1) + " " + fmt(s.mean) + "+-" + fmt(s.std) + " ";
    }
    cv_ok = cv_ok && r.models[3].cv.summary.std <= 0.012;
    report(4, cv_ok, cv_text);

    const auto& isw = r.interval_sweep.sweep;
    const auto& ib = isw.best_point();
    double lo = 1.0, hi = 0.0;
    for (const auto& pt : r.discretized_sweep.sweep.points) lo = std::min(lo, pt.cv.mean), hi = std::max(hi, pt.cv.mean);
    report(5,
           ib.tau == isw.points.back().tau && near(ib.tau, 0.5, 1e-12) && near(ib.weights.w1, 7.19, 0.05) &&
               near(ib.weights.w0, 0.54, 0.01) && hi - lo < 0.01,
           "interval best tau " + fmt(ib.tau) + " W1 " + fmt(ib.weights.w1) + " W0 " + fmt(ib.weights.w0) +
               "; discretized AUC range " + fmt(hi - lo));

    const double b2 = coef(r.models[1].model.fit, kLate60);
    const double b3 = coef(r.models[2].model.fit, kLate60);
    bool vif_ok = r.models[1].vif.has_value();
    std::string vif_text;
    if (vif_ok) {
        const auto& v = *r.models[1].vif;
        for (std::size_t i = 0; i < v.names.size(); ++i) {
            vif_text += v.names[i] + "=" + fmt(v.vif[i]) + " ";
            if (v.names[i] == kLate30 || v.names[i] == kLate90) vif_ok = vif_ok && near(v.vif[i], 20.5, 2.0);
        }
    }
    report(6, b2 < 0 && b3 > 0 && vif_ok,
           "Model 2 coef " + fmt(b2) + ", Model 3 coef " + fmt(b3) + "; VIF " + vif_text);

    const auto& t2 = r.models[1].test;
    const auto& t3 = r.models[2].test;
    const auto& t4 = r.models[3].test;
    report(7,
           near(100 * t4.type1, 24.88, 2) && near(100 * t4.type2, 24.83, 2) && near(100 * t4.accuracy, 75.12, 2) &&
               near(t4.f1, 0.2877, 0.02) && t4.type1 < t3.type1 && t3.type1 < t2.type1 && t4.type2 < t3.type2 &&
               t3.type2 < t2.type2,
           "Model 4 type I " + fmt(100 * t4.type1) + "% type II " + fmt(100 * t4.type2) + "% accuracy " +
               fmt(100 * t4.accuracy) + "% F1 " + fmt(t4.f1) + "; type I M2/M3 " + fmt(100 * t2.type1) + "/" +
               fmt(100 * t3.type1) + ", type II M2/M3 " + fmt(100 * t2.type2) + "/" + fmt(100 * t3.type2));

    std::cout << "artifacts in " << cfg.output_dir << std::endl;
    return failures ? 1 : 0;
}

} // namespace

int main(int argc, char** argv)
{
    const std::string mode = argc > 1 ? argv[1] : "--properties";
    try {
        if (mode == "--properties") return properties();
        if (mode == "--credit") {
            std::string csv = argc > 2 ? argv[2] : "";
            if (csv.empty()) {
                const char* env = std::getenv("CREDIT_CSV");
                csv = env ? env : "";
            }
            if (csv.empty() || !fs::exists(csv)) {
                for (int c = 1; c <= 7; ++c)
                    std::cout << "SKIP criterion " << c << ": credit CSV not available (set CREDIT_CSV)" << std::endl;
                return 77;
            }
            return credit(csv);
        }
        std::cerr << "usage: acceptance [--properties | --credit [path]]\n";
        return 2;
    } catch (const std::exception& e) {
        std::cout << "FAIL: " << e.what() << std::endl;
        return 1;
    }
}
