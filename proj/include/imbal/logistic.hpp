#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imbal/dataset.hpp"
#include "imbal/error.hpp"
#include "imbal/evaluation.hpp"
#include "imbal/stats.hpp"

namespace imbal {

/// Class-dependent cost weights: w1 = tau / ybar multiplies the event terms of
/// the log-likelihood and w0 = (1 - tau) / (1 - ybar) the non-event terms.
struct ClassWeights {
    double w1 = 1.0;
    double w0 = 1.0;
    double tau = 0.5;
    double ybar = 0.5;

    static ClassWeights unit(double ybar) { return {1.0, 1.0, ybar, ybar}; }
};

inline ClassWeights class_weights(double tau, double ybar)
{
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1), got " + format_number(tau));
    if (!(ybar > 0.0 && ybar < 1.0)) throw DataError("sample event proportion must lie in (0,1)");
    return {tau / ybar, (1.0 - tau) / (1.0 - ybar), tau, ybar};
}

inline double sigmoid(double eta)
{
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

namespace detail {

inline Eigen::VectorXd linear_predictor(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x)
{
    Eigen::VectorXd eta = x * beta.tail(beta.size() - 1);
    eta.array() += beta(0);
    return eta;
}

inline void check_dims(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x)
{
    if (beta.size() != x.cols() + 1)
        throw DataError("coefficient vector has " + std::to_string(beta.size()) + " entries, design has " +
                        std::to_string(x.cols()) + " columns plus intercept");
}

// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

// Weighted log-likelihood from the linear predictor, evaluated in log space.
inline double stable_log_likelihood(const Eigen::VectorXd& eta, std::span<const std::uint8_t> y,
                                    const ClassWeights& w)
{
    double ll1 = 0.0, ll0 = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (y[static_cast<std::size_t>(i)])
            ll1 -= log1pexp(-eta(i));
        else
            ll0 -= log1pexp(eta(i));
    }
    return w.w1 * ll1 + w.w0 * ll0;
}

} // namespace detail

/// W1 * sum_{y=1} ln(pi) + W0 * sum_{y=0} ln(1 - pi). `beta` holds the
/// intercept first; `x` has no intercept column. pi is clamped to
/// [1e-12, 1 - 1e-12] here only.
inline double weighted_log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                      std::span<const std::uint8_t> y, const ClassWeights& w)
{
    detail::check_dims(beta, x);
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw DataError("design and target differ in length");
    const Eigen::VectorXd eta = detail::linear_predictor(beta, x);
    constexpr double eps = 1e-12;
    double ll1 = 0.0, ll0 = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double pi = std::clamp(sigmoid(eta(i)), eps, 1.0 - eps);
        if (y[static_cast<std::size_t>(i)])
            ll1 += std::log(pi);
        else
            ll0 += std::log(1.0 - pi);
    }
    return w.w1 * ll1 + w.w0 * ll0;
}

/// Score vector X~^T (w o (y - pi)) with X~ = [1, X].
inline Eigen::VectorXd weighted_gradient(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                                         std::span<const std::uint8_t> y, const ClassWeights& w)
{
    detail::check_dims(beta, x);
    const Eigen::VectorXd eta = detail::linear_predictor(beta, x);
    Eigen::VectorXd r(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const bool ev = y[static_cast<std::size_t>(i)] != 0;
        r(i) = (ev ? w.w1 : w.w0) * ((ev ? 1.0 : 0.0) - sigmoid(eta(i)));
    }
    Eigen::VectorXd g(beta.size());
    g(0) = r.sum();
    g.tail(x.cols()) = x.transpose() * r;
    return g;
}

struct FitOptions {
    int max_iterations = 100;
    double ll_tolerance = 1e-8;        // on |dLL| / (1 + |LL|)
    double gradient_tolerance = 1e-6;  // on the Euclidean norm of the score
    int max_halvings = 40;
    bool standardize = false;
    double separation_threshold = 30.0;
};

enum class StopReason { gradient, likelihood, max_iterations, line_search };

inline std::string to_string(StopReason r)
{
    switch (r) {
    case StopReason::gradient: return "gradient";
    case StopReason::likelihood: return "likelihood";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::line_search: return "line_search";
    }
    return "?";
}

struct ModelFit {
    std::vector<std::string> names;  // "Intercept" first
    Eigen::VectorXd beta;
    ClassWeights weights;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    StopReason stop = StopReason::max_iterations;
    double gradient_norm = 0.0;
    std::vector<double> trace;  // log-likelihood after each accepted iterate, starting point first
    std::vector<std::string> warnings;
};

/// Newton-Raphson (IRLS) ascent on the weighted log-likelihood with step
/// halving. Converged means the score norm fell below gradient_tolerance
/// (after one polishing full step), or full Newton steps stopped changing the
/// log-likelihood by more than ll_tolerance relative to its magnitude and
/// stopped shrinking the score.
inline ModelFit fit(const Eigen::MatrixXd& x_in, std::span<const std::uint8_t> y, const ClassWeights& w,
                    const FitOptions& opts = {}, std::vector<std::string> names = {})
{
    const Eigen::Index n = x_in.rows();
    const Eigen::Index p = x_in.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw DataError("design and target differ in length");
    std::size_t n1 = 0;
    for (auto v : y) n1 += v;
    const std::size_t n0 = y.size() - n1;
    if (n1 == 0 || n0 == 0) throw DataError("fit needs both classes present");
    if (!x_in.allFinite()) throw DataError("design matrix contains missing or non-finite values");

    if (names.empty()) {
        for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    }
    if (static_cast<Eigen::Index>(names.size()) != p) throw DataError("fit: column names do not match design");

    // Optional standardisation of the columns; coefficients are mapped back.
    Eigen::VectorXd centre = Eigen::VectorXd::Zero(p), scale = Eigen::VectorXd::Ones(p);
    Eigen::MatrixXd xs;
    const Eigen::MatrixXd* xp = &x_in;
    if (opts.standardize) {
        xs = x_in;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double m = xs.col(j).mean();
            const double sd = std::sqrt((xs.col(j).array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
            if (sd > 0.0) {
                centre(j) = m;
                scale(j) = sd;
                xs.col(j) = (xs.col(j).array() - m) / sd;
            }
        }
        xp = &xs;
    }
    const Eigen::MatrixXd& x = *xp;

    ModelFit fit;
    fit.names.push_back("Intercept");
    for (auto& s : names) fit.names.push_back(std::move(s));
    fit.weights = w;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);

    Eigen::VectorXd row_w(n);
    for (Eigen::Index i = 0; i < n; ++i) row_w(i) = y[static_cast<std::size_t>(i)] ? w.w1 : w.w0;

    Eigen::VectorXd eta = detail::linear_predictor(beta, x);
    double ll = detail::stable_log_likelihood(eta, y, w);
    fit.trace.push_back(ll);
    bool jitter_warned = false;
    bool flat_seen = false;

    for (int it = 1; it <= opts.max_iterations; ++it) {
        fit.iterations = it;
        Eigen::VectorXd resid(n), curv(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double pi = sigmoid(eta(i));
            resid(i) = row_w(i) * ((y[static_cast<std::size_t>(i)] ? 1.0 : 0.0) - pi);
            curv(i) = row_w(i) * pi * (1.0 - pi);
        }
        Eigen::VectorXd g(p + 1);
        g(0) = resid.sum();
        g.tail(p) = x.transpose() * resid;
        fit.gradient_norm = g.norm();
        const bool small_gradient = fit.gradient_norm < opts.gradient_tolerance;

        // Negative Hessian X~^T D X~, assembled blockwise.
        Eigen::MatrixXd h(p + 1, p + 1);
        h(0, 0) = curv.sum();
        const Eigen::MatrixXd dx = x.array().colwise() * curv.array();
        h.block(1, 0, p, 1) = dx.colwise().sum().transpose();
        h.block(0, 1, 1, p) = h.block(1, 0, p, 1).transpose();
        h.block(1, 1, p, p).noalias() = x.transpose() * dx;

        // Solve on the unit-diagonal rescaling for conditioning.
        Eigen::VectorXd d = h.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        Eigen::MatrixXd hs = d.asDiagonal() * h * d.asDiagonal();
        Eigen::VectorXd step;
        for (double ridge = 0.0;; ridge = ridge == 0.0 ? 1e-10 : ridge * 100.0) {
            if (ridge > 1.0) throw NumericalError("Hessian is singular even after ridge jitter");
            Eigen::MatrixXd hr = hs;
            hr.diagonal().array() += ridge;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hr);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 1e-14).all()) {
                step = d.asDiagonal() * ldlt.solve(d.asDiagonal() * g);
                if (step.allFinite()) {
                    if (ridge > 0.0 && !jitter_warned) {
                        fit.warnings.push_back("singular Hessian: ridge jitter " + format_number(ridge) + " applied");
                        jitter_warned = true;
                    }
                    break;
                }
            }
        }

        if (small_gradient) {
            // One last full step as polish, kept if it gains likelihood or shrinks the score.
            Eigen::VectorXd polished = beta + step;
            Eigen::VectorXd polished_eta = detail::linear_predictor(polished, x);
            const double polished_ll = detail::stable_log_likelihood(polished_eta, y, w);
            if (polished.allFinite() &&
                (polished_ll >= ll || weighted_gradient(polished, x, y, w).norm() < fit.gradient_norm)) {
                beta = polished;
                eta = polished_eta;
                ll = polished_ll;
                fit.trace.push_back(ll);
            } else {
                fit.iterations = it - 1;
            }
            fit.converged = true;
            fit.stop = StopReason::gradient;
            break;
        }

        const double tol = opts.ll_tolerance * (1.0 + std::abs(ll));
        double t = 1.0;
        Eigen::VectorXd cand;
        Eigen::VectorXd cand_eta;
        double cand_ll = -std::numeric_limits<double>::infinity();
        bool accepted = false;
        bool flat = false;
        for (int h_i = 0; h_i <= opts.max_halvings; ++h_i, t *= 0.5) {
            cand = beta + t * step;
            cand_eta = detail::linear_predictor(cand, x);
            cand_ll = detail::stable_log_likelihood(cand_eta, y, w);
            if (h_i == 0 && std::abs(cand_ll - ll) <= tol) {
                // Near the optimum the likelihood change drowns in rounding;
                // the score still tells whether the full step helped.
                flat = true;
                accepted = cand_ll >= ll || weighted_gradient(cand, x, y, w).norm() < fit.gradient_norm;
                break;
            }
            if (cand_ll > ll) {
                accepted = true;
                break;
            }
        }
        if (accepted) {
            beta = cand;
            eta = cand_eta;
            ll = cand_ll;
            fit.trace.push_back(ll);
        }
        if (flat) {
            // Flat likelihood: keep taking full steps only while they shrink the score.
            flat_seen = true;
            if (accepted) continue;
            fit.converged = true;
            fit.stop = StopReason::likelihood;
            break;
        }
        if (!accepted) {
            fit.stop = StopReason::line_search;
            fit.warnings.push_back("step halving failed to improve the log-likelihood");
            break;
        }
    }
    if (flat_seen && !fit.converged) {
        fit.converged = true;
        fit.stop = StopReason::likelihood;
    }
    if (!fit.converged && fit.stop == StopReason::max_iterations)
        fit.warnings.push_back("no convergence after " + std::to_string(opts.max_iterations) + " iterations");

    if (opts.standardize) {
        Eigen::VectorXd b(p + 1);
        b.tail(p) = beta.tail(p).cwiseQuotient(scale);
        b(0) = beta(0) - b.tail(p).dot(centre);
        beta = b;
    }
    fit.beta = beta;
    fit.gradient_norm = weighted_gradient(beta, x_in, y, w).norm();
    fit.log_likelihood = weighted_log_likelihood(beta, x_in, y, w);

    for (Eigen::Index j = 1; j <= p; ++j) {
        if (std::abs(beta(j)) > opts.separation_threshold) {
            fit.warnings.push_back("possible quasi-complete separation: |" + fit.names[static_cast<std::size_t>(j)] +
                                   "| = " + format_number(std::abs(beta(j))));
        }
    }
    return fit;
}

inline std::vector<double> predict_proba(const ModelFit& f, const Eigen::MatrixXd& x)
{
    if (f.beta.size() != x.cols() + 1)
        throw DataError("design has " + std::to_string(x.cols()) + " columns, model expects " +
                        std::to_string(f.beta.size() - 1));
    const Eigen::VectorXd eta = detail::linear_predictor(f.beta, x);
    std::vector<double> out(static_cast<std::size_t>(eta.size()));
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(eta(i));
    return out;
}

// ---------------------------------------------------------------------------
// Tau sweep

inline constexpr double kTauFloor = 0.01;

/// `points` evenly spaced values from ybar to `upper`, inclusive.
inline std::vector<double> default_tau_grid(double ybar, std::size_t points = 20, double upper = 0.5)
{
    if (points == 0) throw ConfigError("tau grid needs at least one point");
    if (points == 1) return {upper};
    std::vector<double> g;
    for (std::size_t i = 0; i < points; ++i)
        g.push_back(ybar + (upper - ybar) * static_cast<double>(i) / static_cast<double>(points - 1));
    g.back() = upper;
    return g;
}

struct TauPoint {
    double tau = 0.0;
    ClassWeights weights;
    CVSummary cv;
};

struct TauSweep {
    std::vector<TauPoint> points;
    std::size_t best = 0;

    const TauPoint& best_point() const { return points.at(best); }
};

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

inline std::vector<std::uint8_t> take(std::span<const std::uint8_t> y, std::span<const std::size_t> rows)
{
    std::vector<std::uint8_t> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(y[r]);
    return out;
}

/// Cross-validated AUC for each tau in `grid`. Class weights are formed from
/// the event proportion of the full `y`. Best tau maximises mean AUC; ties go
/// to the smaller tau.
inline TauSweep sweep_tau(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const double> grid,
                          std::span<const Fold> folds, const FitOptions& opts = {})
{
    if (grid.empty()) throw ConfigError("tau grid is empty");
    std::size_t n1 = 0;
    for (auto v : y) n1 += v;
    const double ybar = static_cast<double>(n1) / static_cast<double>(y.size());

    std::vector<double> taus(grid.begin(), grid.end());
    std::sort(taus.begin(), taus.end());
    for (double t : taus) {
        if (t < kTauFloor) throw ConfigError("tau " + format_number(t) + " is below the floor " + format_number(kTauFloor));
        if (!(t < 1.0)) throw ConfigError("tau must be below 1");
    }

    // Fold designs are shared across the grid.
    std::vector<Eigen::MatrixXd> xtr, xva;
    std::vector<std::vector<std::uint8_t>> ytr;
    for (const auto& f : folds) {
        xtr.push_back(take_rows(x, f.train));
        xva.push_back(take_rows(x, f.validate));
        ytr.push_back(take(y, f.train));
    }

    TauSweep sweep;
    for (double tau : taus) {
        TauPoint pt;
        pt.tau = tau;
        pt.weights = class_weights(tau, ybar);
        auto res = cross_validate(
            [&](const Fold& f) {
                const auto k = static_cast<std::size_t>(&f - folds.data());
                const auto m = imbal::fit(xtr[k], ytr[k], pt.weights, opts);
                return predict_proba(m, xva[k]);
            },
            folds, y);
        pt.cv = std::move(res.summary);
        sweep.points.push_back(std::move(pt));
    }
    for (std::size_t i = 1; i < sweep.points.size(); ++i)
        if (sweep.points[i].cv.mean > sweep.points[sweep.best].cv.mean) sweep.best = i;
    return sweep;
}

} // namespace imbal
