#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imbal/binning.hpp"
#include "imbal/error.hpp"
#include "imbal/stats.hpp"

namespace imbal {

// ---------------------------------------------------------------------------
// Empirical logit

inline double empirical_logit(std::size_t count, std::size_t events)
{
    return std::log((static_cast<double>(events) + 0.5) / (static_cast<double>(count - events) + 0.5));
}

struct ElogitRow {
    std::size_t first_rank = 0;
    std::size_t last_rank = 0;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::size_t count = 0;
    std::size_t events = 0;
    double elogit = 0.0;

    // Position used for the rank plot; merged ranks sit at their midpoint.
    double rank_position() const { return 0.5 * static_cast<double>(first_rank + last_rank); }
};

struct EmpiricalLogitTable {
    std::string variable;
    std::vector<ElogitRow> rows;
    bool constant = false;

    std::vector<double> means() const
    {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.mean);
        return v;
    }
    std::vector<double> ranks() const
    {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.rank_position());
        return v;
    }
    std::vector<double> elogits() const
    {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.elogit);
        return v;
    }
};

inline EmpiricalLogitTable empirical_logit_table(std::span<const double> x, std::span<const std::uint8_t> y,
                                                 std::size_t n_ranks, std::string variable = {})
{
    if (x.size() != y.size()) throw DataError("empirical_logit_table: column and target lengths differ");
    const auto ranks = percentile_rank(x, y, n_ranks);
    EmpiricalLogitTable t;
    t.variable = std::move(variable);
    t.constant = ranks.constant;
    for (const auto& g : ranks.groups) {
        t.rows.push_back(ElogitRow{g.first_rank, g.last_rank, g.min, g.max, g.mean, g.count, g.events,
                                   empirical_logit(g.count, g.events)});
    }
    return t;
}

struct LinearityScore {
    double r2_value = 1.0;
    double r2_rank = 1.0;
    LineFit value_line;  // elogit ~ mean
    LineFit rank_line;   // elogit ~ rank
    bool discretize = false;
    bool degenerate = false;
};

/// Compares how well elogit is explained by the rank-group mean versus the
/// rank index. Recommends discretizing when the rank fit wins by more than
/// `margin` in R^2.
inline LinearityScore linearity_score(const EmpiricalLogitTable& t, double margin = 0.1)
{
    if (t.rows.size() < 3) throw DataError("linearity_score: need at least 3 rank groups for '" + t.variable + "'");
    LinearityScore s;
    const auto e = t.elogits();
    const auto m = t.means();
    const auto r = t.ranks();
    s.value_line = fit_line(m, e);
    s.rank_line = fit_line(r, e);
    s.degenerate = std::all_of(e.begin(), e.end(), [&](double v) { return v == e.front(); });
    s.r2_value = s.degenerate ? 1.0 : s.value_line.r2;
    s.r2_rank = s.degenerate ? 1.0 : s.rank_line.r2;
    s.discretize = s.r2_rank > s.r2_value + margin;
    return s;
}

// ---------------------------------------------------------------------------
// Information value

enum class Strength { useless, weak, medium, strong };

inline std::string to_string(Strength s)
{
    switch (s) {
    case Strength::useless: return "useless";
    case Strength::weak: return "weak";
    case Strength::medium: return "medium";
    case Strength::strong: return "strong";
    }
    return "?";
}

/// Lower bounds of weak, medium and strong.
using StrengthThresholds = std::array<double, 3>;
inline constexpr StrengthThresholds kDefaultStrength{0.02, 0.1, 0.3};

inline Strength strength_label(double iv, const StrengthThresholds& t = kDefaultStrength)
{
    if (iv < t[0]) return Strength::useless;
    if (iv < t[1]) return Strength::weak;
    if (iv < t[2]) return Strength::medium;
    return Strength::strong;
}

struct IVReport {
    std::string variable;
    double iv = 0.0;
    Strength strength = Strength::useless;
    std::size_t bins = 0;
};

/// IV = sum_j (p_j - q_j) ln(p_j / q_j) over every bin, missing bin included,
/// using the same smoothing as compute_woe.
inline double information_value(std::span<const BinStats> bins)
{
    std::size_t ev = 0, ne = 0;
    bool smooth = false;
    for (const auto& b : bins) {
        ev += b.events;
        ne += b.non_events();
        smooth = smooth || b.events == 0 || b.non_events() == 0;
    }
    if (ev == 0 || ne == 0) throw DataError("information_value: scheme has no events or no non-events");
    const double add = smooth ? 0.5 : 0.0;
    const double tot_ev = static_cast<double>(ev) + add * static_cast<double>(bins.size());
    const double tot_ne = static_cast<double>(ne) + add * static_cast<double>(bins.size());
    double iv = 0.0;
    for (const auto& b : bins) {
        const double p = (static_cast<double>(b.non_events()) + add) / tot_ne;
        const double q = (static_cast<double>(b.events) + add) / tot_ev;
        iv += (p - q) * std::log(p / q);
    }
    return iv;
}

inline IVReport information_value(const BinningScheme& s, const StrengthThresholds& t = kDefaultStrength)
{
    IVReport r;
    r.variable = s.variable;
    r.bins = s.bin_count();
    r.iv = information_value(std::span<const BinStats>(s.bins));
    r.strength = strength_label(r.iv, t);
    return r;
}

/// Names with IV strictly above `threshold`, highest IV first.
inline std::vector<std::string> select_variables(std::vector<IVReport> reports, double threshold)
{
    if (threshold < 0.0) throw ConfigError("IV threshold must be non-negative");
    std::stable_sort(reports.begin(), reports.end(), [](const IVReport& a, const IVReport& b) { return a.iv > b.iv; });
    std::vector<std::string> out;
    for (const auto& r : reports)
        if (r.iv > threshold) out.push_back(r.variable);
    return out;
}

// ---------------------------------------------------------------------------
// Variance inflation

struct VIFReport {
    std::vector<std::string> names;
    std::vector<double> vif;
    std::vector<double> r2;
    bool any_infinite = false;
};

/// VIF_k = 1 / (1 - R^2_k) from regressing column k on the remaining columns
/// plus an intercept. Exact collinearity reports +inf.
inline VIFReport vif(const Eigen::MatrixXd& design, std::vector<std::string> names)
{
    const auto n = design.rows();
    const auto p = design.cols();
    if (p < 2) throw DataError("vif needs at least 2 columns");
    if (n <= p) throw DataError("vif needs more rows than columns");
    if (static_cast<Eigen::Index>(names.size()) != p) throw DataError("vif: column names do not match design");

    VIFReport rep;
    rep.names = std::move(names);
    for (Eigen::Index k = 0; k < p; ++k) {
        Eigen::MatrixXd others(n, p);
        others.col(0).setOnes();
        for (Eigen::Index j = 0, c = 1; j < p; ++j)
            if (j != k) others.col(c++) = design.col(j);
        const Eigen::VectorXd yk = design.col(k);
        const double my = yk.mean();
        const double sst = (yk.array() - my).square().sum();

        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(others);
        qr.setThreshold(1e-12);
        const Eigen::VectorXd coef = qr.solve(yk);
        const double sse = (yk - others * coef).squaredNorm();

        double r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
        double v = 1.0 / (1.0 - r2);
        if (sst == 0.0 || r2 >= 1.0 - 1e-12) {
            r2 = 1.0;
            v = std::numeric_limits<double>::infinity();
            rep.any_infinite = true;
        }
        rep.r2.push_back(r2);
        rep.vif.push_back(v);
    }
    return rep;
}

} // namespace imbal
