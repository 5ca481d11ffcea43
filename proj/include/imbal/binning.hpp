#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imbal/dataset.hpp"
#include "imbal/error.hpp"
#include "imbal/stats.hpp"

namespace imbal {

enum class BinMethod { distance, quantile, gini, optimal };

inline std::string to_string(BinMethod m)
{
    switch (m) {
    case BinMethod::distance: return "distance";
    case BinMethod::quantile: return "quantile";
    case BinMethod::gini: return "gini";
    case BinMethod::optimal: return "optimal";
    }
    return "?";
}

inline BinMethod parse_bin_method(const std::string& s)
{
    if (s == "distance") return BinMethod::distance;
    if (s == "quantile") return BinMethod::quantile;
    if (s == "gini") return BinMethod::gini;
    if (s == "optimal") return BinMethod::optimal;
    throw ConfigError("unknown binning method '" + s + "' (distance, quantile, gini, optimal)");
}

struct BinStats {
    std::size_t count = 0;
    std::size_t events = 0;
    double woe = 0.0;

    std::size_t non_events() const { return count - events; }
    double event_rate() const { return count ? static_cast<double>(events) / static_cast<double>(count) : 0.0; }
};

/// Ordered cut points c_1 < ... < c_{k-1} define the value bins
/// (-inf, c_1], (c_1, c_2], ..., (c_{k-1}, +inf). When `has_missing_bin` is
/// set, `bins` carries one extra trailing entry for missing values.
struct BinningScheme {
    std::string variable;
    BinMethod method = BinMethod::quantile;
    std::vector<double> cuts;
    bool has_missing_bin = false;
    std::vector<BinStats> bins;
    bool usable = true;

    std::size_t value_bins() const { return cuts.size() + 1; }
    std::size_t bin_count() const { return bins.size(); }
    std::size_t missing_index() const { return cuts.size() + 1; }

    std::size_t total_count() const
    {
        std::size_t n = 0;
        for (const auto& b : bins) n += b.count;
        return n;
    }
    std::size_t total_events() const
    {
        std::size_t n = 0;
        for (const auto& b : bins) n += b.events;
        return n;
    }

    std::string bin_label(std::size_t j) const
    {
        if (has_missing_bin && j == missing_index()) return "missing";
        auto fmt = [](double v) { return format_number(v); };
        std::string lo = j == 0 ? "-inf" : fmt(cuts[j - 1]);
        std::string hi = j == cuts.size() ? "+inf)" : fmt(cuts[j]) + "]";
        return "(" + lo + ";" + hi;
    }
};

struct BinningOptions {
    std::size_t max_bins = 20;
    double merge_alpha = 0.05;
    double split_alpha = 0.05;
    double min_bin_fraction = 0.005;
    std::size_t n_ranks = 100;
};

// ---------------------------------------------------------------------------
// Weight of evidence

/// Fills in woe = ln(p_j / q_j) with p_j the non-event share and q_j the event
/// share. If any bin has zero events or zero non-events, 0.5 is added to both
/// counts of every bin before the shares are formed.
inline void compute_woe(std::vector<BinStats>& bins)
{
    bool smooth = false;
    for (const auto& b : bins) smooth = smooth || b.events == 0 || b.non_events() == 0;
    const double add = smooth ? 0.5 : 0.0;
    double tot_ev = 0.0, tot_ne = 0.0;
    for (const auto& b : bins) {
        tot_ev += static_cast<double>(b.events) + add;
        tot_ne += static_cast<double>(b.non_events()) + add;
    }
    for (auto& b : bins) {
        if (tot_ev <= 0.0 || tot_ne <= 0.0) {
            b.woe = 0.0;
            continue;
        }
        const double p = (static_cast<double>(b.non_events()) + add) / tot_ne;
        const double q = (static_cast<double>(b.events) + add) / tot_ev;
        b.woe = std::log(p / q);
    }
}

// ---------------------------------------------------------------------------
// Percentile ranks

struct RankGroup {
    std::size_t first_rank = 0;  // 1-based
    std::size_t last_rank = 0;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::size_t count = 0;
    std::size_t events = 0;
};

struct RankTable {
    std::vector<RankGroup> groups;
    std::vector<std::ptrdiff_t> assignment;  // group index per row, -1 for missing
    bool constant = false;
};

/// Equal-frequency percentile ranks. The j-th smallest value (1-based) goes to
/// rank floor(j * n_ranks / (n + 1)) + 1; adjacent ranks that share a value
/// (max of one equals min of the next) are merged, so every distinct value
/// lands in exactly one group. Missing values are left out.
inline RankTable percentile_rank(std::span<const double> x, std::span<const std::uint8_t> y, std::size_t n_ranks)
{
    if (n_ranks == 0) throw ConfigError("n_ranks must be positive");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!is_missing(x[i])) idx.push_back(i);
    if (idx.empty()) throw DataError("percentile_rank: all values missing");
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    const std::size_t m = idx.size();
    RankTable t;
    t.assignment.assign(x.size(), -1);

    std::vector<double> sums;
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t rank =
            static_cast<std::size_t>((static_cast<unsigned long long>(j + 1) * n_ranks) / (m + 1)) + 1;
        const double v = x[idx[j]];
        const bool ev = !y.empty() && y[idx[j]] == 1;
        bool open_new = t.groups.empty();
        if (!open_new) {
            const auto& g = t.groups.back();
            open_new = rank != g.last_rank && v != g.max;
        }
        if (open_new) {
            t.groups.push_back(RankGroup{rank, rank, v, v, 0.0, 0, 0});
            sums.push_back(0.0);
        }
        auto& g = t.groups.back();
        g.last_rank = rank;
        g.max = v;
        ++g.count;
        g.events += ev ? 1 : 0;
        sums.back() += v;
        t.assignment[idx[j]] = static_cast<std::ptrdiff_t>(t.groups.size() - 1);
    }
    for (std::size_t g = 0; g < t.groups.size(); ++g)
        t.groups[g].mean = sums[g] / static_cast<double>(t.groups[g].count);
    t.constant = x[idx.front()] == x[idx.back()];
    return t;
}

// ---------------------------------------------------------------------------
// Discretization

namespace detail {

// Distinct sorted values with their row and event counts.
struct Runs {
    std::vector<double> value;
    std::vector<std::size_t> count;
    std::vector<std::size_t> events;
    std::size_t size() const { return value.size(); }
};

inline Runs make_runs(std::span<const double> x, std::span<const std::uint8_t> y)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!is_missing(x[i])) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Runs r;
    for (auto i : idx) {
        if (r.value.empty() || r.value.back() != x[i]) {
            r.value.push_back(x[i]);
            r.count.push_back(0);
            r.events.push_back(0);
        }
        ++r.count.back();
        r.events.back() += y[i];
    }
    return r;
}

// Bin stats for cuts over runs; bins are right-closed.
inline std::vector<BinStats> tally(const Runs& r, const std::vector<double>& cuts)
{
    std::vector<BinStats> bins(cuts.size() + 1);
    for (std::size_t i = 0; i < r.size(); ++i) {
        auto b = static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), r.value[i]) - cuts.begin());
        bins[b].count += r.count[i];
        bins[b].events += r.events[i];
    }
    return bins;
}

inline void drop_cut(std::vector<double>& cuts, std::vector<BinStats>& bins, std::size_t cut)
{
    bins[cut].count += bins[cut + 1].count;
    bins[cut].events += bins[cut + 1].events;
    bins.erase(bins.begin() + static_cast<std::ptrdiff_t>(cut) + 1);
    cuts.erase(cuts.begin() + static_cast<std::ptrdiff_t>(cut));
}

inline void drop_empty_bins(std::vector<double>& cuts, std::vector<BinStats>& bins)
{
    for (std::size_t j = 0; j < bins.size() && bins.size() > 1;) {
        if (bins[j].count == 0) {
            drop_cut(cuts, bins, j == bins.size() - 1 ? j - 1 : j);
        } else {
            ++j;
        }
    }
}

// Folds bins smaller than min_count into the neighbour with the closer event rate.
inline void enforce_min_size(std::vector<double>& cuts, std::vector<BinStats>& bins, std::size_t min_count)
{
    while (bins.size() > 1) {
        std::size_t small = bins.size();
        for (std::size_t j = 0; j < bins.size(); ++j)
            if (bins[j].count < min_count && (small == bins.size() || bins[j].count < bins[small].count)) small = j;
        if (small == bins.size()) break;
        std::size_t cut;
        if (small == 0) {
            cut = 0;
        } else if (small == bins.size() - 1) {
            cut = small - 1;
        } else {
            const double r = bins[small].event_rate();
            const double left = std::abs(bins[small - 1].event_rate() - r);
            const double right = std::abs(bins[small + 1].event_rate() - r);
            cut = left <= right ? small - 1 : small;
        }
        drop_cut(cuts, bins, cut);
    }
}

inline double gini_impurity_weighted(double n, double e)
{
    if (n <= 0.0) return 0.0;
    const double p = e / n;
    return n * 2.0 * p * (1.0 - p);
}

inline double chi_square_2x2(double n_l, double e_l, double n_r, double e_r)
{
    const double a = e_l, b = n_l - e_l, c = e_r, d = n_r - e_r;
    const double n = n_l + n_r;
    const double den = (a + b) * (c + d) * (a + c) * (b + d);
    if (den <= 0.0) return 0.0;
    const double diff = a * d - b * c;
    return n * diff * diff / den;
}

struct Segment {
    std::size_t lo, hi;  // run range [lo, hi)
    bool searched = false;
    std::size_t best = 0;  // split: left = [lo, best)
    double score = -1.0;
};

// Best-first binary splitting over runs. `score(n_l, e_l, n_r, e_r)` rates a
// split; `accept(score)` decides whether the best split of a segment is taken.
template <class Score, class Accept>
std::vector<double> recursive_split(const Runs& r, std::size_t max_bins, std::size_t min_count, Score score,
                                    Accept accept)
{
    std::vector<double> pc(r.size() + 1, 0.0), pe(r.size() + 1, 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
        pc[i + 1] = pc[i] + static_cast<double>(r.count[i]);
        pe[i + 1] = pe[i] + static_cast<double>(r.events[i]);
    }
    auto search = [&](Segment& s) {
        s.searched = true;
        s.score = -1.0;
        for (std::size_t k = s.lo + 1; k < s.hi; ++k) {
            const double nl = pc[k] - pc[s.lo], el = pe[k] - pe[s.lo];
            const double nr = pc[s.hi] - pc[k], er = pe[s.hi] - pe[k];
            if (nl < static_cast<double>(min_count) || nr < static_cast<double>(min_count)) continue;
            const double sc = score(nl, el, nr, er);
            if (sc > s.score) {
                s.score = sc;
                s.best = k;
            }
        }
    };

    std::vector<Segment> segs{Segment{0, r.size()}};
    while (segs.size() < max_bins) {
        std::size_t pick = segs.size();
        for (std::size_t i = 0; i < segs.size(); ++i) {
            if (!segs[i].searched) search(segs[i]);
            if (segs[i].score >= 0.0 && accept(segs[i].score) && (pick == segs.size() || segs[i].score > segs[pick].score))
                pick = i;
        }
        if (pick == segs.size()) break;
        Segment left{segs[pick].lo, segs[pick].best};
        Segment right{segs[pick].best, segs[pick].hi};
        segs[pick] = left;
        segs.insert(segs.begin() + static_cast<std::ptrdiff_t>(pick) + 1, right);
    }
    std::vector<double> cuts;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) cuts.push_back(r.value[segs[i].hi - 1]);
    return cuts;
}

} // namespace detail

/// Builds a scheme over the non-missing values of `x` (missing values are
/// handled by add_missing_bin). Cuts sit on observed values so each distinct
/// value falls in exactly one bin.
///
///  - distance: equal-width cuts over [min, max].
///  - quantile: equal-frequency slices; a value tied across a slice boundary
///    stays whole in the lower bin.
///  - gini:     best-first binary splits maximising the drop in weighted Gini
///    impurity.
///  - optimal:  best-first binary splits maximising the 2x2 chi-square
///    statistic, taken only while the split p-value is below `split_alpha`.
///
/// Every method keeps bins at or above min_bin_fraction of the column length.
inline BinningScheme discretize(std::span<const double> x, std::span<const std::uint8_t> y, BinMethod method,
                                const BinningOptions& opts, std::string variable = {})
{
    if (opts.max_bins < 2) throw ConfigError("max_bins must be at least 2");
    if (x.size() != y.size()) throw DataError("discretize: column and target lengths differ");

    BinningScheme s;
    s.variable = std::move(variable);
    s.method = method;

    const auto runs = detail::make_runs(x, y);
    if (runs.size() == 0) throw DataError("discretize: column '" + s.variable + "' has no observed values");
    if (runs.size() == 1) {
        s.usable = false;
        s.bins = detail::tally(runs, s.cuts);
        compute_woe(s.bins);
        return s;
    }

    const auto min_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(opts.min_bin_fraction * static_cast<double>(x.size()))));
    std::size_t m = 0;
    for (auto c : runs.count) m += c;

    std::vector<double> cuts;
    switch (method) {
    case BinMethod::distance: {
        const double lo = runs.value.front(), hi = runs.value.back();
        const double width = (hi - lo) / static_cast<double>(opts.max_bins);
        for (std::size_t j = 1; j < opts.max_bins; ++j) {
            const double c = lo + width * static_cast<double>(j);
            if (c < hi && (cuts.empty() || c > cuts.back())) cuts.push_back(c);
        }
        break;
    }
    case BinMethod::quantile: {
        // Slice of sorted position j (1-based) is floor(j * max_bins / (m + 1)).
        // A run that a slice boundary passes through gets a cut at its value.
        std::size_t pos = 0;
        const auto rank_of = [&](std::size_t j) {
            return (static_cast<unsigned long long>(j) * opts.max_bins) / (m + 1);
        };
        for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
            const auto first = pos + 1;
            pos += runs.count[i];
            if (rank_of(first) != rank_of(pos + 1)) cuts.push_back(runs.value[i]);
        }
        break;
    }
    case BinMethod::gini:
        cuts = detail::recursive_split(
            runs, opts.max_bins, min_count,
            [](double nl, double el, double nr, double er) {
                return detail::gini_impurity_weighted(nl + nr, el + er) - detail::gini_impurity_weighted(nl, el) -
                       detail::gini_impurity_weighted(nr, er);
            },
            [](double gain) { return gain > 1e-12; });
        break;
    case BinMethod::optimal:
        cuts = detail::recursive_split(
            runs, opts.max_bins, min_count,
            [](double nl, double el, double nr, double er) { return detail::chi_square_2x2(nl, el, nr, er); },
            [alpha = opts.split_alpha](double chi2) { return chi_square_1df_pvalue(chi2) < alpha; });
        break;
    }

    auto bins = detail::tally(runs, cuts);
    detail::drop_empty_bins(cuts, bins);
    if (method == BinMethod::distance || method == BinMethod::quantile) detail::enforce_min_size(cuts, bins, min_count);

    s.cuts = std::move(cuts);
    s.bins = std::move(bins);
    s.usable = s.bins.size() >= 2;
    compute_woe(s.bins);
    return s;
}

/// Two-proportion pooled z statistic for adjacent bins.
inline double two_proportion_z(const BinStats& a, const BinStats& b)
{
    const double n1 = static_cast<double>(a.count), n2 = static_cast<double>(b.count);
    if (n1 == 0.0 || n2 == 0.0) return 0.0;
    const double p1 = static_cast<double>(a.events) / n1, p2 = static_cast<double>(b.events) / n2;
    const double p = static_cast<double>(a.events + b.events) / (n1 + n2);
    const double se = std::sqrt(p * (1.0 - p) * (1.0 / n1 + 1.0 / n2));
    if (se == 0.0) return 0.0;
    return (p1 - p2) / se;
}

/// Merges the adjacent value-bin pair with the smallest |z| while that pair's
/// two-sided p-value is at least `alpha`, stopping at two value bins. The
/// missing bin is never touched.
inline BinningScheme merge_weak_bins(BinningScheme s, double alpha = 0.05)
{
    if (s.value_bins() < 2) return s;
    std::vector<BinStats> value_bins(s.bins.begin(), s.bins.begin() + static_cast<std::ptrdiff_t>(s.value_bins()));
    while (value_bins.size() > 2) {
        std::size_t best = 0;
        double best_z = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j + 1 < value_bins.size(); ++j) {
            const double z = std::abs(two_proportion_z(value_bins[j], value_bins[j + 1]));
            if (z < best_z) {
                best_z = z;
                best = j;
            }
        }
        if (normal_two_sided_pvalue(best_z) < alpha) break;
        detail::drop_cut(s.cuts, value_bins, best);
    }
    if (s.has_missing_bin) value_bins.push_back(s.bins.back());
    s.bins = std::move(value_bins);
    compute_woe(s.bins);
    return s;
}

/// Appends a missing-value bin if the column has any missing cells.
inline BinningScheme add_missing_bin(BinningScheme s, std::span<const double> x, std::span<const std::uint8_t> y)
{
    if (s.has_missing_bin) return s;
    BinStats miss;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i])) {
            ++miss.count;
            miss.events += y[i];
        }
    }
    if (miss.count == 0) return s;
    s.bins.push_back(miss);
    s.has_missing_bin = true;
    compute_woe(s.bins);
    return s;
}

/// Right-closed interval lookup; missing values go to the missing bin.
inline std::size_t assign_bin(const BinningScheme& s, double value)
{
    if (is_missing(value)) {
        if (!s.has_missing_bin)
            throw DataError("variable '" + s.variable + "' has a missing value but its scheme has no missing bin");
        return s.missing_index();
    }
    return static_cast<std::size_t>(std::lower_bound(s.cuts.begin(), s.cuts.end(), value) - s.cuts.begin());
}

/// discretize -> merge_weak_bins -> add_missing_bin.
inline BinningScheme build_scheme(std::span<const double> x, std::span<const std::uint8_t> y, BinMethod method,
                                  const BinningOptions& opts, const std::string& variable)
{
    auto s = discretize(x, y, method, opts, variable);
    if (s.usable) s = merge_weak_bins(std::move(s), opts.merge_alpha);
    return add_missing_bin(std::move(s), x, y);
}

// ---------------------------------------------------------------------------
// One-hot encoding

struct ReferenceBin {
    std::string variable;
    std::size_t bin = 0;
};

struct DummyMatrix {
    std::vector<std::string> columns;
    std::vector<std::size_t> source;  // scheme index per column
    std::vector<std::size_t> bin;     // bin index per column
    Eigen::MatrixXd values;
    std::vector<ReferenceBin> references;
};

inline std::string dummy_name(const BinningScheme& s, std::size_t bin)
{
    return s.variable + (s.has_missing_bin && bin == s.missing_index() ? std::string(":missing")
                                                                        : ":bin" + std::to_string(bin));
}

/// One indicator column per (variable, bin). With drop_reference the first bin
/// of each variable is left out and recorded.
inline DummyMatrix one_hot(std::span<const BinningScheme> schemes, const Dataset& d, bool drop_reference)
{
    DummyMatrix m;
    std::vector<std::size_t> first_col;
    for (std::size_t v = 0; v < schemes.size(); ++v) {
        const auto& s = schemes[v];
        first_col.push_back(m.columns.size());
        for (std::size_t b = 0; b < s.bin_count(); ++b) {
            if (drop_reference && b == 0) {
                m.references.push_back({s.variable, 0});
                continue;
            }
            m.columns.push_back(dummy_name(s, b));
            m.source.push_back(v);
            m.bin.push_back(b);
        }
    }
    m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.rows()), static_cast<Eigen::Index>(m.columns.size()));
    for (std::size_t v = 0; v < schemes.size(); ++v) {
        const auto& col = d.column(schemes[v].variable);
        for (std::size_t r = 0; r < d.rows(); ++r) {
            const auto b = assign_bin(schemes[v], col[r]);
            if (drop_reference && b == 0) continue;
            const auto c = first_col[v] + b - (drop_reference ? 1 : 0);
            m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 1.0;
        }
    }
    return m;
}

} // namespace imbal
