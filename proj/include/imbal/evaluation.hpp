#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "imbal/dataset.hpp"
#include "imbal/error.hpp"
#include "imbal/stats.hpp"

namespace imbal {

struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
    std::vector<double> threshold;  // score at which each point is reached; +inf for the origin
    double auc = 0.0;
};

namespace detail {

inline void check_labels(std::span<const double> scores, std::span<const std::uint8_t> y, std::size_t& pos,
                         std::size_t& neg)
{
    if (scores.size() != y.size()) throw DataError("scores and labels differ in length");
    pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
    neg = y.size() - pos;
    if (pos == 0 || neg == 0) throw DataError("ROC analysis needs both classes present");
}

} // namespace detail

/// ROC curve from sweeping every distinct score from high to low. Equal
/// scores move the curve in a single (diagonal) step; AUC is the trapezoidal
/// area under the points.
inline RocCurve roc(std::span<const double> scores, std::span<const std::uint8_t> y)
{
    std::size_t pos = 0, neg = 0;
    detail::check_labels(scores, y, pos, neg);

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve c;
    c.fpr.push_back(0.0);
    c.tpr.push_back(0.0);
    c.threshold.push_back(std::numeric_limits<double>::infinity());
    std::size_t tp = 0, fp = 0;
    double area2 = 0.0;  // twice the area, in count units
    for (std::size_t i = 0; i < idx.size();) {
        const double s = scores[idx[i]];
        std::size_t dtp = 0, dfp = 0;
        for (; i < idx.size() && scores[idx[i]] == s; ++i) (y[idx[i]] ? dtp : dfp) += 1;
        area2 += static_cast<double>(dfp) * static_cast<double>(2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
        c.threshold.push_back(s);
    }
    c.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return c;
}

inline double auc(std::span<const double> scores, std::span<const std::uint8_t> y) { return roc(scores, y).auc; }

struct CutoffChoice {
    double cutoff = 0.5;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double gap = 1.0;
};

/// Candidate cutoffs: one below every score, the midpoint of each pair of
/// adjacent distinct scores, and the largest score. The candidate minimising
/// |sensitivity - specificity| wins; ties go to the smaller cutoff. An event
/// is predicted when score > cutoff.
inline CutoffChoice choose_cutoff(std::span<const double> scores, std::span<const std::uint8_t> y)
{
    std::size_t pos = 0, neg = 0;
    detail::check_labels(scores, y, pos, neg);

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Walk up from "everything predicted an event".
    std::size_t tp = pos, tn = 0;
    CutoffChoice best;
    best.gap = std::numeric_limits<double>::infinity();
    auto consider = [&](double c) {
        const double sens = static_cast<double>(tp) / static_cast<double>(pos);
        const double spec = static_cast<double>(tn) / static_cast<double>(neg);
        const double gap = std::abs(sens - spec);
        if (gap < best.gap) best = {c, sens, spec, gap};
    };
    const double lowest = scores[idx.front()];
    consider(lowest > 0.0 ? 0.0 : std::nextafter(lowest, -std::numeric_limits<double>::infinity()));
    for (std::size_t i = 0; i < idx.size();) {
        const double s = scores[idx[i]];
        for (; i < idx.size() && scores[idx[i]] == s; ++i) {
            if (y[idx[i]])
                --tp;
            else
                ++tn;
        }
        double c = s;
        if (i < idx.size()) {
            const double next = scores[idx[i]];
            c = s + (next - s) / 2.0;
            if (!(c < next)) c = s;
        }
        consider(c);
    }
    return best;
}

struct ConfusionReport {
    double cutoff = 0.5;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double type1 = 0.0;
    double type2 = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    bool f1_undefined = false;

    std::size_t total() const { return tp + fp + tn + fn; }
    double sensitivity() const { return 1.0 - type2; }
    double specificity() const { return 1.0 - type1; }
};

inline ConfusionReport confusion(std::span<const double> scores, std::span<const std::uint8_t> y, double cutoff)
{
    if (scores.size() != y.size()) throw DataError("scores and labels differ in length");
    ConfusionReport r;
    r.cutoff = cutoff;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > cutoff;
        if (y[i]) {
            (predicted ? r.tp : r.fn) += 1;
        } else {
            (predicted ? r.fp : r.tn) += 1;
        }
    }
    auto ratio = [](std::size_t a, std::size_t b) {
        return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
    };
    r.type1 = ratio(r.fp, r.fp + r.tn);
    r.type2 = ratio(r.fn, r.fn + r.tp);
    r.accuracy = ratio(r.tp + r.tn, r.total());
    r.f1_undefined = 2 * r.tp + r.fp + r.fn == 0;
    r.f1 = ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn);
    return r;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CVSummary {
    std::vector<double> aucs;
    std::vector<std::size_t> folds_used;
    std::vector<std::size_t> failed_folds;
    std::vector<std::string> failures;
    double mean = 0.0;
    double std = 0.0;

    bool incomplete() const { return !failed_folds.empty(); }
};

inline CVSummary summarize_aucs(std::vector<double> aucs)
{
    CVSummary s;
    s.aucs = std::move(aucs);
    s.mean = imbal::mean(s.aucs);
    s.std = sample_std(s.aucs);
    for (std::size_t i = 0; i < s.aucs.size(); ++i) s.folds_used.push_back(i);
    return s;
}

struct CVResult {
    CVSummary summary;
    std::vector<RocCurve> curves;  // one per successful fold, in fold order
};

/// Scores each fold's validation rows with `pipeline(fold)` and aggregates the
/// fold AUCs. A fold whose pipeline throws is recorded and skipped.
using FoldPipeline = std::function<std::vector<double>(const Fold&)>;

inline CVResult cross_validate(const FoldPipeline& pipeline, std::span<const Fold> folds,
                               std::span<const std::uint8_t> y)
{
    if (folds.size() < 2) throw ConfigError("cross-validation needs at least 2 folds");
    CVResult res;
    std::vector<double> aucs;
    std::vector<std::size_t> used;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        try {
            const auto scores = pipeline(folds[f]);
            std::vector<std::uint8_t> labels;
            labels.reserve(folds[f].validate.size());
            for (auto r : folds[f].validate) labels.push_back(y[r]);
            auto curve = roc(scores, labels);
            aucs.push_back(curve.auc);
            used.push_back(f);
            res.curves.push_back(std::move(curve));
        } catch (const std::exception& e) {
            res.summary.failed_folds.push_back(f);
            res.summary.failures.push_back(e.what());
        }
    }
    auto failed = std::move(res.summary.failed_folds);
    auto failures = std::move(res.summary.failures);
    res.summary = summarize_aucs(std::move(aucs));
    res.summary.folds_used = std::move(used);
    res.summary.failed_folds = std::move(failed);
    res.summary.failures = std::move(failures);
    return res;
}

} // namespace imbal
