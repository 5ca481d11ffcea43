#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "imbal/error.hpp"

namespace imbal {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Column-oriented table of interval predictors plus one binary target.
/// Missing predictor cells are stored as NaN. A dataset loaded for scoring
/// may carry no target, in which case `target` is empty.
struct Dataset {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::vector<std::uint8_t> target;
    std::vector<std::string> ids;
    std::string provenance;

    std::size_t rows() const { return ids.size(); }

    bool has_target() const { return !target.empty(); }

    std::size_t events() const
    {
        return static_cast<std::size_t>(std::count(target.begin(), target.end(), std::uint8_t{1}));
    }

    double event_rate() const
    {
        return rows() == 0 ? 0.0 : static_cast<double>(events()) / static_cast<double>(rows());
    }

    std::optional<std::size_t> find(std::string_view name) const
    {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return std::nullopt;
    }

    std::size_t index_of(std::string_view name) const
    {
        auto i = find(name);
        if (!i) throw DataError("unknown column '" + std::string(name) + "'");
        return *i;
    }

    const std::vector<double>& column(std::string_view name) const { return columns[index_of(name)]; }

    /// Rows in the order given.
    Dataset subset(std::span<const std::size_t> rows) const
    {
        Dataset out;
        out.names = names;
        out.provenance = provenance;
        out.columns.resize(columns.size());
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out.columns[c].reserve(rows.size());
            for (auto r : rows) out.columns[c].push_back(columns[c][r]);
        }
        out.ids.reserve(rows.size());
        for (auto r : rows) out.ids.push_back(ids[r]);
        if (!target.empty()) {
            out.target.reserve(rows.size());
            for (auto r : rows) out.target.push_back(target[r]);
        }
        return out;
    }

    /// Same rows, restricted to the named predictor columns (in that order).
    Dataset select(std::span<const std::string> vars) const
    {
        Dataset out;
        out.provenance = provenance;
        out.ids = ids;
        out.target = target;
        for (const auto& v : vars) {
            out.names.push_back(v);
            out.columns.push_back(column(v));
        }
        return out;
    }
};

/// Role assignment for the columns of a CSV file.
struct CsvSchema {
    std::string target;                 // empty: file has no target (scoring input)
    std::optional<std::string> id;      // optional row identifier column
    std::vector<std::string> predictors;  // empty: every column not otherwise claimed
    std::vector<std::string> ignore;
    std::vector<std::string> missing_tokens{"", "NA"};
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
            was_quoted = true;
        } else if (ch == ',') {
            out.push_back(was_quoted ? field : std::string(trim(field)));
            field.clear();
            was_quoted = false;
        } else {
            field.push_back(ch);
        }
    }
    out.push_back(was_quoted ? field : std::string(trim(field)));
    return out;
}

inline std::optional<double> parse_double(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

// Portable Fisher-Yates; std::shuffle's use of the engine is implementation-defined.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace detail

inline Dataset load_csv_stream(std::istream& in, const CsvSchema& schema, std::string provenance)
{
    std::string line;
    if (!std::getline(in, line)) throw DataError(provenance + ": empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);

    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!pos.emplace(header[i], i).second)
            throw DataError(provenance + ": duplicate column name '" + header[i] + "'");
    }
    auto require = [&](const std::string& name) {
        auto it = pos.find(name);
        if (it == pos.end()) throw DataError(provenance + ": column '" + name + "' not found in header");
        return it->second;
    };

    std::optional<std::size_t> target_col;
    if (!schema.target.empty()) target_col = require(schema.target);
    std::optional<std::size_t> id_col;
    if (schema.id) id_col = require(*schema.id);

    std::vector<std::string> predictors = schema.predictors;
    if (predictors.empty()) {
        std::unordered_set<std::string> claimed(schema.ignore.begin(), schema.ignore.end());
        claimed.insert(schema.target);
        if (schema.id) claimed.insert(*schema.id);
        for (const auto& h : header)
            if (!claimed.count(h)) predictors.push_back(h);
    }
    std::vector<std::size_t> pred_cols;
    for (const auto& p : predictors) pred_cols.push_back(require(p));

    const std::unordered_set<std::string> missing(schema.missing_tokens.begin(), schema.missing_tokens.end());

    Dataset d;
    d.names = predictors;
    d.columns.resize(predictors.size());
    d.provenance = std::move(provenance);

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(d.provenance + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        for (std::size_t k = 0; k < pred_cols.size(); ++k) {
            const auto& cell = cells[pred_cols[k]];
            if (missing.count(cell)) {
                d.columns[k].push_back(kMissing);
                continue;
            }
            auto v = detail::parse_double(cell);
            if (!v) {
                throw DataError(d.provenance + ": row " + std::to_string(row) + ", column '" + predictors[k] +
                                "': cannot parse '" + cell + "' as a number");
            }
            d.columns[k].push_back(*v);
        }
        if (target_col) {
            const auto& cell = cells[*target_col];
            auto v = detail::parse_double(cell);
            if (!v || (*v != 0.0 && *v != 1.0)) {
                throw DataError(d.provenance + ": row " + std::to_string(row) + ", target column '" + schema.target +
                                "': value '" + cell + "' is not 0 or 1");
            }
            d.target.push_back(*v == 1.0 ? 1 : 0);
        }
        d.ids.push_back(id_col ? cells[*id_col] : std::to_string(row));
    }
    return d;
}

/// Loads a CSV file with a header row. Empty cells and the schema's missing
/// tokens become NaN; any other unparseable predictor cell is an error naming
/// the 1-based data row and the column.
inline Dataset load_csv(const std::string& path, const CsvSchema& schema)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return load_csv_stream(in, schema, path);
}

// ---------------------------------------------------------------------------
// Missing data

enum class MissingPolicy { drop_rows, missing_as_bin };

struct MissingPolicyResult {
    Dataset data;
    std::size_t removed = 0;
    double removed_fraction = 0.0;
    double event_rate = 0.0;
};

inline MissingPolicyResult apply_missing_policy(const Dataset& d, MissingPolicy policy,
                                                std::span<const std::string> vars)
{
    std::vector<std::size_t> cols;
    for (const auto& v : vars) cols.push_back(d.index_of(v));

    MissingPolicyResult res;
    if (policy == MissingPolicy::missing_as_bin) {
        res.data = d;
    } else {
        std::vector<std::size_t> keep;
        keep.reserve(d.rows());
        for (std::size_t r = 0; r < d.rows(); ++r) {
            bool any = false;
            for (auto c : cols) any = any || is_missing(d.columns[c][r]);
            if (!any) keep.push_back(r);
        }
        res.data = d.subset(keep);
        res.removed = d.rows() - keep.size();
    }
    res.removed_fraction = d.rows() ? static_cast<double>(res.removed) / static_cast<double>(d.rows()) : 0.0;
    res.event_rate = res.data.event_rate();
    const auto ev = res.data.events();
    if (ev == 0 || ev == res.data.rows())
        throw DataError("missing-value policy leaves no events or no non-events");
    return res;
}

// ---------------------------------------------------------------------------
// Partitioning

struct SplitSpec {
    double train_fraction = 0.7;
    std::size_t fold_count = 10;
    bool stratified = true;
    std::uint64_t seed = 2020;
};

struct RowSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    bool test_has_events = true;
};

/// Seeded train/test partition. The training part gets floor(f * rows) rows;
/// under stratification it gets round(f_train * events) of the events. Row
/// order inside each part follows the source order.
inline RowSplit split_rows(const Dataset& d, const SplitSpec& s)
{
    const std::size_t n = d.rows();
    if (n < 2) throw DataError("split needs at least 2 rows");
    if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0,1)");
    const auto n_train = static_cast<std::size_t>(std::floor(s.train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n) throw DataError("split leaves an empty part");

    std::mt19937_64 rng(s.seed);
    RowSplit out;
    if (s.stratified) {
        std::vector<std::size_t> ev, ne;
        for (std::size_t r = 0; r < n; ++r) (d.target[r] ? ev : ne).push_back(r);
        detail::seeded_shuffle(ev, rng);
        detail::seeded_shuffle(ne, rng);
        auto train_ev = static_cast<std::size_t>(
            std::floor(static_cast<double>(n_train) * static_cast<double>(ev.size()) / static_cast<double>(n) + 0.5));
        train_ev = std::min(train_ev, ev.size());
        std::size_t train_ne = n_train - train_ev;
        if (train_ne > ne.size()) {
            train_ne = ne.size();
            train_ev = n_train - train_ne;
        }
        out.train.assign(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(train_ev));
        out.train.insert(out.train.end(), ne.begin(), ne.begin() + static_cast<std::ptrdiff_t>(train_ne));
        out.test.assign(ev.begin() + static_cast<std::ptrdiff_t>(train_ev), ev.end());
        out.test.insert(out.test.end(), ne.begin() + static_cast<std::ptrdiff_t>(train_ne), ne.end());
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        detail::seeded_shuffle(all, rng);
        out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());

    auto events_in = [&](const std::vector<std::size_t>& rows) {
        return std::count_if(rows.begin(), rows.end(), [&](std::size_t r) { return d.target[r] == 1; });
    };
    if (events_in(out.train) == 0) throw DataError("split: training part receives zero events");
    out.test_has_events = events_in(out.test) > 0;
    return out;
}

inline std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& s)
{
    auto rs = split_rows(d, s);
    return {d.subset(rs.train), d.subset(rs.test)};
}

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validate;
};

/// k folds by dealing the seeded permutation round-robin. Stratified mode
/// deals all events first, then continues with the non-events, so fold sizes
/// differ by at most one and per-fold event counts stay within one of
/// proportional.
inline std::vector<Fold> make_folds(const Dataset& d, const SplitSpec& s)
{
    const std::size_t k = s.fold_count;
    if (k < 2) throw ConfigError("fold_count must be at least 2");
    const std::size_t n = d.rows();
    if (n < k) throw DataError("fewer rows than folds");

    std::mt19937_64 rng(s.seed);
    std::vector<std::size_t> order;
    if (s.stratified) {
        std::vector<std::size_t> ev, ne;
        for (std::size_t r = 0; r < n; ++r) (d.target[r] ? ev : ne).push_back(r);
        if (ev.size() < k) throw DataError("stratified folds need at least as many events as folds");
        detail::seeded_shuffle(ev, rng);
        detail::seeded_shuffle(ne, rng);
        order = std::move(ev);
        order.insert(order.end(), ne.begin(), ne.end());
    } else {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        detail::seeded_shuffle(order, rng);
    }

    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % k;

    std::vector<Fold> folds(k);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t f = 0; f < k; ++f) (fold_of[r] == f ? folds[f].validate : folds[f].train).push_back(r);
    }
    return folds;
}

// ---------------------------------------------------------------------------

struct MissingnessSummary {
    std::vector<std::string> names;
    std::vector<std::size_t> missing;
    std::vector<std::vector<std::size_t>> co_missing;  // [i][j]: rows missing both i and j
    std::size_t rows = 0;
    std::size_t rows_with_any = 0;

    std::vector<std::string> missing_bearing() const
    {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < names.size(); ++i)
            if (missing[i] > 0) out.push_back(names[i]);
        return out;
    }
};

inline MissingnessSummary missingness_summary(const Dataset& d)
{
    const std::size_t p = d.columns.size();
    MissingnessSummary s;
    s.names = d.names;
    s.rows = d.rows();
    s.missing.assign(p, 0);
    s.co_missing.assign(p, std::vector<std::size_t>(p, 0));
    std::vector<std::size_t> holes;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        holes.clear();
        for (std::size_t c = 0; c < p; ++c)
            if (is_missing(d.columns[c][r])) holes.push_back(c);
        if (holes.empty()) continue;
        ++s.rows_with_any;
        for (auto a : holes) {
            ++s.missing[a];
            for (auto b : holes) ++s.co_missing[a][b];
        }
    }
    return s;
}

} // namespace imbal
