#pragma once

// Labeled feature tables: CSV ingestion and echo, seeded splitting,
// class-balanced subsampling and marginal-correlation feature screening.

#include "tcal/core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tcal {

/// An n x d feature table with class labels in {0, ..., k}.
///
/// `labels` may be empty for unlabeled data (e.g. a test file scored by the
/// CLI); otherwise it has one entry per row. Label 0 marks an abstention and
/// never appears in data used for fitting or calibration.
struct LabeledDataset {
    Eigen::MatrixXd features;
    std::vector<label_t> labels;
    int k = 0;
    std::vector<std::string> feature_names;

    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
    [[nodiscard]] std::size_t dims() const noexcept { return static_cast<std::size_t>(features.cols()); }
    [[nodiscard]] bool labeled() const noexcept { return !labels.empty() || rows() == 0; }

    /// Row subset in the given order; labels, k and names carry over.
    [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> idx) const {
        LabeledDataset out;
        out.k = k;
        out.feature_names = feature_names;
        out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        if (!labels.empty()) out.labels.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] >= rows()) throw argument_error("row index out of range");
            out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(idx[r]));
            if (!labels.empty()) out.labels.push_back(labels[idx[r]]);
        }
        return out;
    }

    /// Column projection in the given order.
    [[nodiscard]] LabeledDataset project(std::span<const std::size_t> cols) const {
        LabeledDataset out;
        out.k = k;
        out.labels = labels;
        out.features.resize(features.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (cols[c] >= dims()) throw argument_error("column index out of range");
            out.features.col(static_cast<Eigen::Index>(c)) = features.col(static_cast<Eigen::Index>(cols[c]));
            if (!feature_names.empty()) out.feature_names.push_back(feature_names[cols[c]]);
        }
        return out;
    }

    /// Checks the type invariants; throws data_error on the first violation.
    void validate(bool require_nonempty = true) const {
        if (require_nonempty && (rows() == 0 || dims() == 0)) throw data_error("empty dataset");
        if (!labels.empty() && labels.size() != rows()) throw data_error("label count does not match row count");
        for (label_t l : labels)
            if (l < 0 || l > k) throw data_error("label " + std::to_string(l) + " outside 0.." + std::to_string(k));
        if (!features.allFinite()) throw data_error("non-finite feature value");
        if (!feature_names.empty() && feature_names.size() != dims())
            throw data_error("feature name count does not match column count");
    }
};

/// Sizes of the train / calibration / test partition and the shuffle seed.
struct SplitSpec {
    std::size_t n_train = 0;
    std::size_t n_calib = 0;
    std::size_t n_test = 0;
    seed_t seed = 0;
    // Keep class proportions approximately equal across the three parts.
    bool stratified = false;
};

/// How to read a CSV file into a LabeledDataset.
struct CsvSchema {
    /// Label column by index or by header name; monostate selects the last column.
    std::variant<std::monostate, std::size_t, std::string> label_column;
    /// Set to false for files without a label column.
    bool has_labels = true;
    /// Label text to class id. Must map injectively onto {1..k}. When empty,
    /// labels are read as integer class ids and k is the largest one seen.
    std::map<std::string, label_t> label_map;
    std::string missing_token = "?";
    bool drop_missing = false;
    /// nullopt: treat the first row as a header when any non-label cell fails to parse.
    std::optional<bool> header;
    /// Columns ignored entirely (e.g. a date column).
    std::vector<std::size_t> skip_columns;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline void check_label_map(const std::map<std::string, label_t>& m) {
    std::vector<label_t> ids;
    for (const auto& [text, id] : m) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] != static_cast<label_t>(i + 1))
            throw argument_error("label_map must map injectively onto 1..k");
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parses comma-separated text. Rows containing the missing token are dropped
/// when `schema.drop_missing` is set; otherwise they are an error.
inline LabeledDataset parse_csv(std::istream& in, const CsvSchema& schema) {
    if (!schema.label_map.empty()) detail::check_label_map(schema.label_map);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_fields(line);
        if (rows.empty()) width = fields.size();
        if (fields.size() != width)
            throw data_error("row " + std::to_string(rows.size() + 1) + ": expected " + std::to_string(width) +
                             " fields, found " + std::to_string(fields.size()));
        rows.emplace_back(fields.begin(), fields.end());
    }
    if (rows.empty()) throw data_error("empty dataset");

    auto skipped = [&](std::size_t c) {
        return std::find(schema.skip_columns.begin(), schema.skip_columns.end(), c) != schema.skip_columns.end();
    };

    bool header = false;
    if (schema.header) {
        header = *schema.header;
    } else {
        // A header row has at least one non-numeric, non-missing cell outside the label column.
        std::size_t guess_label = schema.has_labels ? width - 1 : width;
        if (const auto* idx = std::get_if<std::size_t>(&schema.label_column)) guess_label = *idx;
        if (std::holds_alternative<std::string>(schema.label_column)) header = true;
        for (std::size_t c = 0; c < width && !header; ++c) {
            if (c == guess_label || skipped(c)) continue;
            const auto& cell = rows.front()[c];
            if (cell != schema.missing_token && !detail::parse_double(cell)) header = true;
        }
    }

    std::optional<std::size_t> label_col;
    if (schema.has_labels) {
        if (std::holds_alternative<std::monostate>(schema.label_column)) {
            label_col = width - 1;
        } else if (const auto* idx = std::get_if<std::size_t>(&schema.label_column)) {
            label_col = *idx;
        } else {
            const auto& name = std::get<std::string>(schema.label_column);
            if (!header) throw argument_error("label column '" + name + "' given by name but file has no header");
            const auto& names = rows.front();
            const auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end()) throw data_error("label column '" + name + "' not found in header");
            label_col = static_cast<std::size_t>(it - names.begin());
        }
        if (*label_col >= width) throw argument_error("label column index out of range");
    }

    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < width; ++c)
        if (c != label_col && !skipped(c)) feature_cols.push_back(c);
    if (feature_cols.empty()) throw data_error("no feature columns");

    LabeledDataset out;
    if (header)
        for (std::size_t c : feature_cols) out.feature_names.push_back(rows.front()[c]);

    std::vector<double> values;
    std::vector<label_t> labels;
    const std::size_t first = header ? 1 : 0;
    for (std::size_t r = first; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::size_t file_row = r + 1;
        bool missing = false;
        for (std::size_t c : feature_cols)
            if (row[c] == schema.missing_token) missing = true;
        if (label_col && row[*label_col] == schema.missing_token) missing = true;
        if (missing) {
            if (schema.drop_missing) continue;
            throw data_error("row " + std::to_string(file_row) + ": missing value (set drop_missing to skip)");
        }
        for (std::size_t c : feature_cols) {
            const auto v = detail::parse_double(row[c]);
            if (!v || !std::isfinite(*v))
                throw data_error("row " + std::to_string(file_row) + ", column " + std::to_string(c + 1) +
                                 ": cannot parse '" + row[c] + "'");
            values.push_back(*v);
        }
        if (label_col) {
            const auto& text = row[*label_col];
            if (schema.label_map.empty()) {
                label_t id = 0;
                const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
                if (ec != std::errc{} || ptr != text.data() + text.size() || id < 0)
                    throw data_error("row " + std::to_string(file_row) + ": unknown label '" + text + "'");
                labels.push_back(id);
            } else {
                const auto it = schema.label_map.find(text);
                if (it == schema.label_map.end())
                    throw data_error("row " + std::to_string(file_row) + ": unknown label '" + text + "'");
                labels.push_back(it->second);
            }
        }
    }

    const auto n = static_cast<Eigen::Index>(values.size() / feature_cols.size());
    if (n == 0) throw data_error("empty dataset");
    out.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, static_cast<Eigen::Index>(feature_cols.size()));
    out.labels = std::move(labels);
    if (!schema.label_map.empty())
        out.k = static_cast<int>(schema.label_map.size());
    else if (!out.labels.empty())
        out.k = *std::max_element(out.labels.begin(), out.labels.end());
    out.validate();
    return out;
}

inline LabeledDataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    return parse_csv(in, schema);
}

/// Writes features then the integer label column, 17 significant digits.
inline void write_csv(std::ostream& out, const LabeledDataset& data, bool header = true) {
    const bool with_labels = !data.labels.empty();
    if (header) {
        for (std::size_t c = 0; c < data.dims(); ++c) {
            if (c) out << ',';
            out << (data.feature_names.empty() ? "x" + std::to_string(c + 1) : data.feature_names[c]);
        }
        if (with_labels) out << ",label";
        out << '\n';
    }
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t c = 0; c < data.dims(); ++c) {
            if (c) out << ',';
            out << detail::format_double(data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        }
        if (with_labels) out << ',' << data.labels[r];
        out << '\n';
    }
}

inline void save_csv(const std::string& path, const LabeledDataset& data, bool header = true) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path + "'");
    write_csv(out, data, header);
}

/// Train / calibration / test parts with the source row indices of each.
struct SplitResult {
    LabeledDataset train;
    LabeledDataset calib;
    LabeledDataset test;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> calib_rows;
    std::vector<std::size_t> test_rows;
};

/// Seeded uniform shuffle into disjoint parts of exactly the requested sizes.
inline SplitResult split(const LabeledDataset& data, const SplitSpec& spec) {
    const std::size_t n = data.rows();
    if (spec.n_train < 1) throw argument_error("split: n_train must be at least 1");
    if (spec.n_train + spec.n_calib + spec.n_test > n)
        throw argument_error("split: requested " + std::to_string(spec.n_train + spec.n_calib + spec.n_test) +
                             " rows but dataset has " + std::to_string(n));

    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    if (spec.stratified && !data.labels.empty()) {
        // Spread each shuffled class evenly over [0, 1) and sort by position, so
        // every prefix of `order` has close to the overall class proportions.
        std::map<label_t, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < n; ++i) by_class[data.labels[i]].push_back(i);
        struct Keyed {
            double pos;
            label_t cls;
            std::size_t row;
        };
        std::vector<Keyed> keyed;
        keyed.reserve(n);
        for (auto& [cls, rows] : by_class) {
            std::shuffle(rows.begin(), rows.end(), rng);
            const double m = static_cast<double>(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r)
                keyed.push_back({(static_cast<double>(r) + 0.5) / m, cls, rows[r]});
        }
        std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
            return a.pos != b.pos ? a.pos < b.pos : a.cls < b.cls;
        });
        for (std::size_t i = 0; i < n; ++i) order[i] = keyed[i].row;
    } else {
        std::shuffle(order.begin(), order.end(), rng);
    }

    SplitResult out;
    auto take = [&](std::size_t from, std::size_t count) {
        std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(from),
                                      order.begin() + static_cast<std::ptrdiff_t>(from + count));
        if (spec.stratified) std::shuffle(part.begin(), part.end(), rng);
        return part;
    };
    out.train_rows = take(0, spec.n_train);
    out.calib_rows = take(spec.n_train, spec.n_calib);
    out.test_rows = take(spec.n_train + spec.n_calib, spec.n_test);
    out.train = data.subset(out.train_rows);
    out.calib = data.subset(out.calib_rows);
    out.test = data.subset(out.test_rows);
    return out;
}

/// Every row of `take_all_class` plus `n_other` random rows of the other
/// classes, returned in shuffled order.
inline LabeledDataset subsample_balanced(const LabeledDataset& data, label_t take_all_class, std::size_t n_other,
                                         seed_t seed) {
    std::vector<std::size_t> keep;
    std::vector<std::size_t> other;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        (data.labels[i] == take_all_class ? keep : other).push_back(i);
    if (keep.empty()) throw argument_error("subsample_balanced: class " + std::to_string(take_all_class) + " absent");
    if (n_other > other.size())
        throw argument_error("subsample_balanced: requested " + std::to_string(n_other) + " rows of other classes but only " +
                             std::to_string(other.size()) + " available");

    std::mt19937_64 rng(seed);
    std::shuffle(other.begin(), other.end(), rng);
    keep.insert(keep.end(), other.begin(), other.begin() + static_cast<std::ptrdiff_t>(n_other));
    std::shuffle(keep.begin(), keep.end(), rng);
    return data.subset(keep);
}

/// Pearson correlation of every column with the {1,2} -> {0,1} label encoding.
/// Constant columns get 0.
inline std::vector<double> marginal_correlations(const LabeledDataset& train) {
    if (train.k != 2) throw data_error("feature screening needs binary labels (k = 2)");
    const std::size_t n = train.rows();
    if (train.labels.size() != n || n < 2) throw data_error("feature screening needs at least two labeled rows");
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const label_t l = train.labels[i];
        if (l != 1 && l != 2) throw data_error("feature screening needs labels in {1, 2}");
        y[static_cast<Eigen::Index>(i)] = l == 2 ? 1.0 : 0.0;
    }
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double sy = yc.norm();

    std::vector<double> corr(train.dims(), 0.0);
    for (std::size_t c = 0; c < train.dims(); ++c) {
        const Eigen::VectorXd x = train.features.col(static_cast<Eigen::Index>(c));
        const Eigen::VectorXd xc = x.array() - x.mean();
        const double sx = xc.norm();
        if (sx == 0.0 || sy == 0.0) continue;
        corr[c] = xc.dot(yc) / (sx * sy);
    }
    return corr;
}

struct ScreenResult {
    LabeledDataset train;
    std::vector<LabeledDataset> others;
    /// Selected column indices, ascending.
    std::vector<std::size_t> selected;
};

/// Keeps the `top_k` columns with the largest absolute marginal correlation to
/// the training labels (ties to the lower index) and projects every dataset
/// onto them in original column order.
inline ScreenResult screen_features(const LabeledDataset& train, std::span<const LabeledDataset> others,
                                    std::size_t top_k) {
    if (top_k > train.dims()) throw argument_error("screen_features: top_k exceeds column count");
    const auto corr = marginal_correlations(train);
    std::vector<std::size_t> order(corr.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(corr[a]) > std::abs(corr[b]); });
    ScreenResult out;
    out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k));
    std::sort(out.selected.begin(), out.selected.end());
    out.train = train.project(out.selected);
    for (const auto& o : others) {
        if (o.dims() != train.dims()) throw data_error("screen_features: companion dataset has a different column count");
        out.others.push_back(o.project(out.selected));
    }
    return out;
}

}  // namespace tcal
