#pragma once

// The thresholding calibration: a point is assigned its top-scoring class only
// when the gap between its best and second-best score reaches the threshold t.
// Sweeping t over a hold-out set traces misclassification proportion (MCP)
// against probability of assignment (PA), and multinomial classification loss
// (MCL) against average entropy (AE) of the temperature-1/t softmax. A target
// on MCP or MCL then picks t*, which is applied unchanged to new data.

#include "tcal/core.hpp"
#include "tcal/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace tcal {

/// Strictly increasing thresholds starting at >= 0 and ending at +inf.
class ThresholdGrid {
  public:
    ThresholdGrid() = default;
    explicit ThresholdGrid(std::vector<double> t) : t_(std::move(t)) {
        if (t_.size() < 2) throw argument_error("threshold grid needs at least 2 entries");
        if (!(t_.front() >= 0.0)) throw argument_error("threshold grid must start at a non-negative value");
        if (t_.back() != infinity) throw argument_error("threshold grid must end at +inf");
        for (std::size_t i = 1; i < t_.size(); ++i)
            if (!(t_[i] > t_[i - 1])) throw argument_error("threshold grid must be strictly increasing");
    }

    [[nodiscard]] const std::vector<double>& values() const noexcept { return t_; }
    [[nodiscard]] std::size_t size() const noexcept { return t_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return t_[i]; }

  private:
    std::vector<double> t_;
};

/// Metrics at one threshold.
struct CurveRecord {
    double t = 0.0;
    double mcp = 0.0;
    double pa = 0.0;
    std::size_t n_assigned = 0;
    double mcl = 0.0;
    double ae = 0.0;
    /// Nothing assigned; mcp is then 0 by convention.
    bool empty = false;
};

struct CalibrationCurve {
    std::vector<CurveRecord> records;
    std::size_t n = 0;
};

enum class TargetKind { mcp, mcl };

inline const char* to_string(TargetKind k) noexcept { return k == TargetKind::mcp ? "MCP" : "MCL"; }

struct ThresholdSelection {
    double t_star = infinity;
    TargetKind target_kind = TargetKind::mcp;
    double target_value = 0.0;
    CurveRecord achieved;
    bool feasible = false;
};

struct AssignmentResult {
    std::vector<label_t> labels;
    std::vector<double> gaps;
};

enum class EntropyFormula {
    /// -sum_j p_j log p_j, maximal (log k) at the uniform distribution.
    shannon,
    /// -sum_j log p_j, an unweighted variant kept for comparison runs.
    unweighted_log,
};

struct MetricOptions {
    EntropyFormula entropy = EntropyFormula::shannon;
};

struct TopTwo {
    label_t label = 0;
    double gap = 0.0;
};

/// Best class (lowest index on ties) and best minus second-best score over the
/// multiset of scores, so tied maxima give gap 0. A lone finite maximum over
/// -inf entries gives gap +inf.
template <class Row>
TopTwo top_two_gap(const Row& row) {
    const auto k = static_cast<std::size_t>(row.size());
    if (k < 2) throw argument_error("top_two_gap needs at least two classes");
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    if (!std::isfinite(row[best])) throw data_error("score row has no finite entry");
    double second = -infinity;
    for (std::size_t j = 0; j < k; ++j)
        if (j != best && row[j] > second) second = row[j];
    return {static_cast<label_t>(best + 1), second == -infinity ? infinity : row[best] - second};
}

inline TopTwo top_two_gap(std::span<const double> row) { return top_two_gap<std::span<const double>>(row); }

/// Whether a point with the given gap is assigned at threshold t. Nothing is
/// assigned at t = +inf, including points whose gap is itself +inf.
inline bool assigned_at(double gap, double t) noexcept { return t != infinity && gap >= t; }

/// {epsilon} + every distinct finite gap >= epsilon + {+inf}. Between two
/// consecutive entries the assigned set does not change.
inline ThresholdGrid build_grid(const ScoreMatrix& scores, double epsilon = 1e-12) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw argument_error("epsilon must be positive and finite");
    std::vector<double> t{epsilon};
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const double g = top_two_gap(scores.row(i)).gap;
        if (std::isfinite(g) && g >= epsilon) t.push_back(g);
    }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    t.push_back(infinity);
    return ThresholdGrid(std::move(t));
}

/// Grid over the gaps of several score matrices at once.
inline ThresholdGrid build_grid(std::span<const ScoreMatrix> pooled, double epsilon = 1e-12) {
    Eigen::Index rows = 0, k = 0;
    for (const auto& s : pooled) {
        rows += s.values.rows();
        k = std::max(k, s.values.cols());
    }
    ScoreMatrix all(Eigen::MatrixXd(rows, k));
    Eigen::Index at = 0;
    for (const auto& s : pooled) {
        if (s.values.cols() != k) throw data_error("pooled score matrices differ in class count");
        all.values.middleRows(at, s.values.rows()) = s.values;
        at += s.values.rows();
    }
    return build_grid(all, epsilon);
}

/// log of the softmax of s * scores with s = 1/t, evaluated after subtracting
/// the row maximum. t = +inf gives exactly log(1/k) everywhere.
template <class Row>
Eigen::VectorXd log_softmax_probs(const Row& row, double t) {
    if (!(t > 0.0)) throw argument_error("softmax threshold must be positive");
    const auto k = static_cast<Eigen::Index>(row.size());
    Eigen::VectorXd out(k);
    if (t == infinity) {
        out.setConstant(-std::log(static_cast<double>(k)));
        return out;
    }
    const double s = 1.0 / t;
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    const double top = row[best];
    if (!std::isfinite(top)) throw data_error("score row has no finite entry");
    double rest = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        out[j] = row[j] == -infinity ? -infinity : s * (row[j] - top);
        if (j != best) rest += std::exp(out[j]);
    }
    out.array() -= std::log1p(rest);
    return out;
}

template <class Row>
Eigen::VectorXd softmax_probs(const Row& row, double t) {
    return log_softmax_probs(row, t).array().exp().matrix();
}

inline Eigen::VectorXd softmax_probs(std::span<const double> row, double t) {
    return softmax_probs(Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())), t);
}

namespace detail {

inline void check_truth(std::span<const label_t> truth, std::size_t n, std::size_t k) {
    if (truth.size() != n)
        throw data_error("truth has " + std::to_string(truth.size()) + " labels for " + std::to_string(n) + " rows");
    for (label_t l : truth)
        if (l < 1 || static_cast<std::size_t>(l) > k)
            throw data_error("true label " + std::to_string(l) + " outside 1.." + std::to_string(k));
}

inline double entropy_term(double log_p, EntropyFormula f) {
    if (log_p == -infinity) return f == EntropyFormula::shannon ? 0.0 : infinity;
    return f == EntropyFormula::shannon ? -std::exp(log_p) * log_p : -log_p;
}

struct SoftmaxTotals {
    double mcl = 0.0;
    double ae = 0.0;
};

// MCL is summed over all rows; AE is averaged over all rows. Row order is fixed.
inline SoftmaxTotals softmax_totals(const ScoreMatrix& scores, std::span<const label_t> truth, double t,
                                    EntropyFormula f) {
    SoftmaxTotals out;
    const std::size_t n = scores.rows();
    if (n == 0) return out;
    double entropy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd lp = log_softmax_probs(scores.row(i), t);
        out.mcl -= lp[truth[i] - 1];
        double h = 0.0;
        for (Eigen::Index j = 0; j < lp.size(); ++j) h += entropy_term(lp[j], f);
        entropy += h;
    }
    out.ae = entropy / static_cast<double>(n);
    if (f == EntropyFormula::shannon) {
        // Every row entropy is at most log k; keep summation rounding from crossing it.
        const double log_k = std::log(static_cast<double>(scores.classes()));
        out.ae = t == infinity ? log_k : std::min(out.ae, log_k);
    }
    return out;
}

}  // namespace detail

/// -sum_i log p_{i, truth_i}. Rows of `probs` are probability vectors.
inline double mcl(const Eigen::MatrixXd& probs, std::span<const label_t> truth) {
    detail::check_truth(truth, static_cast<std::size_t>(probs.rows()), static_cast<std::size_t>(probs.cols()));
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) total -= std::log(probs(i, truth[static_cast<std::size_t>(i)] - 1));
    return total;
}

/// Mean per-row entropy with 0 log 0 = 0.
inline double average_entropy(const Eigen::MatrixXd& probs, EntropyFormula f = EntropyFormula::shannon) {
    if (probs.rows() == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index j = 0; j < probs.cols(); ++j) {
            const double p = probs(i, j);
            total += detail::entropy_term(p > 0.0 ? std::log(p) : -infinity, f);
        }
    return total / static_cast<double>(probs.rows());
}

/// All four metrics at a single threshold, computed row by row.
inline CurveRecord evaluate_at(const ScoreMatrix& scores, std::span<const label_t> truth, double t,
                               const MetricOptions& opt = {}) {
    if (!(t >= 0.0)) throw argument_error("threshold must be non-negative");
    detail::check_truth(truth, scores.rows(), scores.classes());
    CurveRecord r;
    r.t = t;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto top = top_two_gap(scores.row(i));
        if (!assigned_at(top.gap, t)) continue;
        ++r.n_assigned;
        if (top.label != truth[i]) ++wrong;
    }
    r.empty = r.n_assigned == 0;
    r.mcp = r.empty ? 0.0 : static_cast<double>(wrong) / static_cast<double>(r.n_assigned);
    r.pa = scores.rows() == 0 ? 0.0 : static_cast<double>(r.n_assigned) / static_cast<double>(scores.rows());
    if (t > 0.0) {
        const auto soft = detail::softmax_totals(scores, truth, t, opt.entropy);
        r.mcl = soft.mcl;
        r.ae = soft.ae;
    } else {
        r.mcl = r.ae = std::nan("");
    }
    return r;
}

/// Metric curve over the whole grid. Rows are sorted by gap once and admitted
/// from the strictest threshold down, so MCP/PA cost O(n log n + |T|); the
/// softmax metrics are recomputed per threshold in O(n k).
inline CalibrationCurve sweep(const ScoreMatrix& scores, std::span<const label_t> truth, const ThresholdGrid& grid,
                              const MetricOptions& opt = {}) {
    scores.validate();
    detail::check_truth(truth, scores.rows(), scores.classes());
    if (grid.size() < 2 || grid[0] <= 0.0) throw argument_error("sweep needs a grid of positive thresholds");

    const std::size_t n = scores.rows();
    std::vector<double> gap(n);
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto top = top_two_gap(scores.row(i));
        gap[i] = top.gap;
        correct[i] = top.label == truth[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gap[a] > gap[b]; });

    CalibrationCurve curve;
    curve.n = n;
    curve.records.resize(grid.size());
    std::size_t admitted = 0, wrong = 0;
    for (std::size_t m = grid.size(); m-- > 0;) {
        const double t = grid[m];
        while (admitted < n && assigned_at(gap[order[admitted]], t)) {
            if (!correct[order[admitted]]) ++wrong;
            ++admitted;
        }
        auto& r = curve.records[m];
        r.t = t;
        r.n_assigned = admitted;
        r.empty = admitted == 0;
        r.mcp = r.empty ? 0.0 : static_cast<double>(wrong) / static_cast<double>(admitted);
        r.pa = n == 0 ? 0.0 : static_cast<double>(admitted) / static_cast<double>(n);
        const auto soft = detail::softmax_totals(scores, truth, t, opt.entropy);
        r.mcl = soft.mcl;
        r.ae = soft.ae;
    }
    return curve;
}

inline double metric_of(const CurveRecord& r, TargetKind kind) noexcept { return kind == TargetKind::mcp ? r.mcp : r.mcl; }

/// Among records whose metric is <= target, the one with the largest PA; ties
/// go to the larger metric, then to the smaller t. With no feasible record,
/// t* = +inf and `feasible` is false.
inline ThresholdSelection select_threshold(const CalibrationCurve& curve, TargetKind kind, double target) {
    if (curve.records.empty()) throw argument_error("select_threshold: empty curve");
    if (std::isnan(target)) throw argument_error("select_threshold: target is NaN");
    ThresholdSelection sel;
    sel.target_kind = kind;
    sel.target_value = target;
    const CurveRecord* best = nullptr;
    for (const auto& r : curve.records) {
        const double m = metric_of(r, kind);
        if (!(m <= target)) continue;
        if (best == nullptr || r.pa > best->pa ||
            (r.pa == best->pa && (m > metric_of(*best, kind) || (m == metric_of(*best, kind) && r.t < best->t))))
            best = &r;
    }
    if (best == nullptr) {
        sel.feasible = false;
        sel.t_star = infinity;
        sel.achieved = curve.records.back();
        return sel;
    }
    sel.feasible = true;
    sel.t_star = best->t;
    sel.achieved = *best;
    return sel;
}

/// Argmax label where the gap reaches t*, otherwise 0.
inline AssignmentResult apply_threshold(const ScoreMatrix& scores, double t_star) {
    if (!(t_star >= 0.0)) throw argument_error("t_star must be non-negative");
    AssignmentResult out;
    out.labels.reserve(scores.rows());
    out.gaps.reserve(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto top = top_two_gap(scores.row(i));
        out.gaps.push_back(top.gap);
        out.labels.push_back(assigned_at(top.gap, t_star) ? top.label : abstain_label);
    }
    return out;
}

namespace detail {

inline std::string format_metric(double v) {
    if (v == infinity) return "inf";
    if (v == -infinity) return "-inf";
    if (std::isnan(v)) return "nan";
    // Shortest text that parses back to the same double.
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// CSV with header `t,mcp,pa,n_assigned,mcl,ae`; infinite values print as `inf`.
inline void write_curve_csv(std::ostream& out, const CalibrationCurve& curve) {
    out << "t,mcp,pa,n_assigned,mcl,ae\n";
    for (const auto& r : curve.records)
        out << detail::format_metric(r.t) << ',' << detail::format_metric(r.mcp) << ',' << detail::format_metric(r.pa)
            << ',' << r.n_assigned << ',' << detail::format_metric(r.mcl) << ',' << detail::format_metric(r.ae) << '\n';
}

}  // namespace tcal
