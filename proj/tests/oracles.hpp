#pragma once

// Brute-force reference computations for the tests. Nothing here calls into
// the calibration code paths it is used to check.

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double inf = std::numeric_limits<double>::infinity();

struct RowFacts {
    int label;  // 1-based argmax, lowest index on ties
    double gap;
};

// Sort a copy of the row to find the two largest values.
inline RowFacts row_facts(const Eigen::RowVectorXd& row) {
    std::vector<double> v(row.data(), row.data() + row.size());
    int label = 1;
    for (int j = 0; j < static_cast<int>(v.size()); ++j)
        if (v[static_cast<std::size_t>(j)] > v[static_cast<std::size_t>(label - 1)]) label = j + 1;
    std::sort(v.begin(), v.end(), std::greater<>());
    const double gap = v[1] == -inf ? inf : v[0] - v[1];
    return {label, gap};
}

inline bool in_set(double gap, double t) { return std::isfinite(t) && gap >= t; }

struct Metrics {
    std::vector<bool> member;
    std::size_t size = 0;
    double mcp = 0.0;
    double pa = 0.0;
    double mcl = 0.0;
    double ae = 0.0;
};

// Softmax at temperature t in long double, max subtracted, plain log of the sum.
inline std::vector<long double> log_probs(const Eigen::RowVectorXd& row, double t) {
    const auto k = static_cast<std::size_t>(row.size());
    std::vector<long double> lp(k);
    if (t == inf) {
        std::fill(lp.begin(), lp.end(), -std::log(static_cast<long double>(k)));
        return lp;
    }
    const long double s = 1.0L / static_cast<long double>(t);
    long double top = -std::numeric_limits<long double>::infinity();
    for (std::size_t j = 0; j < k; ++j) top = std::max<long double>(top, row[static_cast<Eigen::Index>(j)]);
    long double sum = 0.0L;
    for (std::size_t j = 0; j < k; ++j) {
        const long double l = row[static_cast<Eigen::Index>(j)];
        lp[j] = l == -std::numeric_limits<long double>::infinity() ? l : s * (l - top);
        sum += std::exp(lp[j]);
    }
    const long double norm = std::log(sum);
    for (auto& v : lp) v -= norm;
    return lp;
}

// Recomputes C, MCP, PA, MCL and AE from scratch at threshold t.
inline Metrics at_threshold(const Eigen::MatrixXd& scores, const std::vector<int>& truth, double t) {
    Metrics m;
    const auto n = static_cast<std::size_t>(scores.rows());
    std::size_t wrong = 0;
    long double mcl = 0.0L, ent = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::RowVectorXd row = scores.row(static_cast<Eigen::Index>(i));
        const auto f = row_facts(row);
        const bool in = in_set(f.gap, t);
        m.member.push_back(in);
        if (in) {
            ++m.size;
            if (f.label != truth[i]) ++wrong;
        }
        const auto lp = log_probs(row, t);
        mcl -= lp[static_cast<std::size_t>(truth[i] - 1)];
        for (long double v : lp)
            if (v != -std::numeric_limits<long double>::infinity()) ent -= std::exp(v) * v;
    }
    m.mcp = m.size == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(m.size);
    m.pa = n == 0 ? 0.0 : static_cast<double>(m.size) / static_cast<double>(n);
    m.mcl = static_cast<double>(mcl);
    m.ae = n == 0 ? 0.0 : static_cast<double>(ent / static_cast<long double>(n));
    return m;
}

// Gaussian log-density via explicit inverse and determinant.
inline double log_gaussian_direct(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
    const double d = static_cast<double>(x.size());
    const Eigen::VectorXd diff = x - mu;
    const double quad = diff.dot(cov.inverse() * diff);
    return -0.5 * d * std::log(2.0 * M_PI) - 0.5 * std::log(cov.determinant()) - 0.5 * quad;
}

// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline bool close(double a, double b, double tol) {
    if (a == b) return true;
    if (std::isnan(a) || std::isnan(b)) return false;
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

// Random score matrix with occasional tied maxima and -inf entries.
inline Eigen::MatrixXd random_scores(std::mt19937_64& rng, std::size_t n, std::size_t k, bool allow_degenerate = true) {
    std::normal_distribution<double> normal(0.0, 5.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = normal(rng);
        if (!allow_degenerate) continue;
        const double roll = u(rng);
        if (roll < 0.05) {
            s(i, 1) = s(i, 0);  // tie
            for (Eigen::Index j = 2; j < s.cols(); ++j) s(i, j) = std::min(s(i, j), s(i, 0) - 1.0);
        } else if (roll < 0.10) {
            s(i, static_cast<Eigen::Index>(k - 1)) = -inf;
        } else if (roll < 0.12) {
            // lone finite entry
            for (Eigen::Index j = 1; j < s.cols(); ++j) s(i, j) = -inf;
        }
    }
    return s;
}

inline std::vector<int> random_truth(std::mt19937_64& rng, std::size_t n, std::size_t k) {
    std::uniform_int_distribution<int> pick(1, static_cast<int>(k));
    std::vector<int> t(n);
    for (auto& v : t) v = pick(rng);
    return t;
}

}  // namespace oracle
