#pragma once

// Supervised Gaussian mixture estimation and per-class log-likelihood scoring.
//
// The calibration layer only needs a ScoreMatrix, so any type satisfying the
// `Scorer` concept can stand in for the built-in Gaussian classifier.

#include "tcal/core.hpp"
#include "tcal/dataset.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <numbers>
#include <string>
#include <vector>

namespace tcal {

/// n x k table of per-class scores; higher means more confident. Entries may be
/// -inf, but every row needs at least one finite entry.
struct ScoreMatrix {
    Eigen::MatrixXd values;

    ScoreMatrix() = default;
    explicit ScoreMatrix(Eigen::MatrixXd v) : values(std::move(v)) {}

    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
    [[nodiscard]] std::size_t classes() const noexcept { return static_cast<std::size_t>(values.cols()); }
    [[nodiscard]] auto row(std::size_t i) const { return values.row(static_cast<Eigen::Index>(i)); }

    void validate() const {
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            bool finite = false;
            for (Eigen::Index j = 0; j < values.cols(); ++j) {
                const double v = values(i, j);
                if (std::isnan(v) || v == infinity)
                    throw data_error("score row " + std::to_string(i) + " contains NaN or +inf");
                finite = finite || std::isfinite(v);
            }
            if (!finite) throw data_error("score row " + std::to_string(i) + " has no finite entry");
        }
    }
};

/// Anything that turns a feature matrix into a ScoreMatrix.
template <class T>
concept Scorer = requires(const T& s, const Eigen::MatrixXd& x) {
    { s.score(x) } -> std::convertible_to<ScoreMatrix>;
};

struct GmmComponent {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    double weight = 0.0;
};

/// Mixture parameters for k components in d dimensions.
struct GmmParams {
    std::vector<GmmComponent> components;
    std::size_t d = 0;

    [[nodiscard]] std::size_t k() const noexcept { return components.size(); }

    void validate() const {
        if (components.empty()) throw argument_error("mixture has no components");
        double total = 0.0;
        for (std::size_t j = 0; j < components.size(); ++j) {
            const auto& c = components[j];
            const std::string tag = "component " + std::to_string(j + 1);
            if (static_cast<std::size_t>(c.mean.size()) != d || static_cast<std::size_t>(c.covariance.rows()) != d ||
                static_cast<std::size_t>(c.covariance.cols()) != d)
                throw argument_error(tag + ": shape does not match d = " + std::to_string(d));
            if (!(c.weight >= 0.0)) throw argument_error(tag + ": negative weight");
            if (!c.covariance.isApprox(c.covariance.transpose(), 1e-12))
                throw argument_error(tag + ": covariance is not symmetric");
            if (Eigen::LLT<Eigen::MatrixXd>(c.covariance).info() != Eigen::Success)
                throw argument_error(tag + ": covariance is not positive-definite");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-12) throw argument_error("mixture weights do not sum to 1");
    }
};

struct FitOptions {
    /// Relative ridge: Sigma + ridge * trace(Sigma) / d * I (absolute `ridge` when the trace is 0).
    double ridge = 1e-6;
    /// Keep only the diagonal of each sample covariance.
    bool diagonal = false;
    /// Subtract the class mean before forming Y^T Y. Turning this off reproduces
    /// the uncentered second-moment estimate.
    bool centered = true;
};

/// Class-conditional sample means, covariances (denominator n_j - 1) and
/// weights n_j / n from labeled training rows.
inline GmmParams fit_gmm(const LabeledDataset& train, const FitOptions& opt = {}) {
    if (train.rows() == 0 || train.labels.size() != train.rows()) throw fit_error("training data must be labeled");
    if (train.k < 1) throw fit_error("training data has no classes");
    if (opt.ridge < 0.0) throw argument_error("ridge must be non-negative");

    const std::size_t d = train.dims();
    const auto k = static_cast<std::size_t>(train.k);
    std::vector<std::vector<Eigen::Index>> members(k);
    for (std::size_t i = 0; i < train.rows(); ++i) {
        const label_t l = train.labels[i];
        if (l < 1 || l > train.k) throw fit_error("training label " + std::to_string(l) + " outside 1..k");
        members[static_cast<std::size_t>(l - 1)].push_back(static_cast<Eigen::Index>(i));
    }

    GmmParams out;
    out.d = d;
    const double n = static_cast<double>(train.rows());
    for (std::size_t j = 0; j < k; ++j) {
        const auto& rows = members[j];
        if (rows.size() < 2)
            throw fit_error("class " + std::to_string(j + 1) + " has " + std::to_string(rows.size()) +
                            " training rows; at least 2 are needed");
        Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
        for (std::size_t r = 0; r < rows.size(); ++r) y.row(static_cast<Eigen::Index>(r)) = train.features.row(rows[r]);

        GmmComponent c;
        c.mean = y.colwise().mean().transpose();
        if (opt.centered) y.rowwise() -= c.mean.transpose();
        c.covariance = (y.transpose() * y) / static_cast<double>(rows.size() - 1);
        if (opt.diagonal) c.covariance = Eigen::MatrixXd(c.covariance.diagonal().asDiagonal());
        const double trace = c.covariance.trace();
        const double ridge_eff = trace > 0.0 ? opt.ridge * trace / static_cast<double>(d) : opt.ridge;
        c.covariance.diagonal().array() += ridge_eff;
        if (Eigen::LLT<Eigen::MatrixXd>(c.covariance).info() != Eigen::Success)
            throw fit_error("class " + std::to_string(j + 1) + ": covariance is not positive-definite after ridge " +
                            std::to_string(ridge_eff));
        c.weight = static_cast<double>(rows.size()) / n;
        out.components.push_back(std::move(c));
    }
    return out;
}

/// Maximum-likelihood classifier over a fitted (or true) Gaussian mixture.
/// Factorizes every covariance once; `score` is then const and thread-safe.
class GaussianMixtureClassifier {
  public:
    explicit GaussianMixtureClassifier(GmmParams params) : params_(std::move(params)) {
        params_.validate();
        for (const auto& c : params_.components) {
            Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
            const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
            const double dd = static_cast<double>(params_.d);
            const double offset = c.weight > 0.0
                                      ? std::log(c.weight) - 0.5 * dd * std::log(2.0 * std::numbers::pi) - 0.5 * log_det
                                      : -infinity;
            factors_.push_back({std::move(llt), offset});
        }
    }

    [[nodiscard]] const GmmParams& params() const noexcept { return params_; }

    /// log pi_j + log N(x_i | mu_j, Sigma_j) for every row i and component j.
    [[nodiscard]] ScoreMatrix score(const Eigen::MatrixXd& x) const {
        if (static_cast<std::size_t>(x.cols()) != params_.d)
            throw data_error("score: feature matrix has " + std::to_string(x.cols()) + " columns, model expects " +
                             std::to_string(params_.d));
        Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(params_.k()));
        for (std::size_t j = 0; j < params_.k(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            const auto& f = factors_[j];
            if (f.offset == -infinity) {
                out.col(col).setConstant(-infinity);
                continue;
            }
            Eigen::MatrixXd centered = (x.rowwise() - params_.components[j].mean.transpose()).transpose();
            f.llt.matrixL().solveInPlace(centered);
            out.col(col) = (f.offset - 0.5 * centered.colwise().squaredNorm().array()).transpose();
        }
        return ScoreMatrix(std::move(out));
    }

  private:
    struct Factor {
        Eigen::LLT<Eigen::MatrixXd> llt;
        double offset;
    };
    GmmParams params_;
    std::vector<Factor> factors_;
};

static_assert(Scorer<GaussianMixtureClassifier>);

inline ScoreMatrix score(const GmmParams& params, const Eigen::MatrixXd& x) {
    return GaussianMixtureClassifier(params).score(x);
}

struct MapLabels {
    std::vector<label_t> labels;
    /// True where the top score is shared by more than one class.
    std::vector<bool> tied;
};

/// Per-row argmax (classes numbered from 1), ties to the lowest class.
inline MapLabels classify_map(const ScoreMatrix& scores) {
    MapLabels out;
    out.labels.reserve(scores.rows());
    out.tied.reserve(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        Eigen::Index best = 0;
        bool tie = false;
        for (Eigen::Index j = 1; j < row.size(); ++j) {
            if (row[j] > row[best]) {
                best = j;
                tie = false;
            } else if (row[j] == row[best]) {
                tie = true;
            }
        }
        out.labels.push_back(static_cast<label_t>(best + 1));
        out.tied.push_back(tie);
    }
    return out;
}

}  // namespace tcal
