#pragma once

// Two-component Gaussian mixtures whose difficulty is set by the distance
// between the centers (placed in the plane of the first two coordinates) or by
// the dimension, plus a Monte-Carlo total variation distance estimate.

#include "tcal/core.hpp"
#include "tcal/dataset.hpp"
#include "tcal/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace tcal {

struct MixtureScenario {
    std::size_t d = 2;
    /// Distance between the two centers.
    double separation = 2.0;
    /// Shared diagonal covariance entry.
    double variance = 0.5;
    std::array<double, 2> weights{0.5, 0.5};
    std::size_t n = 100;
    seed_t seed = 0;

    void validate() const {
        if (d < 1) throw argument_error("scenario: d must be at least 1");
        if (!(variance > 0.0)) throw argument_error("scenario: variance must be positive");
        if (!(separation >= 0.0)) throw argument_error("scenario: separation must be non-negative");
        if (weights[0] < 0.0 || weights[1] < 0.0 || std::abs(weights[0] + weights[1] - 1.0) > 1e-12)
            throw argument_error("scenario: weights must be non-negative and sum to 1");
    }
};

struct SimulatedData {
    LabeledDataset data;
    GmmParams truth;
};

/// Centers at +/- (separation / 2) u for a seeded random unit vector u in the
/// first-two-coordinate plane. The direction is the first draw from the seed,
/// so scenarios sharing a seed share their center direction.
inline SimulatedData generate(const MixtureScenario& sc) {
    sc.validate();
    std::mt19937_64 rng(sc.seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double theta = angle(rng);
    const auto d = static_cast<Eigen::Index>(sc.d);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
    if (sc.d == 1) {
        u[0] = std::cos(theta) >= 0.0 ? 1.0 : -1.0;
    } else {
        u[0] = std::cos(theta);
        u[1] = std::sin(theta);
    }

    SimulatedData out;
    out.truth.d = sc.d;
    for (int j = 0; j < 2; ++j) {
        GmmComponent c;
        c.mean = (j == 0 ? 0.5 : -0.5) * sc.separation * u;
        c.covariance = sc.variance * Eigen::MatrixXd::Identity(d, d);
        c.weight = sc.weights[static_cast<std::size_t>(j)];
        out.truth.components.push_back(std::move(c));
    }

    std::bernoulli_distribution second(sc.weights[1]);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(sc.variance);
    auto& ds = out.data;
    ds.k = 2;
    ds.features.resize(static_cast<Eigen::Index>(sc.n), d);
    ds.labels.resize(sc.n);
    for (std::size_t i = 0; i < sc.n; ++i) {
        const label_t z = second(rng) ? 2 : 1;
        ds.labels[i] = z;
        const auto& mu = out.truth.components[static_cast<std::size_t>(z - 1)].mean;
        for (Eigen::Index c = 0; c < d; ++c) ds.features(static_cast<Eigen::Index>(i), c) = mu[c] + sd * normal(rng);
    }
    return out;
}

/// Scores under the generating parameters.
inline ScoreMatrix oracle_scores(const GmmParams& truth, const Eigen::MatrixXd& x) { return score(truth, x); }

struct TvdEstimate {
    /// Half the mean of |f/g - 1| under g, i.e. 1/2 * integral |f - g|.
    double estimate = 0.0;
    double std_error = 0.0;
    /// The un-halved mean of |f/g - 1|.
    double raw_expectation = 0.0;
    std::size_t n_samples = 0;
};

/// Importance-sampling estimate of the total variation distance between two
/// Gaussian densities, sampling from g. Weights of the components are ignored.
inline TvdEstimate estimate_tvd(const GmmComponent& f, const GmmComponent& g, std::size_t n_samples, seed_t seed) {
    if (n_samples < 1) throw argument_error("estimate_tvd: n_samples must be at least 1");
    if (f.mean.size() != g.mean.size()) throw argument_error("estimate_tvd: densities differ in dimension");
    const auto d = g.mean.size();

    auto density = [d](const GmmComponent& c) {
        GmmParams p;
        p.d = static_cast<std::size_t>(d);
        p.components.push_back({c.mean, c.covariance, 1.0});
        return GaussianMixtureClassifier(std::move(p));
    };
    const auto log_f = density(f);
    const auto log_g = density(g);
    const Eigen::LLT<Eigen::MatrixXd> g_chol(g.covariance);
    const Eigen::MatrixXd g_lower = g_chol.matrixL();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr std::size_t block = 4096;
    double mean = 0.0, m2 = 0.0;
    std::size_t seen = 0;
    Eigen::MatrixXd z;
    for (std::size_t done = 0; done < n_samples; done += block) {
        const auto rows = static_cast<Eigen::Index>(std::min(block, n_samples - done));
        z.resize(rows, d);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index c = 0; c < d; ++c) z(i, c) = normal(rng);
        const Eigen::MatrixXd x = (z * g_lower.transpose()).rowwise() + g.mean.transpose();
        const Eigen::VectorXd lr = log_f.score(x).values.col(0) - log_g.score(x).values.col(0);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double v = std::abs(std::expm1(lr[i]));
            ++seen;
            const double delta = v - mean;
            mean += delta / static_cast<double>(seen);
            m2 += delta * (v - mean);
        }
    }
    TvdEstimate out;
    out.n_samples = n_samples;
    out.raw_expectation = mean;
    out.estimate = 0.5 * mean;
    const double var = n_samples > 1 ? m2 / static_cast<double>(n_samples - 1) : 0.0;
    out.std_error = 0.5 * std::sqrt(var / static_cast<double>(n_samples));
    return out;
}

}  // namespace tcal
