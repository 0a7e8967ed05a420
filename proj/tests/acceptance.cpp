// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: tcal_acceptance [--criterion N] [--data path/to/ionosphere.data]

#include "oracles.hpp"

#include <tcal/tcal.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace tcal;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Every selection made anywhere in the run, for the guarantee check.
struct SelectionLog {
    std::size_t feasible = 0;
    std::size_t infeasible = 0;
    std::size_t violations = 0;

    void add(const ThresholdSelection& s) {
        if (s.feasible) {
            ++feasible;
            if (!(metric_of(s.achieved, s.target_kind) <= s.target_value)) ++violations;
        } else {
            ++infeasible;
            if (s.t_star != infinity) ++violations;
        }
    }
    void add(const ArmRecord& trial) {
        if (trial.feasible_fraction == 1.0) {
            ++feasible;
            if (!(trial.holdout_metric <= trial.target)) ++violations;
        } else {
            ++infeasible;
            if (trial.t_star != infinity) ++violations;
        }
    }
    void add(const ExperimentReport& rep) {
        for (const auto& t : rep.trials) add(t);
    }
};

SelectionLog selections;

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome ionosphere_mcp(const std::string& path) {
    const auto t0 = std::chrono::steady_clock::now();
    StudyOptions o;
    o.n_resamples = 100;
    const auto rep = run_calibration_pipeline(ionosphere_config(path, TargetKind::mcp, o));
    const double secs = seconds_since(t0);
    selections.add(rep);
    std::size_t ok = 0;
    for (const auto& t : rep.trials) ok += t.test_metric <= 0.15;
    const double frac = static_cast<double>(ok) / static_cast<double>(rep.trials.size());
    const double pa = rep.arms[0].test_pa_or_ae;
    Outcome out;
    out.pass = rep.trials.size() == 100 && frac >= 0.8 && pa >= 0.6 && pa <= 0.95 && secs < 30.0;
    out.detail = "test MCP <= .15 in " + fmt("%.0f%%", 100 * frac) + " of splits, mean test MCP " +
                 fmt("%.3f", rep.arms[0].test_metric) + ", mean test PA " + fmt("%.3f", pa) + ", " +
                 fmt("%.1f s", secs);
    return out;
}

Outcome ionosphere_mcl(const std::string& path) {
    StudyOptions o;
    o.n_resamples = 100;
    const auto rep = run_calibration_pipeline(ionosphere_config(path, TargetKind::mcl, o));
    selections.add(rep);
    std::size_t ok = 0;
    bool ae_ok = true;
    const double log2 = std::log(2.0);
    for (const auto& t : rep.trials) {
        ok += t.test_metric <= 300.0;
        for (double ae : {t.holdout_pa_or_ae, t.test_pa_or_ae}) ae_ok = ae_ok && ae >= 0.0 && ae <= log2;
    }
    for (const auto& c : rep.raw_curves)
        for (const auto& r : c.curve.records) ae_ok = ae_ok && r.ae >= 0.0 && r.ae <= log2;
    const double frac = static_cast<double>(ok) / static_cast<double>(rep.trials.size());
    Outcome out;
    out.pass = rep.trials.size() == 100 && frac >= 0.8 && ae_ok;
    out.detail = "test MCL <= 300 in " + fmt("%.0f%%", 100 * frac) + " of splits, mean test MCL " +
                 fmt("%.1f", rep.arms[0].test_metric) + ", mean test AE " + fmt("%.3f", rep.arms[0].test_pa_or_ae) +
                 (ae_ok ? ", AE within [0, log 2]" : ", AE OUT OF RANGE");
    return out;
}

Outcome naive_direction() {
    const auto t0 = std::chrono::steady_clock::now();
    StudyOptions o;
    o.n_resamples = 50;
    const auto rep = compare_naive(naive_comparison_config(o));
    const double secs = seconds_since(t0);
    selections.add(rep);
    const auto& thr = rep.arms[0];
    const auto& naive = rep.arms[1];
    Outcome out;
    out.pass = thr.n_resamples == 50 && thr.test_metric <= 0.25 && naive.test_metric >= thr.test_metric + 0.05 &&
               naive.test_pa_or_ae >= 0.95 && secs < 60.0;
    out.detail = "thresholding MCP " + fmt("%.3f", thr.test_metric) + " PA " + fmt("%.3f", thr.test_pa_or_ae) +
                 "; naive MCP " + fmt("%.3f", naive.test_metric) + " PA " + fmt("%.3f", naive.test_pa_or_ae) + ", " +
                 fmt("%.1f s", secs);
    return out;
}

Outcome overfitting_signature() {
    std::size_t hits = 0;
    double train_sum = 0.0, hold_sum = 0.0;
    constexpr std::size_t seeds = 20;
    for (seed_t s = 0; s < seeds; ++s) {
        StudyOptions o;
        o.seed = s;
        o.n_resamples = 1;
        o.oracle = false;
        const auto rep = run_calibration_pipeline(dimension_config(dimension_arms[2], o, 2));
        selections.add(rep);
        const auto& t = rep.trials[0];
        hits += t.train_metric_laxest <= 0.02 && t.holdout_metric_laxest >= 0.15;
        train_sum += t.train_metric_laxest;
        hold_sum += t.holdout_metric_laxest;
    }
    Outcome out;
    out.pass = hits * 10 >= seeds * 9;
    out.detail = std::to_string(hits) + "/20 seeds; mean laxest-threshold MCP train " +
                 fmt("%.3f", train_sum / seeds) + ", hold-out " + fmt("%.3f", hold_sum / seeds);
    return out;
}

Outcome sweep_equivalence() {
    std::mt19937_64 rng(5);
    std::size_t exact_fail = 0, tol_fail = 0;
    double worst = 0.0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 1 + rng() % 50;
        const std::size_t k = 2 + rng() % 3;
        const Eigen::MatrixXd s = oracle::random_scores(rng, n, k);
        const auto truth = oracle::random_truth(rng, n, k);
        const ScoreMatrix scores(s);
        const auto grid = build_grid(scores);
        const auto curve = sweep(scores, truth, grid);
        for (const auto& rec : curve.records) {
            const auto m = oracle::at_threshold(s, truth, rec.t);
            const auto labels = apply_threshold(scores, rec.t).labels;
            for (std::size_t i = 0; i < n; ++i) exact_fail += (labels[i] != 0) != m.member[i];
            exact_fail += rec.n_assigned != m.size || rec.mcp != m.mcp || rec.pa != m.pa;
            for (auto [a, b] : {std::pair{rec.mcl, m.mcl}, std::pair{rec.ae, m.ae}}) {
                // Equal infinities (a true class scored -inf) count as agreement.
                const double rel = a == b ? 0.0 : std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
                worst = std::max(worst, rel);
                tol_fail += !(rel <= 1e-10);
            }
        }
        selections.add(select_threshold(curve, TargetKind::mcp, std::uniform_real_distribution<double>(0, 0.6)(rng)));
        selections.add(select_threshold(curve, TargetKind::mcl, std::uniform_real_distribution<double>(0, 40)(rng)));
    }
    Outcome out;
    out.pass = exact_fail == 0 && tol_fail == 0;
    out.detail = "200 instances, " + std::to_string(exact_fail) + " exact mismatches, worst MCL/AE relative error " +
                 fmt("%.2e", worst);
    return out;
}

Outcome monotonicity() {
    std::mt19937_64 rng(6);
    std::size_t pa_fail = 0, nest_fail = 0, ae_fail = 0, top_fail = 0;
    std::vector<double> ts;
    for (int i = 0; i < 19; ++i) ts.push_back(std::pow(10.0, -3.0 + 6.0 * i / 18.0));
    ts.push_back(infinity);
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t n = 1 + rng() % 60;
        const std::size_t k = 2 + rng() % 4;
        const ScoreMatrix scores(oracle::random_scores(rng, n, k));
        const auto truth = oracle::random_truth(rng, n, k);
        const auto grid = build_grid(scores);
        const auto curve = sweep(scores, truth, grid);
        std::vector<label_t> previous;
        for (std::size_t m = 0; m < curve.records.size(); ++m) {
            if (m > 0 && curve.records[m].pa > curve.records[m - 1].pa) ++pa_fail;
            auto labels = apply_threshold(scores, curve.records[m].t).labels;
            if (m > 0)
                for (std::size_t i = 0; i < n; ++i) nest_fail += labels[i] != 0 && previous[i] == 0;
            previous = std::move(labels);
        }
        const auto at = sweep(scores, truth, ThresholdGrid(ts));
        for (std::size_t m = 1; m < at.records.size(); ++m)
            ae_fail += at.records[m].ae < at.records[m - 1].ae;
        top_fail += !(std::abs(at.records.back().ae - std::log(static_cast<double>(k))) <= 1e-12);
    }
    Outcome out;
    out.pass = pa_fail + nest_fail + ae_fail + top_fail == 0;
    out.detail = "1000 matrices; violations: PA " + std::to_string(pa_fail) + ", nesting " + std::to_string(nest_fail) +
                 ", AE order " + std::to_string(ae_fail) + ", AE at inf " + std::to_string(top_fail);
    return out;
}

Outcome softmax() {
    Outcome out;
    const std::vector<double> row{0.0, -1.0};
    const auto p = softmax_probs(std::span<const double>(row), 1.0);
    const bool example = std::abs(p[0] - 0.7311) <= 1e-4 && std::abs(p[1] - 0.2689) <= 1e-4;

    std::mt19937_64 rng(7);
    std::size_t shift_fail = 0, sum_fail = 0, nonfinite = 0;
    double worst_sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t k = 2 + rng() % 6;
        const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2.0, 8.0)(rng));
        std::uniform_real_distribution<double> u(-scale, scale);
        std::vector<double> r(k);
        for (auto& v : r) v = u(rng);
        const double t = std::pow(10.0, std::uniform_real_distribution<double>(-6.0, 6.0)(rng));
        const auto q = softmax_probs(std::span<const double>(r), t);
        double sum = 0.0;
        for (double v : q) {
            nonfinite += !std::isfinite(v);
            sum += v;
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        sum_fail += !(std::abs(sum - 1.0) <= 1e-12);

        std::vector<double> small(k), shifted(k);
        std::uniform_real_distribution<double> m(-50.0, 50.0);
        const double c = std::uniform_real_distribution<double>(-100.0, 100.0)(rng);
        for (std::size_t j = 0; j < k; ++j) {
            small[j] = m(rng);
            shifted[j] = small[j] + c;
        }
        const double ts = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
        const auto a = softmax_probs(std::span<const double>(small), ts);
        const auto b = softmax_probs(std::span<const double>(shifted), ts);
        for (std::size_t j = 0; j < k; ++j) shift_fail += !(std::abs(a[j] - b[j]) <= 1e-12);
    }
    out.pass = example && shift_fail == 0 && sum_fail == 0 && nonfinite == 0;
    out.detail = "(0,-1) at t=1 -> (" + fmt("%.4f", p[0]) + ", " + fmt("%.4f", p[1]) + "); 10^4 rows: worst |sum-1| " +
                 fmt("%.1e", worst_sum) + ", shift violations " + std::to_string(shift_fail) + ", non-finite " +
                 std::to_string(nonfinite);
    return out;
}

Outcome gmm_recovery() {
    std::size_t good = 0;
    for (seed_t s = 0; s < 100; ++s) {
        std::mt19937_64 rng(substream(8, s));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::bernoulli_distribution coin(0.5);
        LabeledDataset ds;
        ds.k = 2;
        ds.features.resize(10000, 5);
        for (Eigen::Index i = 0; i < 10000; ++i) {
            const bool second = coin(rng);
            ds.labels.push_back(second ? 2 : 1);
            for (Eigen::Index c = 0; c < 5; ++c) ds.features(i, c) = normal(rng) + (c == 0 && second ? 3.0 : 0.0);
        }
        const auto p = fit_gmm(ds);
        Eigen::VectorXd mu2 = Eigen::VectorXd::Zero(5);
        mu2[0] = 3.0;
        good += p.components[0].mean.cwiseAbs().maxCoeff() <= 0.1 &&
                (p.components[1].mean - mu2).cwiseAbs().maxCoeff() <= 0.1 &&
                std::abs(p.components[0].weight - 0.5) <= 0.02 && std::abs(p.components[1].weight - 0.5) <= 0.02;
    }

    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.5);
    std::size_t formula_fail = 0;
    for (int inst = 0; inst < 300; ++inst) {
        const Eigen::Index d = 1 + inst % 3;
        GmmParams p;
        p.d = static_cast<std::size_t>(d);
        for (int j = 0; j < 2; ++j) {
            Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return normal(rng); });
            p.components.push_back({Eigen::VectorXd::NullaryExpr(d, [&] { return normal(rng); }),
                                    a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(d, d), 0.5});
        }
        const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(5, d, [&] { return normal(rng); });
        const auto s = score(p, x);
        for (Eigen::Index i = 0; i < 5; ++i)
            for (int j = 0; j < 2; ++j) {
                const auto& c = p.components[static_cast<std::size_t>(j)];
                const double direct =
                    std::log(0.5) + oracle::log_gaussian_direct(x.row(i).transpose(), c.mean, c.covariance);
                formula_fail += !oracle::close(s.values(i, j), direct, 1e-10);
            }
    }
    Outcome out;
    out.pass = good >= 95 && formula_fail == 0;
    out.detail = "recovered in " + std::to_string(good) + "/100 seeds; direct-formula mismatches " +
                 std::to_string(formula_fail) + " of 3000";
    return out;
}

Outcome tvd() {
    auto iso = [](Eigen::VectorXd m) {
        const auto d = m.size();
        return GmmComponent{std::move(m), Eigen::MatrixXd::Identity(d, d), 1.0};
    };
    const auto same = estimate_tvd(iso(Eigen::Vector2d(1, 2)), iso(Eigen::Vector2d(1, 2)), 1000, 1);
    const auto uni = estimate_tvd(iso(Eigen::VectorXd::Constant(1, 0.0)), iso(Eigen::VectorXd::Constant(1, 3.0)), 100000, 2);
    const double truth = 2.0 * oracle::phi(1.5) - 1.0;
    const bool uni_ok = std::abs(uni.estimate - truth) <= 3.0 * uni.std_error;
    bool monotone = true;
    double prev = -1.0;
    std::string seq;
    for (double sep : {0.0, 1.0, 2.0, 4.0}) {
        const auto e = estimate_tvd(iso(Eigen::VectorXd::Constant(1, 0.0)), iso(Eigen::VectorXd::Constant(1, sep)), 100000, 3);
        monotone = monotone && e.estimate > prev;
        prev = e.estimate;
        seq += fmt(" %.4f", e.estimate);
    }
    Outcome out;
    out.pass = same.estimate == 0.0 && uni_ok && monotone;
    out.detail = "f=g -> " + fmt("%g", same.estimate) + "; N(0,1) vs N(3,1) -> " + fmt("%.4f", uni.estimate) + " +- " +
                 fmt("%.4f", uni.std_error) + " (exact " + fmt("%.4f", truth) + "); separations 0,1,2,4 ->" + seq;
    return out;
}

Outcome selection_guarantee() {
    // Deliberately infeasible targets must come back as feasible = false, t* = +inf.
    std::size_t crashes = 0;
    std::mt19937_64 rng(10);
    for (int inst = 0; inst < 100; ++inst) {
        try {
            const ScoreMatrix scores(oracle::random_scores(rng, 1 + rng() % 30, 2 + rng() % 3));
            const auto truth = oracle::random_truth(rng, scores.rows(), scores.classes());
            const auto curve = sweep(scores, truth, build_grid(scores));
            selections.add(select_threshold(curve, TargetKind::mcl, 0.0));
            selections.add(select_threshold(curve, TargetKind::mcp, -0.01));
        } catch (const std::exception&) {
            ++crashes;
        }
    }
    Outcome out;
    out.pass = selections.violations == 0 && crashes == 0 && selections.infeasible >= 200;
    out.detail = std::to_string(selections.feasible) + " feasible selections, " + std::to_string(selections.infeasible) +
                 " infeasible, " + std::to_string(selections.violations) + " violations, " + std::to_string(crashes) +
                 " exceptions";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::string iono = std::string(TCAL_DATA_DIR) + "/ionosphere.data";
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) only = std::stoi(argv[++i]);
        else if (a == "--data" && i + 1 < argc) iono = argv[++i];
        else {
            std::fprintf(stderr, "usage: %s [--criterion N] [--data ionosphere.data]\n", argv[0]);
            return 2;
        }
    }
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "ionosphere MCP pipeline", [&] { return ionosphere_mcp(iono); }},
        {2, "ionosphere MCL pipeline", [&] { return ionosphere_mcl(iono); }},
        {3, "naive comparison direction", naive_direction},
        {4, "overfitting signature at d=100", overfitting_signature},
        {5, "sweep equals brute force", sweep_equivalence},
        {6, "monotonicity suite", monotonicity},
        {7, "softmax correctness", softmax},
        {8, "GMM recovery and scoring", gmm_recovery},
        {9, "TVD estimator", tvd},
        {10, "selection guarantee", selection_guarantee},
    };
    int failed = 0, ran = 0;
    for (const auto& c : criteria) {
        // The guarantee check audits the selections made by the other criteria,
        // so running it alone still runs them, without reporting their outcome.
        const bool report = only == 0 || c.id == only;
        if (!report && only != 10) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!report) continue;
        ++ran;
        failed += !o.pass;
        std::printf("[%s] criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", ran - failed, ran);
    return failed == 0 ? 0 : 1;
}
