#pragma once

// Experiment runners: the end-to-end calibration pipeline, resample
// averaging on a common reference grid, the simulated separation and
// dimension studies, the naive (no hold-out) comparison and the real-data
// pipelines.

#include "tcal/calibrate.hpp"
#include "tcal/core.hpp"
#include "tcal/dataset.hpp"
#include "tcal/model.hpp"
#include "tcal/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace tcal {

struct CsvSource {
    std::string path;
    CsvSchema schema;
};

/// Exactly one data source per run.
using DataSource = std::variant<MixtureScenario, CsvSource, LabeledDataset>;

struct BalancedSubsample {
    label_t take_all_class = 2;
    std::size_t n_other = 0;
};

struct RunConfig {
    std::string name = "run";
    DataSource source;
    /// Part sizes. The shuffle seed for resample r is substream(seed, r); the
    /// seed stored in `split` is not used by the pipeline.
    SplitSpec split;
    double epsilon = 1e-12;
    FitOptions fit;
    TargetKind target_kind = TargetKind::mcp;
    double target_value = 0.15;
    std::size_t n_resamples = 1;
    seed_t seed = 0;
    /// Add an arm scored with the generating parameters (simulated sources only).
    bool oracle = false;
    /// Build the grid from train + calibration + test gaps instead of calibration gaps only.
    bool pooled_grid = false;
    std::optional<std::size_t> top_k;
    std::optional<BalancedSubsample> balanced;
    MetricOptions metrics;

    void validate() const {
        if (n_resamples < 1) throw argument_error("n_resamples must be at least 1");
        if (split.n_train < 1) throw argument_error("split needs at least one training row");
        if (oracle && !std::holds_alternative<MixtureScenario>(source))
            throw argument_error("oracle arm needs a simulated data source");
        if (oracle && top_k) throw argument_error("oracle arm cannot be combined with feature screening");
    }
};

/// One row of a results table. For averaged arms every metric is the mean over
/// resamples and t_star is the median.
struct ArmRecord {
    std::string name;
    TargetKind target_kind = TargetKind::mcp;
    double target = 0.0;
    /// Selected metric and PA (MCP target) or AE (MCL target) on the curve used for selection.
    double holdout_metric = 0.0;
    double holdout_pa_or_ae = 0.0;
    double test_metric = 0.0;
    double test_pa_or_ae = 0.0;
    double t_star = infinity;
    std::size_t n_resamples = 1;
    double feasible_fraction = 0.0;
    /// Metric at the laxest threshold (the grid minimum), i.e. with no abstention.
    double train_metric_laxest = 0.0;
    double holdout_metric_laxest = 0.0;
    double test_metric_laxest = 0.0;
};

struct TrialCurves {
    CalibrationCurve train;
    CalibrationCurve calib;
    CalibrationCurve test;
};

struct Trial {
    ArmRecord record;
    ThresholdSelection selection;
    TrialCurves curves;
};

struct TrialOptions {
    double epsilon = 1e-12;
    TargetKind target_kind = TargetKind::mcp;
    double target_value = 0.15;
    bool pooled_grid = false;
    MetricOptions metrics;
};

/// Pointwise mean and standard deviation of several step curves evaluated on a
/// shared reference grid.
struct AveragedCurve {
    std::vector<double> t;
    std::vector<double> mcp_mean, mcp_sd;
    std::vector<double> pa_mean, pa_sd;
    std::vector<double> mcl_mean, mcl_sd;
    std::vector<double> ae_mean, ae_sd;
    std::size_t n_resamples = 0;
};

struct NamedCurve {
    std::string name;
    AveragedCurve curve;
};

struct NamedRawCurve {
    std::string name;
    CalibrationCurve curve;
};

struct NamedTvd {
    std::string name;
    TvdEstimate tvd;
};

struct ExperimentReport {
    std::string name;
    std::vector<ArmRecord> arms;
    /// Per-resample records, in resample order within each arm.
    std::vector<ArmRecord> trials;
    std::vector<NamedCurve> curves;
    /// Curves of the first resample, unaveraged.
    std::vector<NamedRawCurve> raw_curves;
    std::vector<NamedTvd> tvd;

    void append(ExperimentReport other) {
        auto move_into = [](auto& dst, auto& src) {
            dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
        };
        move_into(arms, other.arms);
        move_into(trials, other.trials);
        move_into(curves, other.curves);
        move_into(raw_curves, other.raw_curves);
        move_into(tvd, other.tvd);
    }
};

namespace detail {

inline ArmRecord make_record(const std::string& name, const ThresholdSelection& sel, const CurveRecord& test,
                             const TrialCurves& curves) {
    ArmRecord r;
    r.name = name;
    r.target_kind = sel.target_kind;
    r.target = sel.target_value;
    const bool mcp = sel.target_kind == TargetKind::mcp;
    r.holdout_metric = metric_of(sel.achieved, sel.target_kind);
    r.holdout_pa_or_ae = mcp ? sel.achieved.pa : sel.achieved.ae;
    r.test_metric = metric_of(test, sel.target_kind);
    r.test_pa_or_ae = mcp ? test.pa : test.ae;
    r.t_star = sel.t_star;
    r.feasible_fraction = sel.feasible ? 1.0 : 0.0;
    r.train_metric_laxest = metric_of(curves.train.records.front(), sel.target_kind);
    r.holdout_metric_laxest = metric_of(curves.calib.records.front(), sel.target_kind);
    r.test_metric_laxest = metric_of(curves.test.records.front(), sel.target_kind);
    return r;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    if (v.size() % 2 == 1) return v[mid];
    if (v[mid - 1] == infinity || v[mid] == infinity) return v[mid - 1] == infinity ? infinity : v[mid];
    return 0.5 * (v[mid - 1] + v[mid]);
}

inline ArmRecord average_records(const std::string& name, const std::vector<ArmRecord>& rs) {
    ArmRecord out = rs.front();
    out.name = name;
    out.n_resamples = rs.size();
    auto mean = [&](double ArmRecord::*field) {
        double s = 0.0;
        for (const auto& r : rs) s += r.*field;
        return s / static_cast<double>(rs.size());
    };
    out.holdout_metric = mean(&ArmRecord::holdout_metric);
    out.holdout_pa_or_ae = mean(&ArmRecord::holdout_pa_or_ae);
    out.test_metric = mean(&ArmRecord::test_metric);
    out.test_pa_or_ae = mean(&ArmRecord::test_pa_or_ae);
    out.feasible_fraction = mean(&ArmRecord::feasible_fraction);
    out.train_metric_laxest = mean(&ArmRecord::train_metric_laxest);
    out.holdout_metric_laxest = mean(&ArmRecord::holdout_metric_laxest);
    out.test_metric_laxest = mean(&ArmRecord::test_metric_laxest);
    std::vector<double> ts;
    for (const auto& r : rs) ts.push_back(r.t_star);
    out.t_star = median(std::move(ts));
    return out;
}

// Record of the largest grid entry <= t (the first record when t precedes the grid).
inline const CurveRecord& lookup(const CalibrationCurve& c, double t) {
    const auto it = std::upper_bound(c.records.begin(), c.records.end(), t,
                                     [](double v, const CurveRecord& r) { return v < r.t; });
    return it == c.records.begin() ? c.records.front() : *std::prev(it);
}

}  // namespace detail

/// Runs one train / calibrate / test pass with an already fitted scorer:
/// score every part, build the grid, trace the curves, select t* on the
/// calibration curve and measure the test set at t*.
template <Scorer S>
Trial run_trial(const S& scorer, const LabeledDataset& train, const LabeledDataset& calib, const LabeledDataset& test,
                const TrialOptions& opt, const std::string& name = "trial") {
    const ScoreMatrix s_train = scorer.score(train.features);
    const ScoreMatrix s_calib = scorer.score(calib.features);
    const ScoreMatrix s_test = scorer.score(test.features);
    const ThresholdGrid grid = opt.pooled_grid ? build_grid(std::vector<ScoreMatrix>{s_train, s_calib, s_test}, opt.epsilon)
                                               : build_grid(s_calib, opt.epsilon);
    Trial trial;
    trial.curves.train = sweep(s_train, train.labels, grid, opt.metrics);
    trial.curves.calib = sweep(s_calib, calib.labels, grid, opt.metrics);
    trial.curves.test = sweep(s_test, test.labels, grid, opt.metrics);
    trial.selection = select_threshold(trial.curves.calib, opt.target_kind, opt.target_value);
    const CurveRecord at_test = evaluate_at(s_test, test.labels, trial.selection.t_star, opt.metrics);
    trial.record = detail::make_record(name, trial.selection, at_test, trial.curves);
    return trial;
}

/// Averages step curves on a reference grid of up to `reference_points`
/// quantiles of every finite threshold seen (plus +inf). Each curve is read
/// right-continuously: the value at t is its record at the largest grid entry <= t.
inline AveragedCurve average_curves(const std::vector<CalibrationCurve>& curves, std::size_t reference_points = 200) {
    if (curves.empty()) throw argument_error("average_curves: no curves");
    if (reference_points < 2) throw argument_error("average_curves: need at least 2 reference points");
    std::vector<double> pooled;
    for (const auto& c : curves)
        for (const auto& r : c.records)
            if (std::isfinite(r.t)) pooled.push_back(r.t);
    std::sort(pooled.begin(), pooled.end());
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

    AveragedCurve out;
    out.n_resamples = curves.size();
    if (!pooled.empty()) {
        const std::size_t m = std::min(reference_points, pooled.size());
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t at = m == 1 ? 0 : (i * (pooled.size() - 1) + (m - 1) / 2) / (m - 1);
            if (out.t.empty() || pooled[at] != out.t.back()) out.t.push_back(pooled[at]);
        }
    }
    out.t.push_back(infinity);

    const double n = static_cast<double>(curves.size());
    auto stats = [&](double t, double CurveRecord::*field, std::vector<double>& mean, std::vector<double>& sd) {
        double s = 0.0;
        for (const auto& c : curves) s += detail::lookup(c, t).*field;
        const double mu = s / n;
        double ss = 0.0;
        for (const auto& c : curves) {
            const double dev = detail::lookup(c, t).*field - mu;
            ss += dev * dev;
        }
        mean.push_back(mu);
        sd.push_back(curves.size() > 1 && std::isfinite(mu) ? std::sqrt(ss / (n - 1.0)) : 0.0);
    };
    for (double t : out.t) {
        stats(t, &CurveRecord::mcp, out.mcp_mean, out.mcp_sd);
        stats(t, &CurveRecord::pa, out.pa_mean, out.pa_sd);
        stats(t, &CurveRecord::mcl, out.mcl_mean, out.mcl_sd);
        stats(t, &CurveRecord::ae, out.ae_mean, out.ae_sd);
    }
    return out;
}

/// Calls `run(substream(seed, r))` for r = 0..n_resamples-1 and averages the
/// returned curves pointwise.
template <class Run>
AveragedCurve resample_average(Run&& run, std::size_t n_resamples, seed_t seed, std::size_t reference_points = 200) {
    if (n_resamples < 1) throw argument_error("resample_average: n_resamples must be at least 1");
    std::vector<CalibrationCurve> curves;
    curves.reserve(n_resamples);
    for (std::size_t r = 0; r < n_resamples; ++r) curves.push_back(run(substream(seed, r)));
    return average_curves(curves, reference_points);
}

namespace detail {

struct Materialized {
    LabeledDataset data;
    std::optional<GmmParams> truth;
};

inline Materialized materialize(const RunConfig& cfg) {
    Materialized m;
    if (const auto* sc = std::get_if<MixtureScenario>(&cfg.source)) {
        auto sim = generate(*sc);
        m.data = std::move(sim.data);
        m.truth = std::move(sim.truth);
    } else if (const auto* csv = std::get_if<CsvSource>(&cfg.source)) {
        m.data = load_csv(csv->path, csv->schema);
    } else {
        m.data = std::get<LabeledDataset>(cfg.source);
        m.data.validate();
    }
    if (cfg.balanced)
        m.data = subsample_balanced(m.data, cfg.balanced->take_all_class, cfg.balanced->n_other,
                                    substream(cfg.seed, 0xBA1A'0CEDULL));
    return m;
}

inline TrialOptions trial_options(const RunConfig& cfg) {
    return {cfg.epsilon, cfg.target_kind, cfg.target_value, cfg.pooled_grid, cfg.metrics};
}

inline void collect(ExperimentReport& report, const std::string& arm, const std::vector<Trial>& trials) {
    std::vector<ArmRecord> records;
    std::vector<CalibrationCurve> train, calib, test;
    for (std::size_t r = 0; r < trials.size(); ++r) {
        ArmRecord rec = trials[r].record;
        rec.name = arm + "#" + std::to_string(r);
        records.push_back(rec);
        train.push_back(trials[r].curves.train);
        calib.push_back(trials[r].curves.calib);
        test.push_back(trials[r].curves.test);
    }
    report.arms.push_back(average_records(arm, records));
    report.trials.insert(report.trials.end(), records.begin(), records.end());
    report.curves.push_back({arm + "/train", average_curves(train)});
    report.curves.push_back({arm + "/calib", average_curves(calib)});
    report.curves.push_back({arm + "/test", average_curves(test)});
    report.raw_curves.push_back({arm + "/train", trials.front().curves.train});
    report.raw_curves.push_back({arm + "/calib", trials.front().curves.calib});
    report.raw_curves.push_back({arm + "/test", trials.front().curves.test});
}

}  // namespace detail

/// Fit on train, score the calibration set, build the grid, sweep, select t*,
/// apply to test; repeated over `n_resamples` seeded re-splits of the same data.
inline ExperimentReport run_calibration_pipeline(const RunConfig& cfg) {
    cfg.validate();
    const auto source = detail::materialize(cfg);
    const TrialOptions opt = detail::trial_options(cfg);

    std::vector<Trial> fitted, oracle;
    for (std::size_t r = 0; r < cfg.n_resamples; ++r) {
        SplitSpec spec = cfg.split;
        spec.seed = substream(cfg.seed, r);
        auto parts = split(source.data, spec);
        if (cfg.top_k) {
            const std::vector<LabeledDataset> others{parts.calib, parts.test};
            auto screened = screen_features(parts.train, others, *cfg.top_k);
            parts.train = std::move(screened.train);
            parts.calib = std::move(screened.others[0]);
            parts.test = std::move(screened.others[1]);
        }
        const GaussianMixtureClassifier model(fit_gmm(parts.train, cfg.fit));
        fitted.push_back(run_trial(model, parts.train, parts.calib, parts.test, opt, cfg.name));
        if (cfg.oracle) {
            const GaussianMixtureClassifier truth(*source.truth);
            oracle.push_back(run_trial(truth, parts.train, parts.calib, parts.test, opt, cfg.name));
        }
    }

    ExperimentReport report;
    report.name = cfg.name;
    detail::collect(report, cfg.name + "/fitted", fitted);
    if (cfg.oracle) detail::collect(report, cfg.name + "/oracle", oracle);
    return report;
}

/// Thresholding arm (fit on train, select on hold-out) against the naive arm
/// (fit on train + hold-out, select on its own training curve), sharing every
/// test set. Uses cfg.target_value as q.
inline ExperimentReport compare_naive(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.top_k) throw argument_error("compare_naive does not support feature screening");
    const auto source = detail::materialize(cfg);
    const TrialOptions opt = detail::trial_options(cfg);

    std::vector<Trial> thresholding, naive;
    for (std::size_t r = 0; r < cfg.n_resamples; ++r) {
        SplitSpec spec = cfg.split;
        spec.seed = substream(cfg.seed, r);
        const auto parts = split(source.data, spec);

        const GaussianMixtureClassifier held_out_model(fit_gmm(parts.train, cfg.fit));
        thresholding.push_back(run_trial(held_out_model, parts.train, parts.calib, parts.test, opt, cfg.name));

        std::vector<std::size_t> pooled_rows = parts.train_rows;
        pooled_rows.insert(pooled_rows.end(), parts.calib_rows.begin(), parts.calib_rows.end());
        const LabeledDataset pooled = source.data.subset(pooled_rows);
        const GaussianMixtureClassifier naive_model(fit_gmm(pooled, cfg.fit));
        // Selection runs on the fitting data itself: pass it as the calibration part.
        TrialOptions naive_opt = opt;
        naive_opt.pooled_grid = false;
        naive.push_back(run_trial(naive_model, pooled, pooled, parts.test, naive_opt, cfg.name));
    }

    ExperimentReport report;
    report.name = cfg.name;
    detail::collect(report, cfg.name + "/thresholding", thresholding);
    detail::collect(report, cfg.name + "/naive", naive);
    return report;
}

// ---------------------------------------------------------------------------
// Study presets

struct StudyOptions {
    seed_t seed = 0;
    std::size_t n_resamples = 20;
    FitOptions fit;
    double epsilon = 1e-12;
    bool oracle = true;
    /// Overrides the study's default q (or r for MCL arms) when set.
    std::optional<double> target;
    std::size_t tvd_samples = 1'000'000;
};

/// Center distances for the easy / medium / hard separation arms at variance 0.5.
struct SeparationLevels {
    double easy = 4.0;
    double medium = 2.0;
    double hard = 0.75;
};

inline RunConfig separation_config(const std::string& name, double separation, const StudyOptions& o, std::size_t arm) {
    RunConfig c;
    c.name = name;
    MixtureScenario sc;
    sc.d = 30;
    sc.separation = separation;
    sc.variance = 0.5;
    sc.n = sc.d * 5;
    sc.seed = substream(o.seed, 100 + arm);
    c.source = sc;
    c.split = {90, 30, 30, 0, false};
    c.epsilon = o.epsilon;
    c.fit = o.fit;
    c.target_kind = TargetKind::mcp;
    c.target_value = o.target.value_or(0.25);
    c.n_resamples = o.n_resamples;
    c.seed = substream(o.seed, 200 + arm);
    c.oracle = o.oracle;
    return c;
}

/// Three 30-dimensional arms whose centers move closer together, q = .25.
inline ExperimentReport run_separation_study(const StudyOptions& o, const SeparationLevels& levels = {}) {
    ExperimentReport report;
    report.name = "separation";
    const std::pair<const char*, double> arms[] = {{"easy", levels.easy}, {"medium", levels.medium}, {"hard", levels.hard}};
    for (std::size_t a = 0; a < 3; ++a)
        report.append(run_calibration_pipeline(separation_config(arms[a].first, arms[a].second, o, a)));
    return report;
}

struct DimensionArm {
    const char* name;
    std::size_t d;
    double variance;
};

inline constexpr DimensionArm dimension_arms[] = {{"d10", 10, 0.8}, {"d20", 20, 0.75}, {"d100", 100, 0.5}};
inline constexpr double dimension_study_separation = 2.0;

inline RunConfig dimension_config(const DimensionArm& arm, const StudyOptions& o, std::size_t index) {
    RunConfig c;
    c.name = arm.name;
    MixtureScenario sc;
    sc.d = arm.d;
    sc.separation = dimension_study_separation;
    sc.variance = arm.variance;
    sc.n = 500;
    // One scenario seed for every arm, so the centers coincide.
    sc.seed = substream(o.seed, 300);
    c.source = sc;
    c.split = {300, 100, 100, 0, false};
    c.epsilon = o.epsilon;
    c.fit = o.fit;
    c.target_kind = TargetKind::mcp;
    c.target_value = o.target.value_or(0.2);
    c.n_resamples = o.n_resamples;
    c.seed = substream(o.seed, 400 + index);
    c.oracle = o.oracle;
    return c;
}

/// Arms at d = 10, 20, 100 with variances .8, .75, .5 and shared centers,
/// q = .2, with a TVD estimate between the two true components of each arm.
inline ExperimentReport run_dimension_study(const StudyOptions& o) {
    ExperimentReport report;
    report.name = "dimension";
    for (std::size_t a = 0; a < std::size(dimension_arms); ++a) {
        const RunConfig cfg = dimension_config(dimension_arms[a], o, a);
        report.append(run_calibration_pipeline(cfg));
        const auto truth = generate(std::get<MixtureScenario>(cfg.source)).truth;
        report.tvd.push_back({dimension_arms[a].name,
                              estimate_tvd(truth.components[0], truth.components[1], o.tvd_samples, substream(o.seed, 500 + a))});
    }
    return report;
}

/// d = 15 at the medium separation: 45 training, 15 hold-out and 15 test rows
/// (the naive arm fits on all 60 non-test rows), q = .2, 50 resamples by default.
inline RunConfig naive_comparison_config(const StudyOptions& o, const SeparationLevels& levels = {}) {
    RunConfig c;
    c.name = "naive_comparison";
    MixtureScenario sc;
    sc.d = 15;
    sc.separation = levels.medium;
    sc.variance = 0.5;
    sc.n = sc.d * 5;
    sc.seed = substream(o.seed, 600);
    c.source = sc;
    c.split = {45, 15, 15, 0, false};
    c.epsilon = o.epsilon;
    c.fit = o.fit;
    c.target_kind = TargetKind::mcp;
    c.target_value = o.target.value_or(0.2);
    c.n_resamples = o.n_resamples;
    c.seed = substream(o.seed, 700);
    return c;
}

inline CsvSchema ionosphere_schema() {
    CsvSchema s;
    s.label_map = {{"g", 1}, {"b", 2}};
    s.header = false;
    return s;
}

/// 151 / 100 / 100 splits of the 351-row radar returns file; q = .15 or r = 300.
inline RunConfig ionosphere_config(const std::string& path, TargetKind kind, const StudyOptions& o) {
    RunConfig c;
    c.name = kind == TargetKind::mcp ? "ionosphere_mcp" : "ionosphere_mcl";
    c.source = CsvSource{path, ionosphere_schema()};
    c.split = {151, 100, 100, 0, false};
    c.epsilon = o.epsilon;
    c.fit = o.fit;
    c.target_kind = kind;
    c.target_value = o.target.value_or(kind == TargetKind::mcp ? 0.15 : 300.0);
    c.n_resamples = o.n_resamples;
    c.seed = o.seed;
    return c;
}

/// Daily ozone file layout: a date column, 72 numeric features, then a 0/1
/// label; "?" marks missing values.
inline CsvSchema ozone_schema() {
    CsvSchema s;
    s.label_map = {{"0", 1}, {"1", 2}};
    s.missing_token = "?";
    s.drop_missing = true;
    s.skip_columns = {0};
    s.header = false;
    return s;
}

/// All features, 616 / 616 / 616 stratified splits, q = .02.
inline RunConfig ozone_full_config(const std::string& path, const StudyOptions& o) {
    RunConfig c;
    c.name = "ozone_full";
    c.source = CsvSource{path, ozone_schema()};
    c.split = {616, 616, 616, 0, true};
    c.epsilon = o.epsilon;
    c.fit = o.fit;
    c.target_kind = TargetKind::mcp;
    c.target_value = o.target.value_or(0.02);
    c.n_resamples = o.n_resamples;
    c.seed = o.seed;
    return c;
}

/// Every ozone day plus 143 other days (200 rows), 100 / 50 / 50 splits,
/// top-20 marginal-correlation screening on the training part, q = .2.
inline RunConfig ozone_reduced_config(const std::string& path, const StudyOptions& o) {
    RunConfig c = ozone_full_config(path, o);
    c.name = "ozone_reduced";
    c.split = {100, 50, 50, 0, false};
    c.balanced = BalancedSubsample{2, 143};
    c.top_k = 20;
    c.target_value = o.target.value_or(0.2);
    return c;
}

}  // namespace tcal
