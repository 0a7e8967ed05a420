#pragma once

// JSON forms of models, selections, scenarios and reports, and the on-disk
// layout of experiment output directories. Non-finite numbers are written as
// the strings "inf", "-inf" and "nan".

#include "tcal/bench.hpp"
#include "tcal/calibrate.hpp"
#include "tcal/model.hpp"
#include "tcal/simulate.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace tcal {

using json = nlohmann::ordered_json;

inline json number_to_json(double v) {
    if (std::isfinite(v)) return v;
    return detail::format_metric(v);
}

inline double number_from_json(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return infinity;
        if (s == "-inf") return -infinity;
        if (s == "nan") return std::nan("");
    }
    throw data_error("expected a number, got " + j.dump());
}

// Model file:
//   {"d": 2, "k": 2, "components": [{"weight": .5, "mean": [..], "covariance": [[..], ..]}, ..]}
inline json to_json(const GmmParams& p) {
    json comps = json::array();
    for (const auto& c : p.components) {
        json cov = json::array();
        for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index q = 0; q < c.covariance.cols(); ++q) row.push_back(c.covariance(r, q));
            cov.push_back(std::move(row));
        }
        comps.push_back({{"weight", c.weight},
                         {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                         {"covariance", std::move(cov)}});
    }
    return {{"d", p.d}, {"k", p.k()}, {"components", std::move(comps)}};
}

inline GmmComponent component_from_json(const json& j) {
    GmmComponent c;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto d = static_cast<Eigen::Index>(mean.size());
    c.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    c.weight = j.value("weight", 1.0);
    if (j.contains("covariance")) {
        const auto& cov = j.at("covariance");
        if (cov.size() != mean.size()) throw data_error("covariance has wrong row count");
        c.covariance.resize(d, d);
        for (Eigen::Index r = 0; r < d; ++r) {
            const auto row = cov.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
            if (static_cast<Eigen::Index>(row.size()) != d) throw data_error("covariance has wrong column count");
            for (Eigen::Index q = 0; q < d; ++q) c.covariance(r, q) = row[static_cast<std::size_t>(q)];
        }
    } else if (j.contains("variance")) {
        c.covariance = j.at("variance").get<double>() * Eigen::MatrixXd::Identity(d, d);
    } else {
        throw data_error("component needs a covariance or variance");
    }
    return c;
}

inline GmmParams gmm_from_json(const json& j) {
    GmmParams p;
    p.d = j.at("d").get<std::size_t>();
    for (const auto& c : j.at("components")) p.components.push_back(component_from_json(c));
    p.validate();
    return p;
}

inline json to_json(const CurveRecord& r) {
    return {{"t", number_to_json(r.t)},     {"mcp", number_to_json(r.mcp)}, {"pa", number_to_json(r.pa)},
            {"n_assigned", r.n_assigned},   {"mcl", number_to_json(r.mcl)}, {"ae", number_to_json(r.ae)},
            {"empty", r.empty}};
}

inline CurveRecord record_from_json(const json& j) {
    CurveRecord r;
    r.t = number_from_json(j.at("t"));
    r.mcp = number_from_json(j.at("mcp"));
    r.pa = number_from_json(j.at("pa"));
    r.n_assigned = j.at("n_assigned").get<std::size_t>();
    r.mcl = number_from_json(j.at("mcl"));
    r.ae = number_from_json(j.at("ae"));
    r.empty = j.value("empty", r.n_assigned == 0);
    return r;
}

inline json to_json(const ThresholdSelection& s) {
    return {{"t_star", number_to_json(s.t_star)},
            {"target_kind", to_string(s.target_kind)},
            {"target_value", number_to_json(s.target_value)},
            {"feasible", s.feasible},
            {"achieved", to_json(s.achieved)}};
}

inline TargetKind target_kind_from_string(const std::string& s) {
    if (s == "MCP" || s == "mcp") return TargetKind::mcp;
    if (s == "MCL" || s == "mcl") return TargetKind::mcl;
    throw data_error("unknown target kind '" + s + "'");
}

inline ThresholdSelection selection_from_json(const json& j) {
    ThresholdSelection s;
    s.t_star = number_from_json(j.at("t_star"));
    s.target_kind = target_kind_from_string(j.at("target_kind").get<std::string>());
    s.target_value = number_from_json(j.at("target_value"));
    s.feasible = j.at("feasible").get<bool>();
    s.achieved = record_from_json(j.at("achieved"));
    return s;
}

inline json to_json(const TvdEstimate& t) {
    return {{"estimate", number_to_json(t.estimate)},
            {"std_error", number_to_json(t.std_error)},
            {"raw_expectation", number_to_json(t.raw_expectation)},
            {"n_samples", t.n_samples}};
}

/// Scenario file: {"d", "separation", "variance", "weights", "n", "seed",
/// optional "split": {"train", "calib", "test"}}.
struct ScenarioFile {
    MixtureScenario scenario;
    std::optional<SplitSpec> split;
};

inline ScenarioFile scenario_from_json(const json& j) {
    ScenarioFile f;
    auto& s = f.scenario;
    s.d = j.value("d", s.d);
    s.separation = j.value("separation", s.separation);
    s.variance = j.value("variance", s.variance);
    if (j.contains("weights")) {
        const auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != 2) throw data_error("scenario weights must have two entries");
        s.weights = {w[0], w[1]};
    }
    s.n = j.value("n", s.n);
    s.seed = j.value("seed", s.seed);
    if (j.contains("split")) {
        const auto& sp = j.at("split");
        f.split = SplitSpec{sp.at("train").get<std::size_t>(), sp.value("calib", std::size_t{0}),
                            sp.value("test", std::size_t{0}), s.seed, false};
    }
    s.validate();
    return f;
}

inline json to_json(const MixtureScenario& s) {
    return {{"d", s.d},
            {"separation", s.separation},
            {"variance", s.variance},
            {"weights", {s.weights[0], s.weights[1]}},
            {"n", s.n},
            {"seed", s.seed}};
}

inline json to_json(const ArmRecord& r) {
    return {{"name", r.name},
            {"target_kind", to_string(r.target_kind)},
            {"target", number_to_json(r.target)},
            {"holdout_metric", number_to_json(r.holdout_metric)},
            {"holdout_pa_or_ae", number_to_json(r.holdout_pa_or_ae)},
            {"test_metric", number_to_json(r.test_metric)},
            {"test_pa_or_ae", number_to_json(r.test_pa_or_ae)},
            {"t_star", number_to_json(r.t_star)},
            {"n_resamples", r.n_resamples},
            {"feasible_fraction", number_to_json(r.feasible_fraction)},
            {"train_metric_laxest", number_to_json(r.train_metric_laxest)},
            {"holdout_metric_laxest", number_to_json(r.holdout_metric_laxest)},
            {"test_metric_laxest", number_to_json(r.test_metric_laxest)}};
}

inline json to_json(const ExperimentReport& rep) {
    json arms = json::array(), trials = json::array(), tvd = json::array();
    for (const auto& a : rep.arms) arms.push_back(to_json(a));
    for (const auto& t : rep.trials) trials.push_back(to_json(t));
    for (const auto& t : rep.tvd) {
        json e = to_json(t.tvd);
        e["name"] = t.name;
        tvd.push_back(std::move(e));
    }
    return {{"name", rep.name}, {"arms", std::move(arms)}, {"trials", std::move(trials)}, {"tvd", std::move(tvd)}};
}

inline void write_arms_csv(std::ostream& out, const std::vector<ArmRecord>& arms) {
    out << "name,target_kind,target,holdout_metric,holdout_pa_or_ae,test_metric,test_pa_or_ae,t_star,n_resamples,"
           "feasible_fraction,train_metric_laxest,holdout_metric_laxest,test_metric_laxest\n";
    using detail::format_metric;
    for (const auto& a : arms)
        out << a.name << ',' << to_string(a.target_kind) << ',' << format_metric(a.target) << ','
            << format_metric(a.holdout_metric) << ',' << format_metric(a.holdout_pa_or_ae) << ','
            << format_metric(a.test_metric) << ',' << format_metric(a.test_pa_or_ae) << ',' << format_metric(a.t_star)
            << ',' << a.n_resamples << ',' << format_metric(a.feasible_fraction) << ','
            << format_metric(a.train_metric_laxest) << ',' << format_metric(a.holdout_metric_laxest) << ','
            << format_metric(a.test_metric_laxest) << '\n';
}

inline void write_averaged_curve_csv(std::ostream& out, const AveragedCurve& c) {
    using detail::format_metric;
    out << "t,mcp_mean,mcp_sd,pa_mean,pa_sd,mcl_mean,mcl_sd,ae_mean,ae_sd\n";
    for (std::size_t i = 0; i < c.t.size(); ++i)
        out << format_metric(c.t[i]) << ',' << format_metric(c.mcp_mean[i]) << ',' << format_metric(c.mcp_sd[i]) << ','
            << format_metric(c.pa_mean[i]) << ',' << format_metric(c.pa_sd[i]) << ',' << format_metric(c.mcl_mean[i])
            << ',' << format_metric(c.mcl_sd[i]) << ',' << format_metric(c.ae_mean[i]) << ','
            << format_metric(c.ae_sd[i]) << '\n';
}

namespace detail {

inline std::string file_stem(std::string name) {
    for (char& ch : name)
        if (ch == '/' || ch == '#' || ch == ' ') ch = '_';
    return name;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw data_error("cannot write '" + p.string() + "'");
    return out;
}

}  // namespace detail

/// Writes summary.json, arms.csv, trials.csv, curves/<name>.csv (averaged)
/// and raw_curves/<name>.csv (first resample) under `dir`.
inline void write_report(const std::filesystem::path& dir, const ExperimentReport& rep) {
    std::filesystem::create_directories(dir / "curves");
    std::filesystem::create_directories(dir / "raw_curves");
    detail::open_out(dir / "summary.json") << to_json(rep).dump(2) << '\n';
    {
        auto out = detail::open_out(dir / "arms.csv");
        write_arms_csv(out, rep.arms);
    }
    {
        auto out = detail::open_out(dir / "trials.csv");
        write_arms_csv(out, rep.trials);
    }
    for (const auto& c : rep.curves) {
        auto out = detail::open_out(dir / "curves" / (detail::file_stem(c.name) + ".csv"));
        write_averaged_curve_csv(out, c.curve);
    }
    for (const auto& c : rep.raw_curves) {
        auto out = detail::open_out(dir / "raw_curves" / (detail::file_stem(c.name) + ".csv"));
        write_curve_csv(out, c.curve);
    }
}

}  // namespace tcal
