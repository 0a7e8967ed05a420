// tcal: command-line front end for fitting, threshold calibration and the
// packaged studies. Run `tcal <command> --help` for the options of each command.

#include <tcal/tcal.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef TCAL_DATA_DIR
#define TCAL_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace tcal;

namespace {

// Options shared by every command that reads a labeled CSV.
struct CsvOptions {
    std::string label_map;  // "g=1,b=2"
    std::optional<std::size_t> label_column;
    std::vector<std::size_t> skip_columns;
    bool drop_missing = false;
    std::string missing = "?";
    std::optional<bool> header;

    void attach(CLI::App& app) {
        app.add_option("--label-map", label_map, "Map label tokens to classes, e.g. g=1,b=2 (default: integer labels)");
        app.add_option("--label-column", label_column, "0-based label column (default: last)");
        app.add_option("--skip-columns", skip_columns, "0-based columns to ignore")->delimiter(',');
        app.add_flag("--drop-missing", drop_missing, "Drop rows containing the missing-value token");
        app.add_option("--missing", missing, "Missing-value token")->capture_default_str();
        app.add_flag("--header,!--no-header", header, "Force header detection on or off");
    }

    [[nodiscard]] CsvSchema schema(bool labeled = true) const {
        CsvSchema s;
        s.has_labels = labeled;
        if (label_column) s.label_column = *label_column;
        s.skip_columns = skip_columns;
        s.drop_missing = drop_missing;
        s.missing_token = missing;
        s.header = header;
        std::stringstream in(label_map);
        std::string pair;
        while (std::getline(in, pair, ',')) {
            const auto eq = pair.find('=');
            if (eq == std::string::npos) throw argument_error("--label-map entries look like token=class, got '" + pair + "'");
            s.label_map[pair.substr(0, eq)] = std::stoi(pair.substr(eq + 1));
        }
        return s;
    }
};

json read_json(const std::string& path_or_text) {
    if (!path_or_text.empty() && path_or_text.front() == '{') return json::parse(path_or_text);
    std::ifstream in(path_or_text);
    if (!in) throw data_error("cannot open '" + path_or_text + "'");
    return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw data_error("cannot write '" + path.string() + "'");
    out << text;
}

// Writes to `path`, or to stdout when it is empty.
template <class Fn>
void emit(const std::string& path, Fn&& write) {
    if (path.empty()) {
        write(std::cout);
        return;
    }
    std::ostringstream s;
    write(s);
    write_text(path, s.str());
}

struct TargetOptions {
    std::optional<double> q;
    std::optional<double> r;

    void attach(CLI::App& app) {
        auto* oq = app.add_option("--target-q", q, "Target misclassification proportion");
        auto* orr = app.add_option("--target-r", r, "Target misclassification loss");
        oq->excludes(orr);
    }
};

int cmd_simulate(const std::string& scenario_path, MixtureScenario sc, std::optional<seed_t> seed,
                 const std::string& out_dir) {
    std::optional<SplitSpec> parts;
    if (!scenario_path.empty()) {
        auto file = scenario_from_json(read_json(scenario_path));
        sc = file.scenario;
        parts = file.split;
    }
    if (seed) sc.seed = *seed;
    const auto sim = generate(sc);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    save_csv((dir / "data.csv").string(), sim.data);
    write_text(dir / "truth.json", to_json(sim.truth).dump(2) + "\n");
    write_text(dir / "scenario.json", to_json(sc).dump(2) + "\n");
    if (parts) {
        parts->seed = substream(sc.seed, 1);
        const auto s = split(sim.data, *parts);
        save_csv((dir / "train.csv").string(), s.train);
        if (s.calib.rows() > 0) save_csv((dir / "calib.csv").string(), s.calib);
        if (s.test.rows() > 0) save_csv((dir / "test.csv").string(), s.test);
    }
    std::cerr << "wrote " << sim.data.rows() << " rows to " << dir.string() << "\n";
    return 0;
}

int cmd_fit(const std::string& train_path, const CsvOptions& csv, const FitOptions& fit, const std::string& output) {
    const auto train = load_csv(train_path, csv.schema());
    const auto params = fit_gmm(train, fit);
    emit(output, [&](std::ostream& out) { out << to_json(params).dump(2) << '\n'; });
    return 0;
}

int cmd_calibrate(const std::string& model_path, const std::string& calib_path, const CsvOptions& csv,
                  const TargetOptions& target, double epsilon, const std::string& out_dir) {
    if (!target.q && !target.r) throw argument_error("calibrate needs --target-q or --target-r");
    const GaussianMixtureClassifier model(gmm_from_json(read_json(model_path)));
    const auto calib = load_csv(calib_path, csv.schema());
    const auto scores = model.score(calib.features);
    const auto curve = sweep(scores, calib.labels, build_grid(scores, epsilon));
    const auto kind = target.q ? TargetKind::mcp : TargetKind::mcl;
    const auto sel = select_threshold(curve, kind, target.q ? *target.q : *target.r);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_text(dir / "selection.json", to_json(sel).dump(2) + "\n");
    std::ostringstream c;
    write_curve_csv(c, curve);
    write_text(dir / "curve.csv", c.str());
    std::cout << to_json(sel).dump(2) << '\n';
    if (!sel.feasible) std::cerr << "warning: no threshold meets the target on the calibration data\n";
    return 0;
}

int cmd_apply(const std::string& model_path, const std::string& selection_path, const std::string& data_path,
              const CsvOptions& csv, bool unlabeled, const std::string& output) {
    const GaussianMixtureClassifier model(gmm_from_json(read_json(model_path)));
    const auto sel = selection_from_json(read_json(selection_path));
    const auto data = load_csv(data_path, csv.schema(!unlabeled));
    const auto scores = model.score(data.features);
    const auto result = apply_threshold(scores, sel.t_star);
    emit(output, [&](std::ostream& out) {
        out << "row,label,gap" << (data.labeled() ? ",truth" : "") << '\n';
        for (std::size_t i = 0; i < result.labels.size(); ++i) {
            out << i << ',' << result.labels[i] << ',' << detail::format_metric(result.gaps[i]);
            if (data.labeled()) out << ',' << data.labels[i];
            out << '\n';
        }
    });
    if (data.labeled()) {
        const auto r = evaluate_at(scores, data.labels, sel.t_star);
        std::fprintf(stderr, "assigned %zu of %zu (PA %.4f), MCP %.4f\n", r.n_assigned, data.rows(), r.pa, r.mcp);
    }
    return 0;
}

struct StudyArgs {
    std::string name;
    StudyOptions opts;
    std::optional<std::size_t> resamples;
    TargetOptions target;
    std::optional<std::size_t> top_k;
    std::string data;
    std::string out_dir;
};

void print_arms(const ExperimentReport& rep) {
    write_arms_csv(std::cout, rep.arms);
    for (const auto& t : rep.tvd)
        std::printf("tvd %s: %.4f (se %.4f, %zu samples)\n", t.name.c_str(), t.tvd.estimate, t.tvd.std_error,
                    t.tvd.n_samples);
}

int cmd_study(StudyArgs a) {
    auto& o = a.opts;
    if (a.resamples) o.n_resamples = *a.resamples;
    else if (a.name == "naive") o.n_resamples = 50;
    if (a.target.q) o.target = *a.target.q;
    if (a.target.r) o.target = *a.target.r;

    ExperimentReport rep;
    if (a.name == "separation") {
        rep = run_separation_study(o);
    } else if (a.name == "dimension") {
        rep = run_dimension_study(o);
    } else if (a.name == "naive") {
        rep = compare_naive(naive_comparison_config(o));
    } else if (a.name == "ionosphere") {
        const std::string path = a.data.empty() ? std::string(TCAL_DATA_DIR) + "/ionosphere.data" : a.data;
        auto mcp = ionosphere_config(path, TargetKind::mcp, o);
        auto mcl = ionosphere_config(path, TargetKind::mcl, o);
        if (a.target.q) mcl.target_value = 300.0;
        if (a.target.r) mcp.target_value = 0.15;
        mcp.top_k = mcl.top_k = a.top_k;
        rep.name = "ionosphere";
        if (!a.target.r) rep.append(run_calibration_pipeline(mcp));
        if (!a.target.q) rep.append(run_calibration_pipeline(mcl));
    } else if (a.name == "ozone-full" || a.name == "ozone-reduced") {
        if (a.data.empty()) throw argument_error("study " + a.name + " needs --data pointing at the daily ozone file");
        if (a.target.r) throw argument_error("the ozone studies use an MCP target (--target-q)");
        auto cfg = a.name == "ozone-full" ? ozone_full_config(a.data, o) : ozone_reduced_config(a.data, o);
        if (a.top_k) cfg.top_k = *a.top_k;
        rep = run_calibration_pipeline(cfg);
        rep.name = a.name;
    }
    print_arms(rep);
    if (!a.out_dir.empty()) {
        write_report(a.out_dir, rep);
        std::cerr << "report written to " << a.out_dir << "\n";
    }
    return 0;
}

int cmd_tvd(const std::string& f, const std::string& g, std::size_t samples, seed_t seed, const std::string& output) {
    const auto est = estimate_tvd(component_from_json(read_json(f)), component_from_json(read_json(g)), samples, seed);
    emit(output, [&](std::ostream& out) { out << to_json(est).dump(2) << '\n'; });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Threshold calibration for score-based classifiers with abstention"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tcal 0.1.0");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Draw a two-component Gaussian mixture dataset");
    std::string scenario_path, sim_out = "sim";
    MixtureScenario sc;
    std::optional<seed_t> sim_seed;
    sim->add_option("--scenario", scenario_path, "Scenario JSON file (overrides the inline options)");
    sim->add_option("--d", sc.d, "Dimension")->capture_default_str();
    sim->add_option("--separation", sc.separation, "Distance between the centers")->capture_default_str();
    sim->add_option("--variance", sc.variance, "Shared diagonal covariance entry")->capture_default_str();
    sim->add_option("--n", sc.n, "Number of rows")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--output-dir", sim_out, "Directory for data.csv, truth.json and any split files")->capture_default_str();

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a Gaussian mixture classifier to labeled training rows");
    std::string train_path, fit_out;
    CsvOptions fit_csv;
    FitOptions fit_opt;
    fit->add_option("train", train_path, "Training CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--ridge", fit_opt.ridge, "Relative covariance ridge")->capture_default_str();
    fit->add_flag("--diagonal", fit_opt.diagonal, "Keep only covariance diagonals");
    fit->add_flag("!--uncentered", fit_opt.centered, "Use the uncentered second moment");
    fit->add_option("-o,--output", fit_out, "Model JSON path (default: stdout)");
    fit_csv.attach(*fit);

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Trace the calibration curve and select t*");
    std::string cal_model, cal_data, cal_out = ".";
    CsvOptions cal_csv;
    TargetOptions cal_target;
    double epsilon = 1e-12;
    cal->add_option("--model", cal_model, "Model JSON")->required();
    cal->add_option("calib", cal_data, "Calibration CSV")->required()->check(CLI::ExistingFile);
    cal_target.attach(*cal);
    cal->add_option("--epsilon", epsilon, "Smallest grid threshold")->capture_default_str();
    cal->add_option("--output-dir", cal_out, "Directory for selection.json and curve.csv")->capture_default_str();
    cal_csv.attach(*cal);

    // apply
    auto* app_cmd = app.add_subcommand("apply", "Label rows with the selected threshold (0 = abstain)");
    std::string ap_model, ap_sel, ap_data, ap_out;
    CsvOptions ap_csv;
    bool unlabeled = false;
    app_cmd->add_option("--model", ap_model, "Model JSON")->required();
    app_cmd->add_option("--selection", ap_sel, "Selection JSON from calibrate")->required();
    app_cmd->add_option("data", ap_data, "CSV to label")->required()->check(CLI::ExistingFile);
    app_cmd->add_flag("--unlabeled", unlabeled, "The CSV has no label column");
    app_cmd->add_option("-o,--output", ap_out, "Labels CSV path (default: stdout)");
    ap_csv.attach(*app_cmd);

    // study
    auto* study = app.add_subcommand("study", "Run a packaged experiment");
    StudyArgs sa;
    study->add_option("name", sa.name, "Study name")
        ->required()
        ->check(CLI::IsMember({"separation", "dimension", "naive", "ionosphere", "ozone-full", "ozone-reduced"}));
    study->add_option("--seed", sa.opts.seed, "Base seed")->capture_default_str();
    study->add_option("--resamples", sa.resamples, "Resamples per arm (default 20; 50 for naive)");
    sa.target.attach(*study);
    study->add_option("--ridge", sa.opts.fit.ridge, "Relative covariance ridge")->capture_default_str();
    study->add_flag("--diagonal", sa.opts.fit.diagonal, "Fit diagonal covariances");
    study->add_option("--epsilon", sa.opts.epsilon, "Smallest grid threshold")->capture_default_str();
    study->add_flag("--oracle,!--no-oracle", sa.opts.oracle, "Add arms scored with the true parameters (simulations)");
    study->add_option("--top-k", sa.top_k, "Keep the k features most correlated with the label");
    study->add_option("--tvd-samples", sa.opts.tvd_samples, "Samples per TVD estimate")->capture_default_str();
    study->add_option("--data", sa.data, "Data file for the real-data studies");
    study->add_option("--output-dir", sa.out_dir, "Write summary.json, arms.csv, trials.csv and curves here");

    // tvd
    auto* tvd = app.add_subcommand("tvd", "Estimate the total variation distance between two Gaussians");
    std::string tvd_f, tvd_g, tvd_out;
    std::size_t tvd_n = 100000;
    seed_t tvd_seed = 0;
    tvd->add_option("f", tvd_f, "Component JSON file or inline JSON: {\"mean\": [...], \"covariance\" | \"variance\"}")
        ->required();
    tvd->add_option("g", tvd_g, "Component sampled from")->required();
    tvd->add_option("--samples", tvd_n, "Monte-Carlo samples")->capture_default_str();
    tvd->add_option("--seed", tvd_seed, "Random seed")->capture_default_str();
    tvd->add_option("-o,--output", tvd_out, "JSON path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return cmd_simulate(scenario_path, sc, sim_seed, sim_out);
        if (*fit) return cmd_fit(train_path, fit_csv, fit_opt, fit_out);
        if (*cal) return cmd_calibrate(cal_model, cal_data, cal_csv, cal_target, epsilon, cal_out);
        if (*app_cmd) return cmd_apply(ap_model, ap_sel, ap_data, ap_csv, unlabeled, ap_out);
        if (*study) return cmd_study(std::move(sa));
        if (*tvd) return cmd_tvd(tvd_f, tvd_g, tvd_n, tvd_seed, tvd_out);
    } catch (const argument_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
