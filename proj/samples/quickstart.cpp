// Fit a classifier, calibrate an abstention threshold on held-out rows for a
// target misclassification rate, then check the rate on fresh test rows.

#include <tcal/tcal.hpp>

#include <cstdio>

int main() {
    tcal::MixtureScenario scenario;
    scenario.d = 10;
    scenario.separation = 1.5;
    scenario.n = 900;
    scenario.seed = 2024;
    const auto sim = tcal::generate(scenario);
    const auto parts = tcal::split(sim.data, {300, 300, 300, /*seed=*/1});

    const tcal::GaussianMixtureClassifier model(tcal::fit_gmm(parts.train));

    const auto calib_scores = model.score(parts.calib.features);
    const auto curve = tcal::sweep(calib_scores, parts.calib.labels, tcal::build_grid(calib_scores));
    const auto sel = tcal::select_threshold(curve, tcal::TargetKind::mcp, 0.1);
    std::printf("t* = %.4g: hold-out MCP %.3f at PA %.3f\n", sel.t_star, sel.achieved.mcp, sel.achieved.pa);

    const auto test_scores = model.score(parts.test.features);
    const auto labels = tcal::apply_threshold(test_scores, sel.t_star).labels;
    std::size_t assigned = 0, wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == tcal::abstain_label) continue;
        ++assigned;
        wrong += labels[i] != parts.test.labels[i];
    }
    std::printf("test: %zu of %zu assigned, %zu misclassified (MCP %.3f)\n", assigned, labels.size(), wrong,
                assigned ? static_cast<double>(wrong) / static_cast<double>(assigned) : 0.0);

    const auto all = tcal::evaluate_at(test_scores, parts.test.labels, curve.records.front().t);
    std::printf("without abstention: MCP %.3f\n", all.mcp);
    return 0;
}
