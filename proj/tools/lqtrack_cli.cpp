// Command-line front end: estimate / solve / track / pipeline / kleinman.
//
// Exit codes: 0 success, 1 bad configuration or usage, 2 interval excitation
// not achieved, 3 initial gain rejected, 4 integration blow-up.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lqtrack/lqtrack.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIeFailure = 2;
constexpr int kExitBadInit = 3;
constexpr int kExitBlowUp = 4;

struct Overrides {
    std::optional<double> step, t_c, sigma, alpha, gamma, tol;
};

void apply(const Overrides& ov, lqtrack::ScenarioConfig& cfg) {
    if (ov.step) cfg.step = *ov.step;
    if (ov.t_c) cfg.t_c = *ov.t_c;
    if (ov.sigma) cfg.sigma = *ov.sigma;
    if (ov.alpha) cfg.alpha = *ov.alpha;
    if (ov.gamma) cfg.gamma = *ov.gamma;
    if (ov.tol) cfg.tol_grad = *ov.tol;
    cfg.validate();
}

void write_report(const std::string& out_dir, const lqtrack::json& j) {
    std::filesystem::create_directories(out_dir);
    std::ofstream rep(out_dir + "/report.json");
    rep << j.dump(2) << "\n";
    std::cout << "report: " << out_dir << "/report.json\n";
}

lqtrack::Matrix parse_gain(const std::string& csv, int m, int cols) {
    std::vector<double> vals;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (static_cast<int>(vals.size()) != m * cols)
        throw lqtrack::ScenarioError("--gain needs " + std::to_string(m * cols) + " entries");
    lqtrack::Matrix K(m, cols);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < cols; ++j) K(i, j) = vals[static_cast<std::size_t>(i * cols + j)];
    return K;
}

void print_spectrum(const Eigen::VectorXcd& spec) {
    for (int i = 0; i < spec.size(); ++i)
        std::printf("  %+.6f %+.6fi\n", spec(i).real(), spec(i).imag());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-time identification and discounted LQ tracking synthesis"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string gain_csv;
    std::string report_path;
    bool gnuplot = false;
    Overrides ov;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "scenario JSON path")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--step", ov.step, "integrator step (s)");
        sub->add_option("--tc", ov.t_c, "estimation horizon (s)");
        sub->add_option("--sigma", ov.sigma, "excitation level in (0,1)");
        sub->add_option("--alpha", ov.alpha, "learning rate");
        sub->add_option("--gamma", ov.gamma, "discount factor");
        sub->add_option("--tol", ov.tol, "gradient-norm stopping threshold");
    };

    auto* c_estimate = app.add_subcommand("estimate", "Step 1: finite-time parameter estimation");
    add_common(c_estimate);
    auto* c_solve = app.add_subcommand("solve", "Step 2: gain search on the scenario matrices");
    add_common(c_solve);
    c_solve->add_option("--gain", gain_csv, "initial gain K0, comma-separated row-major");
    auto* c_track = app.add_subcommand("track", "Step 3: closed-loop tracking rollout");
    add_common(c_track);
    c_track->add_option("--gain", gain_csv, "gain K, comma-separated row-major");
    c_track->add_option("--report", report_path, "report.json to take the gain from");
    auto* c_pipeline = app.add_subcommand("pipeline", "Steps 1-3 end to end");
    add_common(c_pipeline);
    c_pipeline->add_flag("--gnuplot", gnuplot, "emit plots.gp next to the CSVs");
    auto* c_kleinman = app.add_subcommand("kleinman", "ARE oracle via Kleinman iteration");
    add_common(c_kleinman);

    CLI11_PARSE(app, argc, argv);

    try {
        lqtrack::ScenarioConfig cfg = lqtrack::load_scenario(config_path);
        apply(ov, cfg);
        std::filesystem::create_directories(out_dir);

        if (c_estimate->parsed()) {
            const auto est = lqtrack::run_estimate(cfg);
            est.series.write_csv(out_dir + "/estimate.csv");
            lqtrack::json j;
            j["scenario"] = cfg.name;
            j["estimation"] = lqtrack::estimation_report(cfg, est);
            j["files"] = {{"estimate", "estimate.csv"}};
            write_report(out_dir, j);
            std::printf("plant path: int delta^2 = %.4f (threshold %.4f), rel error %.3e\n",
                        est.psi.int_delta_sq, est.psi.threshold, est.psi.rel_error);
            if (est.d)
                std::printf("exo path:   int delta^2 = %.4f (threshold %.4f), rel error %.3e\n",
                            est.d->int_delta_sq, est.d->threshold, est.d->rel_error);
        } else if (c_solve->parsed()) {
            std::optional<lqtrack::Matrix> K0;
            if (!gain_csv.empty())
                K0 = parse_gain(gain_csv, cfg.plant.m(), 2 * cfg.plant.n());
            const auto sol = lqtrack::run_solve(cfg, K0);
            lqtrack::search_trace_series(sol.trace).write_csv(out_dir + "/search.csv");
            lqtrack::json j;
            j["scenario"] = cfg.name;
            j["synthesis"] = lqtrack::synthesis_report(sol);
            j["files"] = {{"search", "search.csv"}};
            write_report(out_dir, j);
            std::cout << "terminal K: " << sol.K << "\n";
        } else if (c_track->parsed()) {
            lqtrack::Matrix K;
            if (!gain_csv.empty()) {
                K = parse_gain(gain_csv, cfg.plant.m(), 2 * cfg.plant.n());
            } else if (!report_path.empty()) {
                std::ifstream in(report_path);
                if (!in.good()) throw lqtrack::ScenarioError("cannot open " + report_path);
                lqtrack::json j;
                in >> j;
                K = lqtrack::json_to_matrix(j.at("synthesis").at("K"), "synthesis.K");
            } else {
                // no gain given: fall back to the Kleinman oracle on the scenario matrices
                const auto sol = lqtrack::run_solve(cfg);
                K = lqtrack::kleinman(sol.problem, lqtrack::Matrix::Zero(cfg.plant.m(), 2 * cfg.plant.n())).K;
            }
            const auto ts = lqtrack::run_track(cfg, K);
            ts.write_csv(out_dir + "/track.csv");
            lqtrack::json j;
            j["scenario"] = cfg.name;
            j["tracking"] = {{"terminal_error", ts.rows.back()(ts.column_index("err_norm"))},
                             {"t_end", cfg.t_end}};
            j["files"] = {{"track", "track.csv"}};
            write_report(out_dir, j);
            std::printf("terminal |x - v| = %.6f\n", ts.rows.back()(ts.column_index("err_norm")));
        } else if (c_pipeline->parsed()) {
            const auto res = lqtrack::run_pipeline(cfg, out_dir, gnuplot);
            std::cout << "terminal K: " << res.solve.K << "\n";
            std::printf("terminal |x - v| = %.6f\n",
                        res.report["tracking"]["terminal_error"].get<double>());
        } else if (c_kleinman->parsed()) {
            const auto sol_problem = [&cfg] {
                lqtrack::detail::require(cfg.exo.has_value(), "kleinman: scenario needs an exosystem");
                const auto aug = lqtrack::build_augmented(cfg.plant, *cfg.exo, cfg.Q, cfg.R,
                                                          cfg.gamma, cfg.pi_or_default());
                return lqtrack::DiscountedLqrProblem::from(aug);
            }();
            const auto kr = lqtrack::kleinman(
                sol_problem, lqtrack::Matrix::Zero(cfg.plant.m(), 2 * cfg.plant.n()));
            lqtrack::json j;
            j["scenario"] = cfg.name;
            j["kleinman"] = {{"K", lqtrack::matrix_to_json(kr.K)},
                             {"P", lqtrack::matrix_to_json(kr.P)},
                             {"iterations", kr.iterations},
                             {"spectrum", lqtrack::spectrum_to_json(
                                              lqtrack::is_stabilizing(sol_problem, kr.K).spectrum)}};
            write_report(out_dir, j);
            std::cout << "K* = " << kr.K << "\n";
            std::cout << "P* =\n" << kr.P << "\n";
        }
    } catch (const lqtrack::IeNotAchievedError& e) {
        std::cerr << "IE failure: " << e.what() << "\n";
        return kExitIeFailure;
    } catch (const lqtrack::NotStabilizingError& e) {
        std::cerr << "initialization rejected: " << e.what() << "\n";
        if (e.spectrum.size() > 0) print_spectrum(e.spectrum);
        return kExitBadInit;
    } catch (const lqtrack::IntegrationError& e) {
        std::cerr << "integration blow-up at t = " << e.t_fail << ": " << e.what() << "\n";
        return kExitBlowUp;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
