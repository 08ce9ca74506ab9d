#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lqtrack/estimator.hpp"
#include "lqtrack/lqr.hpp"
#include "lqtrack/model.hpp"
#include "lqtrack/regressor.hpp"
#include "lqtrack/scenario_json.hpp"
#include "lqtrack/sim.hpp"

namespace lqtrack {

// ============================================================================
// Step 1: finite-time parameter estimation (plant path + exosystem path)
// ============================================================================

namespace detail {

/// One DREM regression path wired into the coupled state vector.
struct PathWiring {
    std::string label;       // column suffix ("" for the plant path, "_d" for the exosystem path)
    FilterBank bank;
    Matrix truth;            // Theta* for error logging
    int filt_off = 0;        // [psi; F; Hy]
    int theta_off = 0;       // estimate, k x n (column-major within the slice)
    int aux_off = 0;         // [int_delta_sq; s0]

    int k() const { return bank.k(); }
    int n() const { return bank.n_out; }

    Matrix theta(const Vector& y) const {
        return Eigen::Map<const Matrix>(y.data() + theta_off, k(), n());
    }
    Vector filt(const Vector& y) const { return y.segment(filt_off, bank.state_size()); }
    double int_delta_sq(const Vector& y) const { return y(aux_off); }
    double s0(const Vector& y) const { return y(aux_off + 1); }
};

inline Matrix reconstruct_for_log(const Matrix& Theta, const Matrix& Theta0, double s0,
                                  const std::optional<double>& sigma) {
    if (sigma) {
        const double s = clamp_s(s0, *sigma);
        return (Theta - s * Theta0) / (1.0 - s);
    }
    if (s0 >= 1.0) return Theta;  // no excitation yet; the formula is 0/0 at s0 = 1
    return (Theta - s0 * Theta0) / (1.0 - s0);
}

} // namespace detail

/// Coupled plant + exosystem + filter-bank + estimator dynamics for Step 1.
class EstimationSystem {
  public:
    explicit EstimationSystem(const ScenarioConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const int n = cfg_.plant.n();
        const int m = cfg_.plant.m();

        layout_.add("x", n);
        if (cfg_.exo) layout_.add("v", n);

        // plant path: regressor [x; u] or [x; u; v]
        {
            const auto blocks = cfg_.psi_blocks();
            int k = 0;
            for (int b : blocks) k += b;
            auto lams = cfg_.filters.bank.empty() ? FilterConfig::default_bank(k) : cfg_.filters.bank;
            psi_.label = "";
            psi_.bank.lambda0 = cfg_.filters.lambda0;
            psi_.bank.lambdas = Eigen::Map<const Vector>(lams.data(), static_cast<int>(lams.size()));
            psi_.bank.n_out = n;
            psi_.bank.validate();
            psi_.truth = Matrix::Zero(k, n);
            psi_.truth.topRows(n) = cfg_.plant.A.transpose();
            psi_.truth.middleRows(n, m) = cfg_.plant.B.transpose();
            if (cfg_.estimate_coupling) psi_.truth.bottomRows(n) = cfg_.plant.C.transpose();
            psi_.filt_off = layout_.add("psi_filt", psi_.bank.state_size());
            psi_.theta_off = layout_.add("Psi", k * n);
            psi_.aux_off = layout_.add("psi_aux", 2);
        }

        // exosystem path: regressor z = filtered w (equal to the filtered v when autonomous)
        if (cfg_.exo) {
            const int q = cfg_.exo->q();
            auto lams = cfg_.filters.bank_d.empty() ? FilterConfig::default_bank(q) : cfg_.filters.bank_d;
            detail::PathWiring d;
            d.label = "_d";
            d.bank.lambda0 = cfg_.filters.lambda0;
            d.bank.lambdas = Eigen::Map<const Vector>(lams.data(), static_cast<int>(lams.size()));
            d.bank.n_out = n;
            d.bank.validate();
            d.truth = cfg_.exo->D.transpose();
            if (!cfg_.exo->autonomous) vl_off_ = layout_.add("v_l", n);
            d.filt_off = layout_.add("d_filt", d.bank.state_size());
            d.theta_off = layout_.add("ThetaD", q * n);
            d.aux_off = layout_.add("d_aux", 2);
            d_ = d;
        }
    }

    const StateLayout& layout() const { return layout_; }
    const ScenarioConfig& config() const { return cfg_; }
    const detail::PathWiring& psi_path() const { return psi_; }
    const std::optional<detail::PathWiring>& d_path() const { return d_; }

    Vector initial_state() const {
        Vector y = Vector::Zero(layout_.size());
        y.segment(layout_.offset("x"), cfg_.plant.n()) = cfg_.x0;
        if (cfg_.exo) y.segment(layout_.offset("v"), cfg_.plant.n()) = cfg_.v0;
        y(psi_.aux_off + 1) = 1.0;  // s0(0) = 1
        if (d_) y(d_->aux_off + 1) = 1.0;
        return y;
    }

    Vector operator()(double t, const Vector& y) const {
        const int n = cfg_.plant.n();
        Vector dy = Vector::Zero(layout_.size());

        const Vector x = y.segment(layout_.offset("x"), n);
        const Vector u = cfg_.u_excitation.eval(t);
        const Vector v = cfg_.exo ? Vector(y.segment(layout_.offset("v"), n)) : Vector(Vector::Zero(n));

        dy.segment(layout_.offset("x"), n) = plant_rhs(cfg_.plant, x, u, v);
        if (cfg_.exo) {
            const Vector w = cfg_.exo->autonomous ? v : cfg_.w_excitation->eval(t);
            dy.segment(layout_.offset("v"), n) = exo_rhs(*cfg_.exo, w);
        }

        // plant path
        {
            Vector raw(psi_.k());
            raw.head(n) = x;
            raw.segment(n, cfg_.plant.m()) = u;
            if (cfg_.estimate_coupling) raw.tail(n) = v;
            const Vector filt = psi_.filt(y);
            const Vector psi_x = filt.head(n);
            const Vector psi_y = assemble_regressand(cfg_.filters.lambda0, psi_x, x, cfg_.x0, t);
            dy.segment(psi_.filt_off, psi_.bank.state_size()) = psi_.bank.rhs(filt, raw, psi_y);
            apply_estimator(psi_, y, dy);
        }

        // exosystem path
        if (d_) {
            const Vector filt = d_->filt(y);
            Vector v_l;
            Vector raw;
            if (cfg_.exo->autonomous) {
                v_l = filt.head(n);  // z and the filtered v coincide
                raw = v;
            } else {
                v_l = y.segment(vl_off_, n);
                dy.segment(vl_off_, n) = -cfg_.filters.lambda0 * v_l + v;
                raw = cfg_.w_excitation->eval(t);
            }
            const Vector y_d = filtered_derivative(v, cfg_.v0, v_l, cfg_.filters.lambda0, t);
            dy.segment(d_->filt_off, d_->bank.state_size()) = d_->bank.rhs(filt, raw, y_d);
            apply_estimator(*d_, y, dy);
        }
        return dy;
    }

    std::vector<std::string> log_names() const {
        std::vector<std::string> names;
        const int n = cfg_.plant.n();
        for (int i = 1; i <= n; ++i) names.push_back("x_" + std::to_string(i));
        if (cfg_.exo)
            for (int i = 1; i <= n; ++i) names.push_back("v_" + std::to_string(i));
        append_path_names(names, psi_, "Psi");
        if (d_) append_path_names(names, *d_, "Theta");
        return names;
    }

    Vector log_row(double t, const Vector& y) const {
        (void)t;
        const int n = cfg_.plant.n();
        std::vector<double> row;
        for (int i = 0; i < n; ++i) row.push_back(y(layout_.offset("x") + i));
        if (cfg_.exo)
            for (int i = 0; i < n; ++i) row.push_back(y(layout_.offset("v") + i));
        append_path_row(row, psi_, y);
        if (d_) append_path_row(row, *d_, y);
        return Eigen::Map<const Vector>(row.data(), static_cast<int>(row.size()));
    }

  private:
    void apply_estimator(const detail::PathWiring& p, const Vector& y, Vector& dy) const {
        const DremSignals sig = p.bank.mix_at(p.filt(y), p.int_delta_sq(y));
        EstimatorState st;
        st.Theta = p.theta(y);
        st.alpha = cfg_.alpha;
        st.s0 = p.s0(y);
        const Matrix dTheta = update_rhs(st, sig);
        Eigen::Map<Matrix>(dy.data() + p.theta_off, p.k(), p.n()) = dTheta;
        dy(p.aux_off) = sig.delta * sig.delta;
        dy(p.aux_off + 1) = s0_rhs(st, sig.delta);
    }

    void append_path_names(std::vector<std::string>& names, const detail::PathWiring& p,
                           const std::string& theta_label) const {
        names.push_back("delta" + p.label);
        names.push_back("int_delta_sq" + p.label);
        names.push_back("s0" + p.label);
        for (int i = 1; i <= p.k(); ++i)
            for (int j = 1; j <= p.n(); ++j)
                names.push_back(theta_label + "_" + std::to_string(i) + "_" + std::to_string(j));
        for (int i = 1; i <= p.k(); ++i)
            for (int j = 1; j <= p.n(); ++j)
                names.push_back(theta_label + "F_" + std::to_string(i) + "_" + std::to_string(j));
        for (int i = 1; i <= p.k(); ++i)
            for (int j = 1; j <= p.n(); ++j)
                names.push_back("err" + p.label + "_" + std::to_string(i) + "_" + std::to_string(j));
    }

    void append_path_row(std::vector<double>& row, const detail::PathWiring& p, const Vector& y) const {
        const DremSignals sig = p.bank.mix_at(p.filt(y), p.int_delta_sq(y));
        const Matrix Theta = p.theta(y);
        const Matrix Theta0 = Matrix::Zero(p.k(), p.n());
        const Matrix ThetaF = detail::reconstruct_for_log(Theta, Theta0, p.s0(y), cfg_.sigma);
        row.push_back(sig.delta);
        row.push_back(sig.int_delta_sq);
        row.push_back(p.s0(y));
        for (int i = 0; i < p.k(); ++i)
            for (int j = 0; j < p.n(); ++j) row.push_back(Theta(i, j));
        for (int i = 0; i < p.k(); ++i)
            for (int j = 0; j < p.n(); ++j) row.push_back(ThetaF(i, j));
        for (int i = 0; i < p.k(); ++i)
            for (int j = 0; j < p.n(); ++j) row.push_back(Theta(i, j) - p.truth(i, j));
    }

    ScenarioConfig cfg_;
    StateLayout layout_;
    detail::PathWiring psi_;
    std::optional<detail::PathWiring> d_;
    int vl_off_ = -1;
};

struct PathEstimate {
    Matrix Theta;               // asymptotic estimate at t_c
    FiniteTimeEstimate finite;  // finite-time reconstruction
    double int_delta_sq = 0.0;
    double s0 = 1.0;
    double sigma_used = 0.0;
    bool sigma_back_calculated = false;
    double threshold = 0.0;     // required int delta^2 for sigma_used
    double rel_error = 0.0;     // reconstruction vs simulation truth
};

struct EstimationResult {
    TimeSeries series;
    PathEstimate psi;
    std::optional<PathEstimate> d;
    Matrix A_hat, B_hat, C_hat;
    std::optional<Matrix> D_hat;
};

namespace detail {

inline PathEstimate close_path(const PathWiring& p, const Vector& y_end, const ScenarioConfig& cfg) {
    PathEstimate out;
    out.Theta = p.theta(y_end);
    out.int_delta_sq = p.int_delta_sq(y_end);
    out.s0 = p.s0(y_end);

    if (cfg.sigma) {
        out.sigma_used = *cfg.sigma;
    } else {
        if (out.s0 >= 1.0)
            throw IeNotAchievedError("regression" + p.label, out.int_delta_sq,
                                     std::numeric_limits<double>::infinity());
        out.sigma_used = back_calculate_sigma(out.s0);
        out.sigma_back_calculated = true;
    }
    out.threshold = ie_threshold(cfg.alpha, out.sigma_used);

    EstimatorState st;
    st.Theta = out.Theta;
    st.Theta0 = Matrix::Zero(p.k(), p.n());
    st.s0 = out.s0;
    st.alpha = cfg.alpha;
    const auto est = finite_time_estimate(st, out.sigma_used, cfg.t_c);
    if (!est.ie_satisfied)
        throw IeNotAchievedError("regression" + p.label, out.int_delta_sq, out.threshold);
    out.finite = est;
    out.rel_error = ((est.ThetaF - p.truth).cwiseAbs().array() /
                     (1.0 + p.truth.cwiseAbs().array())).maxCoeff();
    return out;
}

} // namespace detail

/// Algorithm Step 1: integrate the coupled system on [0, t_c] and reconstruct
/// the parameter matrices. Throws IeNotAchievedError when the excitation
/// integral stays below the level sigma demands.
inline EstimationResult run_estimate(const ScenarioConfig& cfg) {
    EstimationSystem sys(cfg);
    EstimationResult out;
    out.series.step = cfg.step * cfg.log_every;
    out.series.names = sys.log_names();

    Vector y_end = sys.initial_state();
    double t = 0.0;
    out.series.time.push_back(t);
    out.series.rows.push_back(sys.log_row(t, y_end));
    const long steps = std::lround(cfg.t_c / cfg.step);
    for (long i = 1; i <= steps; ++i) {
        y_end = rk4_step(sys, t, y_end, cfg.step);
        t = static_cast<double>(i) * cfg.step;
        if (!y_end.allFinite()) throw IntegrationError("estimation state became non-finite", t);
        if (i % cfg.log_every == 0 || i == steps) {
            out.series.time.push_back(t);
            out.series.rows.push_back(sys.log_row(t, y_end));
        }
    }

    const int n = cfg.plant.n();
    const int m = cfg.plant.m();
    out.psi = detail::close_path(sys.psi_path(), y_end, cfg);
    out.A_hat = out.psi.finite.ThetaF.topRows(n).transpose();
    out.B_hat = out.psi.finite.ThetaF.middleRows(n, m).transpose();
    out.C_hat = cfg.estimate_coupling ? Matrix(out.psi.finite.ThetaF.bottomRows(n).transpose())
                                      : Matrix(Matrix::Zero(n, n));
    if (sys.d_path()) {
        out.d = detail::close_path(*sys.d_path(), y_end, cfg);
        out.D_hat = out.d->finite.ThetaF.transpose();
    }
    return out;
}

// ============================================================================
// Step 2: gain search on the (estimated) augmented system
// ============================================================================

struct SolveResult {
    DiscountedLqrProblem problem;
    StabilityInfo init_check;
    GainSearchTrace trace;
    Matrix K;  // terminal gain
};

inline SolveResult run_solve(const ScenarioConfig& cfg, const Matrix& A, const Matrix& B,
                             const Matrix& C, const Matrix& D,
                             std::optional<Matrix> K0_opt = std::nullopt) {
    LtiPlant plant{A, B, C};
    Exosystem exo{D, true};
    const auto aug = build_augmented(plant, exo, cfg.Q, cfg.R, cfg.gamma, cfg.pi_or_default());
    SolveResult out;
    out.problem = DiscountedLqrProblem::from(aug);
    const Matrix K0 = K0_opt ? *K0_opt : Matrix(Matrix::Zero(plant.m(), 2 * plant.n()));
    out.init_check = is_stabilizing(out.problem, K0);
    if (!out.init_check.stabilizing)
        throw NotStabilizingError("run_solve: K0 rejected by the eigenvalue check",
                                  out.init_check.spectrum);
    out.trace = gradient_flow(out.problem, K0, cfg.tol_grad, cfg.max_flow_time);
    out.K = out.trace.terminal().K;
    return out;
}

/// Solve against the scenario's own (true) matrices.
inline SolveResult run_solve(const ScenarioConfig& cfg, std::optional<Matrix> K0 = std::nullopt) {
    detail::require(cfg.exo.has_value() && cfg.exo->autonomous,
                    "run_solve: gain synthesis requires an autonomous exosystem");
    return run_solve(cfg, cfg.plant.A, cfg.plant.B, cfg.plant.C, cfg.exo->D, std::move(K0));
}

// ============================================================================
// Step 3: closed-loop tracking rollout
// ============================================================================

/// Fresh rollout of u = -K col(x - v, v) from (x0, v0) over [0, t_end].
inline TimeSeries run_track(const ScenarioConfig& cfg, const Matrix& K) {
    detail::require(cfg.exo.has_value(), "run_track: tracking requires an exosystem");
    const int n = cfg.plant.n();
    detail::require(K.rows() == cfg.plant.m() && K.cols() == 2 * n, "run_track: K shape");

    auto rhs = [&cfg, &K, n](double t, const Vector& y) {
        const Vector x = y.head(n);
        const Vector v = y.tail(n);
        Vector X(2 * n);
        X.head(n) = x - v;
        X.tail(n) = v;
        const Vector u = -K * X;
        Vector dy(2 * n);
        dy.head(n) = plant_rhs(cfg.plant, x, u, v);
        const Vector w = cfg.exo->autonomous ? v : cfg.w_excitation->eval(t);
        dy.tail(n) = exo_rhs(*cfg.exo, w);
        return dy;
    };

    std::vector<std::string> names;
    for (int i = 1; i <= n; ++i) names.push_back("x_" + std::to_string(i));
    for (int i = 1; i <= n; ++i) names.push_back("v_" + std::to_string(i));
    for (int i = 1; i <= cfg.plant.m(); ++i) names.push_back("u_" + std::to_string(i));
    names.push_back("err_norm");

    Vector y0(2 * n);
    y0.head(n) = cfg.x0;
    y0.tail(n) = cfg.v0;

    return integrate(rhs, y0, 0.0, cfg.t_end, cfg.step, cfg.log_every, names,
                     [&cfg, &K, n](double, const Vector& y) {
                         Vector X(2 * n);
                         X.head(n) = y.head(n) - y.tail(n);
                         X.tail(n) = y.tail(n);
                         const Vector u = -K * X;
                         Vector row(2 * n + cfg.plant.m() + 1);
                         row.head(2 * n) = y;
                         row.segment(2 * n, cfg.plant.m()) = u;
                         row(row.size() - 1) = X.head(n).norm();
                         return row;
                     });
}

// ============================================================================
// Report and artifact emission
// ============================================================================

inline json spectrum_to_json(const Eigen::VectorXcd& spec) {
    json out = json::array();
    for (int i = 0; i < spec.size(); ++i) out.push_back({spec(i).real(), spec(i).imag()});
    return out;
}

inline json estimation_report(const ScenarioConfig& cfg, const EstimationResult& est) {
    auto path_json = [](const PathEstimate& p) {
        return json{{"sigma", p.sigma_used},
                    {"sigma_back_calculated", p.sigma_back_calculated},
                    {"int_delta_sq", p.int_delta_sq},
                    {"ie_threshold", p.threshold},
                    {"s0", p.s0},
                    {"ie_satisfied", p.finite.ie_satisfied},
                    {"max_rel_error", p.rel_error}};
    };
    json j;
    j["t_c"] = cfg.t_c;
    j["plant_path"] = path_json(est.psi);
    j["A_hat"] = matrix_to_json(est.A_hat);
    j["B_hat"] = matrix_to_json(est.B_hat);
    if (cfg.estimate_coupling) j["C_hat"] = matrix_to_json(est.C_hat);
    if (est.d) {
        j["exosystem_path"] = path_json(*est.d);
        j["D_hat"] = matrix_to_json(*est.D_hat);
    }
    return j;
}

inline json synthesis_report(const SolveResult& sol) {
    const auto& term = sol.trace.terminal();
    return json{{"K", matrix_to_json(sol.K)},
                {"cost", term.cost},
                {"grad_norm", term.grad_norm()},
                {"iterations", sol.trace.steps.size() - 1},
                {"converged", sol.trace.converged},
                {"flow_time", term.t},
                {"initial_spectrum", spectrum_to_json(sol.init_check.spectrum)},
                {"terminal_spectrum",
                 spectrum_to_json(is_stabilizing(sol.problem, sol.K).spectrum)},
                {"mu", sol.trace.constants.pl_mu},
                {"lipschitz_R", sol.trace.constants.lipschitz_R}};
}

inline TimeSeries search_trace_series(const GainSearchTrace& trace) {
    TimeSeries ts;
    const auto& K0 = trace.steps.front().K;
    for (int i = 0; i < K0.rows(); ++i)
        for (int j = 0; j < K0.cols(); ++j)
            ts.names.push_back("K_" + std::to_string(i * K0.cols() + j + 1));
    ts.names.push_back("cost");
    ts.names.push_back("grad_norm");
    for (const auto& s : trace.steps) {
        Vector row(K0.size() + 2);
        int c = 0;
        for (int i = 0; i < s.K.rows(); ++i)
            for (int j = 0; j < s.K.cols(); ++j) row(c++) = s.K(i, j);
        row(c++) = s.cost;
        row(c) = s.grad_norm();
        ts.time.push_back(s.t);
        ts.rows.push_back(row);
    }
    return ts;
}

struct PipelineResult {
    EstimationResult estimation;
    SolveResult solve;
    TimeSeries track;
    json report;
};

inline void write_gnuplot_script(const std::string& dir, const TimeSeries& est,
                                 const TimeSeries& track) {
    std::ofstream gp(dir + "/plots.gp");
    gp << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set grid\n"
       << "set terminal pngcairo size 1200,900\n\n"
       << "set output 'estimate.png'\n"
       << "set multiplot layout 2,1\n"
       << "plot 'estimate.csv' using 1:" << est.column_index("delta") + 2 << " with lines title 'delta'\n"
       << "plot 'estimate.csv' using 1:" << est.column_index("s0") + 2 << " with lines title 's0'\n"
       << "unset multiplot\n\n"
       << "set output 'search.png'\n"
       << "set logscale y\n"
       << "plot 'search.csv' using 1:'grad_norm' with lines\n"
       << "unset logscale y\n\n"
       << "set output 'track.png'\n"
       << "plot 'track.csv' using 1:" << track.column_index("err_norm") + 2
       << " with lines title '|x - v|'\n";
}

/// Algorithm Steps 1-3 end to end; emits estimate.csv, search.csv, track.csv
/// and report.json under out_dir.
inline PipelineResult run_pipeline(const ScenarioConfig& cfg, const std::string& out_dir,
                                   bool emit_gnuplot = false) {
    std::filesystem::create_directories(out_dir);
    PipelineResult out;

    out.estimation = run_estimate(cfg);
    out.estimation.series.write_csv(out_dir + "/estimate.csv");

    const Matrix D_hat = out.estimation.D_hat
                             ? *out.estimation.D_hat
                             : Matrix(Matrix::Zero(cfg.plant.n(), cfg.plant.n()));
    out.solve = run_solve(cfg, out.estimation.A_hat, out.estimation.B_hat, out.estimation.C_hat,
                          D_hat);
    search_trace_series(out.solve.trace).write_csv(out_dir + "/search.csv");

    out.track = run_track(cfg, out.solve.K);
    out.track.write_csv(out_dir + "/track.csv");

    out.report["scenario"] = cfg.name;
    out.report["estimation"] = estimation_report(cfg, out.estimation);
    out.report["synthesis"] = synthesis_report(out.solve);
    out.report["tracking"] = {{"terminal_error", out.track.rows.back()(out.track.column_index("err_norm"))},
                              {"t_end", cfg.t_end}};
    out.report["files"] = {{"estimate", "estimate.csv"},
                           {"search", "search.csv"},
                           {"track", "track.csv"}};
    std::ofstream rep(out_dir + "/report.json");
    rep << out.report.dump(2) << "\n";

    if (emit_gnuplot) write_gnuplot_script(out_dir, out.estimation.series, out.track);
    return out;
}

} // namespace lqtrack
