#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lqtrack {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Invalid scenario data (dimension mismatch, bad weights, ...).
struct ScenarioError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// State or derivative left the finite range during integration.
struct IntegrationError : std::runtime_error {
    double t_fail;
    explicit IntegrationError(const std::string& what, double t)
        : std::runtime_error(what), t_fail(t) {}
};

/// Interval-excitation level was not reached by the configured horizon.
struct IeNotAchievedError : std::runtime_error {
    double achieved;
    double threshold;
    IeNotAchievedError(const std::string& path, double achieved_, double threshold_)
        : std::runtime_error("IE condition not achieved on " + path + " path: int delta^2 = " +
                             std::to_string(achieved_) + " < " + std::to_string(threshold_)),
          achieved(achieved_), threshold(threshold_) {}
};

/// Gain outside the stabilizing set where the cost is finite.
struct NotStabilizingError : std::runtime_error {
    Eigen::VectorXcd spectrum;
    explicit NotStabilizingError(const std::string& what, Eigen::VectorXcd spec = {})
        : std::runtime_error(what), spectrum(std::move(spec)) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ScenarioError(msg);
}

inline bool is_symmetric(const Matrix& M, double tol = 1e-12) {
    return M.rows() == M.cols() && (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + M.cwiseAbs().maxCoeff());
}

inline bool is_positive_definite(const Matrix& M) {
    if (!is_symmetric(M)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    return es.eigenvalues().minCoeff() > 0.0;
}

inline bool is_positive_semidefinite(const Matrix& M, double tol = 1e-12) {
    if (!is_symmetric(M)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    return es.eigenvalues().minCoeff() >= -tol * (1.0 + M.cwiseAbs().maxCoeff());
}

} // namespace detail

// ============================================================================
// Plant, exosystem, augmented tracking system
// ============================================================================

/// dx/dt = A x + B u + C v with fully measurable state.
struct LtiPlant {
    Matrix A;  // n x n drift
    Matrix B;  // n x m input gain
    Matrix C;  // n x n exosystem coupling

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }

    void validate() const {
        detail::require(A.rows() > 0 && A.rows() == A.cols(), "plant A must be square and nonempty");
        detail::require(B.rows() == A.rows() && B.cols() > 0, "plant B must have n rows");
        detail::require(C.rows() == A.rows() && C.cols() == A.cols(), "plant C must be n x n");
        detail::require(A.allFinite() && B.allFinite() && C.allFinite(), "plant matrices must be finite");
    }
};

/// dv/dt = D w.  When autonomous, w == v (so D must be square).
struct Exosystem {
    Matrix D;  // n x q
    bool autonomous = true;

    int q() const { return static_cast<int>(D.cols()); }

    void validate(int n) const {
        detail::require(D.rows() == n, "exosystem D must have n rows");
        detail::require(D.cols() > 0 && D.allFinite(), "exosystem D must be finite and nonempty");
        if (autonomous) detail::require(D.cols() == n, "autonomous exosystem requires square D");
    }
};

/// State X = col(x - v, v), dynamics dX/dt = calA X + calB U.
struct AugmentedSystem {
    Matrix calA;  // 2n x 2n
    Matrix calB;  // 2n x m
    Matrix Qhat;  // 2n x 2n, diag(Q, 0)
    Matrix R;     // m x m
    double gamma = 0.0;
    Matrix Pi;    // 2n x 2n initial-state weighting

    int plant_dim() const { return static_cast<int>(calA.rows()) / 2; }
};

inline AugmentedSystem build_augmented(const LtiPlant& plant, const Exosystem& exo,
                                       const Matrix& Q, const Matrix& R, double gamma,
                                       const Matrix& Pi) {
    plant.validate();
    const int n = plant.n();
    const int m = plant.m();
    exo.validate(n);
    detail::require(exo.D.cols() == n, "augmentation requires square exosystem D");
    detail::require(Q.rows() == n && Q.cols() == n, "Q must be n x n");
    detail::require(detail::is_positive_definite(Q), "Q must be symmetric positive definite");
    detail::require(R.rows() == m && R.cols() == m, "R must be m x m");
    detail::require(detail::is_positive_definite(R), "R must be symmetric positive definite");
    detail::require(gamma >= 0.0, "gamma must be nonnegative");
    detail::require(Pi.rows() == 2 * n && Pi.cols() == 2 * n, "Pi must be 2n x 2n");
    detail::require(detail::is_positive_definite(Pi), "Pi must be symmetric positive definite");

    AugmentedSystem aug;
    aug.calA = Matrix::Zero(2 * n, 2 * n);
    aug.calA.topLeftCorner(n, n) = plant.A;
    aug.calA.topRightCorner(n, n) = plant.A + plant.C - exo.D;
    aug.calA.bottomRightCorner(n, n) = exo.D;
    aug.calB = Matrix::Zero(2 * n, m);
    aug.calB.topRows(n) = plant.B;
    aug.Qhat = Matrix::Zero(2 * n, 2 * n);
    aug.Qhat.topLeftCorner(n, n) = Q;
    aug.R = R;
    aug.gamma = gamma;
    aug.Pi = Pi;
    return aug;
}

inline Vector plant_rhs(const LtiPlant& plant, const Vector& x, const Vector& u, const Vector& v) {
    detail::require(x.size() == plant.n() && u.size() == plant.m() && v.size() == plant.n(),
                    "plant_rhs: dimension mismatch");
    return plant.A * x + plant.B * u + plant.C * v;
}

inline Vector exo_rhs(const Exosystem& exo, const Vector& w) {
    detail::require(w.size() == exo.D.cols(), "exo_rhs: dimension mismatch");
    return exo.D * w;
}

// ============================================================================
// Excitation signals
// ============================================================================

struct SinusoidTerm {
    double amplitude = 0.0;
    double omega = 0.0;  // rad/s
    double phase = 0.0;  // rad
};

struct ExcitationChannel {
    double offset = 0.0;
    std::vector<SinusoidTerm> terms;

    double eval(double t) const {
        double s = offset;
        for (const auto& term : terms) s += term.amplitude * std::sin(term.omega * t + term.phase);
        return s;
    }
};

/// Deterministic per-channel sum-of-sinusoids input.
struct ExcitationSpec {
    std::vector<ExcitationChannel> channels;

    int dim() const { return static_cast<int>(channels.size()); }

    Vector eval(double t) const {
        Vector out(dim());
        for (int i = 0; i < dim(); ++i) out(i) = channels[static_cast<std::size_t>(i)].eval(t);
        return out;
    }

    void validate() const {
        for (const auto& ch : channels) {
            detail::require(std::isfinite(ch.offset), "excitation offset must be finite");
            for (const auto& term : ch.terms)
                detail::require(std::isfinite(term.amplitude) && std::isfinite(term.omega) &&
                                    std::isfinite(term.phase),
                                "excitation term must be finite");
        }
    }
};

// ============================================================================
// Scenario configuration
// ============================================================================

struct FilterConfig {
    double lambda0 = 0.1;            // derivative-filter constant
    std::vector<double> bank;        // extension constants for the plant path
    std::vector<double> bank_d;      // extension constants for the exosystem path

    static void check_bank(const std::vector<double>& lams, const std::string& which) {
        for (std::size_t i = 0; i < lams.size(); ++i) {
            detail::require(lams[i] > 0.0, which + " constants must be positive");
            for (std::size_t j = i + 1; j < lams.size(); ++j)
                detail::require(lams[i] != lams[j], which + " constants must be pairwise distinct");
        }
    }

    /// Distinct positive defaults when a bank is left unspecified.
    static std::vector<double> default_bank(int k) {
        std::vector<double> out(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = 0.01 * (i + 1);
        return out;
    }
};

struct ScenarioConfig {
    std::string name = "scenario";
    LtiPlant plant;
    std::optional<Exosystem> exo;
    Vector x0;
    Vector v0;
    ExcitationSpec u_excitation;
    std::optional<ExcitationSpec> w_excitation;  // exosystem input when not autonomous
    FilterConfig filters;
    bool estimate_coupling = false;  // include the v block in the plant regression
    double alpha = 1.0;
    std::optional<double> sigma;     // back-calculated at t_c when unset
    double t_c = 1.0;
    double gamma = 0.0;
    Matrix Q;
    Matrix R;
    std::optional<Matrix> Pi;        // default: identity
    double step = 1e-3;
    double t_end = 1.0;
    double tol_grad = 1e-8;
    double max_flow_time = 1e4;
    int log_every = 1;

    Matrix pi_or_default() const {
        const int nn = 2 * plant.n();
        return Pi ? *Pi : Matrix(Matrix::Identity(nn, nn));
    }

    /// Regression block sizes for the plant path: [x, u] or [x, u, v].
    std::vector<int> psi_blocks() const {
        std::vector<int> blocks{plant.n(), plant.m()};
        if (estimate_coupling) blocks.push_back(plant.n());
        return blocks;
    }

    void validate() const {
        plant.validate();
        const int n = plant.n();
        if (exo) {
            exo->validate(n);
            detail::require(v0.size() == n, "v0 must have plant dimension");
            if (!exo->autonomous)
                detail::require(w_excitation && w_excitation->dim() == exo->q(),
                                "non-autonomous exosystem requires a w excitation of dimension q");
        }
        detail::require(x0.size() == n, "x0 must have plant dimension");
        detail::require(u_excitation.dim() == plant.m(), "u excitation must have m channels");
        u_excitation.validate();
        if (w_excitation) w_excitation->validate();
        detail::require(step > 0.0, "step must be positive");
        detail::require(t_c > 0.0 && t_c <= t_end, "require 0 < t_c <= t_end");
        detail::require(alpha > 0.0, "alpha must be positive");
        if (sigma) detail::require(*sigma > 0.0 && *sigma < 1.0, "sigma must lie in (0,1)");
        detail::require(gamma >= 0.0, "gamma must be nonnegative");
        detail::require(Q.rows() == n && Q.cols() == n && detail::is_positive_definite(Q),
                        "Q must be n x n positive definite");
        detail::require(R.rows() == plant.m() && R.cols() == plant.m() && detail::is_positive_definite(R),
                        "R must be m x m positive definite");
        if (Pi)
            detail::require(Pi->rows() == 2 * n && Pi->cols() == 2 * n && detail::is_positive_definite(*Pi),
                            "Pi must be 2n x 2n positive definite");
        detail::require(tol_grad > 0.0, "tol_grad must be positive");
        detail::require(log_every >= 1, "log_every must be >= 1");
        FilterConfig::check_bank(filters.bank, "plant-path bank");
        FilterConfig::check_bank(filters.bank_d, "exosystem-path bank");
        detail::require(filters.lambda0 > 0.0, "lambda0 must be positive");
        const int k = n + plant.m() + (estimate_coupling ? n : 0);
        if (!filters.bank.empty())
            detail::require(static_cast<int>(filters.bank.size()) == k,
                            "plant-path bank must have one constant per regressor component");
        if (exo && !filters.bank_d.empty())
            detail::require(static_cast<int>(filters.bank_d.size()) == exo->q(),
                            "exosystem-path bank must have q constants");
    }
};

} // namespace lqtrack
