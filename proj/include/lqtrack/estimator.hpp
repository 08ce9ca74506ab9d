#pragma once

#include <cmath>
#include <optional>

#include "lqtrack/regressor.hpp"

namespace lqtrack {

// ============================================================================
// DREM gradient estimator with finite-time reconstruction
// ============================================================================

struct EstimatorState {
    Matrix Theta;                 // k x n current estimate
    Matrix Theta0;                // initial estimate, immutable after start
    double s0 = 1.0;              // auxiliary excitation scalar, s0(0) = 1
    double alpha = 1.0;           // learning rate
    std::optional<double> sigma;  // excitation level in (0,1), may be back-calculated

    static EstimatorState zero_init(int k, int n, double alpha) {
        EstimatorState st;
        st.Theta = Matrix::Zero(k, n);
        st.Theta0 = Matrix::Zero(k, n);
        st.alpha = alpha;
        return st;
    }
};

struct FiniteTimeEstimate {
    Matrix ThetaF;
    double t_c = 0.0;
    double sigma_used = 0.0;
    bool ie_satisfied = false;
};

/// dTheta/dt = alpha delta (mixed - delta Theta); element-wise error dynamics
/// d theta~/dt = -alpha delta^2 theta~.
inline Matrix update_rhs(const EstimatorState& state, const DremSignals& signals) {
    return state.alpha * signals.delta * (signals.mixed - signals.delta * state.Theta);
}

/// ds0/dt = -alpha delta^2 s0, so s0(t) = exp(-alpha int delta^2).
inline double s0_rhs(const EstimatorState& state, double delta) {
    return -state.alpha * delta * delta * state.s0;
}

/// Continuous switching signal: s = min(s0, 1 - sigma), so 1 - s >= sigma.
inline double clamp_s(double s0, double sigma) {
    detail::require(sigma > 0.0 && sigma < 1.0, "clamp_s: sigma must lie in (0,1)");
    return s0 > 1.0 - sigma ? 1.0 - sigma : s0;
}

/// Excitation integral required by the modified IE condition: -ln(1-sigma)/alpha.
/// IE holds iff int delta^2 reaches this, equivalently s0 <= 1 - sigma.
inline double ie_threshold(double alpha, double sigma) {
    detail::require(alpha > 0.0, "ie_threshold: alpha must be positive");
    detail::require(sigma > 0.0 && sigma < 1.0, "ie_threshold: sigma must lie in (0,1)");
    return -std::log1p(-sigma) / alpha;
}

/// Largest sigma for which IE holds at t_c: sigma = 1 - s0(t_c).
inline double back_calculate_sigma(double s0_at_tc) {
    detail::require(s0_at_tc >= 0.0 && s0_at_tc < 1.0,
                    "back_calculate_sigma: no excitation occurred (s0 = 1)");
    return 1.0 - s0_at_tc;
}

/// ThetaF = (Theta - s Theta0) / (1 - s). Exact recovery of Theta* whenever
/// s0 <= 1 - sigma; the clamp keeps the denominator at least sigma.
inline FiniteTimeEstimate finite_time_estimate(const EstimatorState& state, double sigma, double t) {
    const double s = clamp_s(state.s0, sigma);
    FiniteTimeEstimate est;
    est.ThetaF = (state.Theta - s * state.Theta0) / (1.0 - s);
    est.t_c = t;
    est.sigma_used = sigma;
    est.ie_satisfied = state.s0 <= 1.0 - sigma;
    return est;
}

} // namespace lqtrack
