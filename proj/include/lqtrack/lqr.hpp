#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "lqtrack/model.hpp"

namespace lqtrack {

// ============================================================================
// Discounted LQR tracking synthesis on the augmented system
// ============================================================================

struct DiscountedLqrProblem {
    Matrix calA;
    Matrix calB;
    Matrix Qhat;
    Matrix R;
    double gamma = 0.0;
    Matrix Pi;

    int dim() const { return static_cast<int>(calA.rows()); }
    int m() const { return static_cast<int>(calB.cols()); }

    static DiscountedLqrProblem from(const AugmentedSystem& aug) {
        return {aug.calA, aug.calB, aug.Qhat, aug.R, aug.gamma, aug.Pi};
    }

    /// calA - calB K - 0.5 gamma I; K must be Hurwitz-stabilizing for this.
    Matrix closed_loop(const Matrix& K) const {
        return calA - calB * K - 0.5 * gamma * Matrix::Identity(dim(), dim());
    }

    void validate() const {
        const int n = dim();
        detail::require(n > 0 && calA.cols() == n, "problem: calA must be square");
        detail::require(calB.rows() == n && calB.cols() > 0, "problem: calB shape");
        detail::require(Qhat.rows() == n && Qhat.cols() == n && detail::is_positive_semidefinite(Qhat),
                        "problem: Qhat must be symmetric PSD");
        detail::require(R.rows() == m() && R.cols() == m() && detail::is_positive_definite(R),
                        "problem: R must be positive definite");
        detail::require(Pi.rows() == n && Pi.cols() == n && detail::is_positive_definite(Pi),
                        "problem: Pi must be positive definite");
        detail::require(gamma >= 0.0, "problem: gamma must be nonnegative");
    }
};

namespace detail {

inline Matrix kron(const Matrix& A, const Matrix& B) {
    Matrix out(A.rows() * B.rows(), A.cols() * B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

} // namespace detail

/// Unique X with M^T X + X M + W = 0, via Kronecker vectorization. Requires
/// the spectrum of M to avoid mirrored pairs (Hurwitz M suffices).
inline Matrix solve_lyapunov(const Matrix& M, const Matrix& W) {
    detail::require(M.rows() == M.cols() && W.rows() == M.rows() && W.cols() == M.cols(),
                    "solve_lyapunov: shape mismatch");
    const int n = static_cast<int>(M.rows());
    const Matrix I = Matrix::Identity(n, n);
    const Matrix L = detail::kron(I, M.transpose()) + detail::kron(M.transpose(), I);
    Eigen::FullPivLU<Matrix> lu(L);
    if (!lu.isInvertible())
        throw NotStabilizingError("solve_lyapunov: singular Kronecker system (M has mirrored eigenvalues)");
    const Eigen::Map<const Vector> w(W.data(), n * n);
    const Vector x = lu.solve(-w);
    Matrix X = Eigen::Map<const Matrix>(x.data(), n, n);
    X = 0.5 * (X + X.transpose());  // symmetrize round-off
    const double res = (M.transpose() * X + X * M + W).norm();
    if (res > 1e-8 * (1.0 + M.norm() * X.norm() + W.norm()))
        throw NotStabilizingError("solve_lyapunov: residual too large");
    return X;
}

struct StabilityInfo {
    bool stabilizing = false;
    Eigen::VectorXcd spectrum;
};

/// Eigenvalues of calA - calB K - 0.5 gamma I; stabilizing iff all real parts < 0.
inline StabilityInfo is_stabilizing(const DiscountedLqrProblem& pr, const Matrix& K) {
    detail::require(K.rows() == pr.m() && K.cols() == pr.dim(), "is_stabilizing: K shape");
    Eigen::EigenSolver<Matrix> es(pr.closed_loop(K));
    StabilityInfo info;
    info.spectrum = es.eigenvalues();
    info.stabilizing = (info.spectrum.real().array() < 0.0).all();
    return info;
}

/// P(K): unique positive definite solution of the fixed-K discounted ARE
/// P(calA - calB K) + (calA - calB K)^T P - gamma P + K^T R K + Qhat = 0.
inline Matrix value_matrix(const DiscountedLqrProblem& pr, const Matrix& K) {
    const auto stab = is_stabilizing(pr, K);
    if (!stab.stabilizing)
        throw NotStabilizingError("value_matrix: K outside the stabilizing set", stab.spectrum);
    return solve_lyapunov(pr.closed_loop(K), Matrix(pr.Qhat + K.transpose() * pr.R * K));
}

/// Extended-value cost f(K) = tr(P(K) Pi), +infinity outside the stabilizing set.
inline double cost(const DiscountedLqrProblem& pr, const Matrix& K) {
    if (!is_stabilizing(pr, K).stabilizing) return std::numeric_limits<double>::infinity();
    return (value_matrix(pr, K) * pr.Pi).trace();
}

/// Reachability-type weighting: Z > 0 with A_cl Z + Z A_cl^T + Pi = 0.
inline Matrix gradient_weight(const DiscountedLqrProblem& pr, const Matrix& K) {
    return solve_lyapunov(pr.closed_loop(K).transpose(), pr.Pi);
}

/// Exact gradient of f at a stabilizing K: 2 (R K - calB^T P) Z.
inline Matrix gradient(const DiscountedLqrProblem& pr, const Matrix& K, const Matrix& P) {
    return 2.0 * (pr.R * K - pr.calB.transpose() * P) * gradient_weight(pr, K);
}

// ============================================================================
// Kleinman iteration (oracle / baseline)
// ============================================================================

struct KleinmanResult {
    Matrix P;
    Matrix K;
    int iterations = 0;
};

/// Newton-type alternation of Lyapunov solves and gain updates; quadratic
/// convergence to the discounted-ARE solution from any stabilizing start.
inline KleinmanResult kleinman(const DiscountedLqrProblem& pr, const Matrix& K0, int max_iters = 100) {
    const auto stab0 = is_stabilizing(pr, K0);
    if (!stab0.stabilizing)
        throw NotStabilizingError("kleinman: K0 outside the stabilizing set", stab0.spectrum);

    const Eigen::LLT<Matrix> Rchol(pr.R);
    Matrix K = K0;
    Matrix P;
    int it = 0;
    for (; it < max_iters; ++it) {
        P = value_matrix(pr, K);  // re-checks the eigen condition each sweep
        const Matrix Knext = Rchol.solve(pr.calB.transpose() * P);
        const double delta = (Knext - K).norm();
        K = Knext;
        if (delta <= 1e-14 * (1.0 + K.norm())) break;
    }
    return {value_matrix(pr, K), K, it + 1};
}

// ============================================================================
// Gradient flow on the gain
// ============================================================================

struct GainIterate {
    double t = 0.0;
    Matrix K;
    Matrix P;
    Matrix Z;
    double cost = 0.0;
    Matrix grad;

    double grad_norm() const { return grad.norm(); }
};

struct SmoothnessConstants {
    double lipschitz_R = 0.0;  // L-smoothness constant
    double pl_mu = 0.0;        // PL constant
    double zeta = 0.0;
    double gamma_K0 = 0.0;
};

struct GainSearchTrace {
    std::vector<GainIterate> steps;
    bool converged = false;
    double tol_grad = 0.0;
    SmoothnessConstants constants;

    const GainIterate& terminal() const { return steps.back(); }
};

namespace detail {

inline double min_positive_eigenvalue(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    const auto& ev = es.eigenvalues();
    const double floor = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    double out = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ev.size(); ++i)
        if (ev(i) > floor) out = std::min(out, ev(i));
    require(std::isfinite(out), "smoothness constants: Qhat has no positive eigenvalue");
    return out;
}

} // namespace detail

/// L-smoothness and PL constants over S_{K0}; diagnostics only, never used to
/// drive the search. lambda_min(Qhat) is taken over the nonzero block (the
/// smallest positive eigenvalue), since diag(Q, 0) is singular by construction.
inline SmoothnessConstants smoothness_constants(const DiscountedLqrProblem& pr, const Matrix& K0) {
    const double fK0 = cost(pr, K0);
    detail::require(std::isfinite(fK0), "smoothness_constants: K0 outside the stabilizing set");
    const double lamQ = detail::min_positive_eigenvalue(pr.Qhat);
    Eigen::SelfAdjointEigenSolver<Matrix> esR(pr.R), esPi(pr.Pi);
    const double lamR_min = esR.eigenvalues().minCoeff();
    const double lamR_max = esR.eigenvalues().maxCoeff();
    const double lamPi_min = esPi.eigenvalues().minCoeff();
    const double nA = pr.calA.norm();
    const double nB = pr.calB.norm();
    const double dim = static_cast<double>(pr.dim());

    SmoothnessConstants c;
    c.gamma_K0 = fK0 * nB / (lamPi_min * lamQ);
    c.zeta = std::sqrt(dim) * fK0 / lamPi_min * (c.gamma_K0 + c.gamma_K0 * c.gamma_K0 + lamR_max);
    c.lipschitz_R = 2.0 * fK0 / lamQ * (lamR_max + nB * c.zeta);
    c.pl_mu = lamR_min * lamPi_min * lamPi_min * lamQ /
              (8.0 * fK0 * (nA + 0.5 * pr.gamma * dim + nB * nB * fK0 / (lamPi_min * lamR_min)));
    return c;
}

struct GradientFlowOptions {
    double dt0 = 0.05;
    double dt_max = 1.0;
    double dt_min = 1e-13;
    double stability_margin = 2.5;  // RK4 real-axis stability bound is ~2.785/L
    long max_iters = 200000;
};

/// Continuous-time search dK/dt = -grad f(K), integrated by RK4 with step
/// halving whenever a candidate leaves the stabilizing set or increases the
/// cost. Every accepted iterate stays in S_{K0} = {K in S : f(K) <= f(K0)}.
inline GainSearchTrace gradient_flow(const DiscountedLqrProblem& pr, const Matrix& K0,
                                     double tol_grad, double max_time,
                                     const GradientFlowOptions& opt = {}) {
    detail::require(tol_grad > 0.0, "gradient_flow: tol_grad must be positive");
    const auto stab0 = is_stabilizing(pr, K0);
    if (!stab0.stabilizing)
        throw NotStabilizingError("gradient_flow: K0 outside the stabilizing set", stab0.spectrum);

    auto make_iterate = [&pr](double t, const Matrix& K) {
        GainIterate it;
        it.t = t;
        it.K = K;
        it.P = value_matrix(pr, K);
        it.Z = gradient_weight(pr, K);
        it.cost = (it.P * pr.Pi).trace();
        it.grad = 2.0 * (pr.R * K - pr.calB.transpose() * it.P) * it.Z;
        return it;
    };

    auto neg_grad = [&pr](const Matrix& K) -> Matrix {
        return -gradient(pr, K, value_matrix(pr, K));
    };

    GainSearchTrace trace;
    trace.tol_grad = tol_grad;
    trace.constants = smoothness_constants(pr, K0);
    trace.steps.push_back(make_iterate(0.0, K0));

    double dt = opt.dt0;
    double dt_cap = opt.dt_max;
    for (long i = 0; i < opt.max_iters; ++i) {
        const GainIterate& cur = trace.steps.back();
        if (cur.grad_norm() <= tol_grad) {
            trace.converged = true;
            break;
        }
        if (cur.t >= max_time) break;

        Matrix Knext;
        double fnext = 0.0;
        bool accepted = false;
        while (dt >= opt.dt_min) {
            const Matrix k1 = -cur.grad;
            const Matrix k2 = neg_grad(cur.K + 0.5 * dt * k1);
            const Matrix k3 = neg_grad(cur.K + 0.5 * dt * k2);
            const Matrix k4 = neg_grad(cur.K + dt * k3);
            Knext = cur.K + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (is_stabilizing(pr, Knext).stabilizing) {
                fnext = cost(pr, Knext);
                if (fnext <= cur.cost + 1e-12 * std::max(std::abs(cur.cost), 1.0)) {
                    accepted = true;
                    break;
                }
            }
            dt *= 0.5;
        }
        if (!accepted)
            throw NotStabilizingError("gradient_flow: step size collapsed without an acceptable step");
        trace.steps.push_back(make_iterate(cur.t + dt, Knext));

        // keep dt inside the RK4 stability region of the local flow: a secant
        // estimate of the gradient's Lipschitz constant costs nothing here
        const GainIterate& prev = trace.steps[trace.steps.size() - 2];
        const GainIterate& next = trace.steps.back();
        const double dK = (next.K - prev.K).norm();
        if (dK > 0.0) {
            const double L_est = (next.grad - prev.grad).norm() / dK;
            if (L_est > 0.0)
                dt_cap = std::min(opt.dt_max, opt.stability_margin / L_est);
        }
        dt = std::min(2.0 * dt, dt_cap);
    }
    return trace;
}

// ============================================================================
// Trace diagnostics
// ============================================================================

struct ExpFit {
    double slope = 0.0;
    double r_squared = 0.0;
    int points = 0;
};

/// Least-squares line through log(f(K(t)) - f_star) over the latter half of a
/// trace. Negative slope with high R^2 is the exponential-convergence signature.
inline ExpFit fit_log_phi(const GainSearchTrace& trace, double f_star) {
    const double t_mid = trace.steps.back().t / 2.0;
    std::vector<double> ts, ys;
    for (const auto& s : trace.steps) {
        const double phi = s.cost - f_star;
        if (s.t >= t_mid && phi > 0.0) {
            ts.push_back(s.t);
            ys.push_back(std::log(phi));
        }
    }
    ExpFit fit;
    fit.points = static_cast<int>(ts.size());
    if (fit.points < 3) return fit;
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (int i = 0; i < fit.points; ++i) {
        st += ts[static_cast<std::size_t>(i)];
        sy += ys[static_cast<std::size_t>(i)];
        stt += ts[static_cast<std::size_t>(i)] * ts[static_cast<std::size_t>(i)];
        sty += ts[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
    }
    const double denom = fit.points * stt - st * st;
    if (denom == 0.0) return fit;
    fit.slope = (fit.points * sty - st * sy) / denom;
    const double intercept = (sy - fit.slope * st) / fit.points;
    double ss_res = 0, ss_tot = 0;
    const double ymean = sy / fit.points;
    for (int i = 0; i < fit.points; ++i) {
        const double pred = fit.slope * ts[static_cast<std::size_t>(i)] + intercept;
        ss_res += (ys[static_cast<std::size_t>(i)] - pred) * (ys[static_cast<std::size_t>(i)] - pred);
        ss_tot += (ys[static_cast<std::size_t>(i)] - ymean) * (ys[static_cast<std::size_t>(i)] - ymean);
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

} // namespace lqtrack
