#pragma once

#include <cmath>

#include "lqtrack/model.hpp"

namespace lqtrack {

// ============================================================================
// Determinant and adjugate
// ============================================================================

namespace detail {

inline double det_cofactor(const Matrix& M) {
    const int k = static_cast<int>(M.rows());
    if (k == 1) return M(0, 0);
    if (k == 2) return M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
    double det = 0.0;
    Matrix minor(k - 1, k - 1);
    for (int j = 0; j < k; ++j) {
        for (int r = 1; r < k; ++r) {
            int cc = 0;
            for (int c = 0; c < k; ++c) {
                if (c == j) continue;
                minor(r - 1, cc++) = M(r, c);
            }
        }
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        det += sign * M(0, j) * det_cofactor(minor);
    }
    return det;
}

} // namespace detail

inline double determinant(const Matrix& M) {
    detail::require(M.rows() == M.cols() && M.rows() > 0, "determinant: square matrix required");
    if (M.rows() <= 6) return detail::det_cofactor(M);
    return Eigen::PartialPivLU<Matrix>(M).determinant();
}

/// Transpose of the cofactor matrix; satisfies M * adj(M) = det(M) * I without
/// requiring invertibility. Cofactor expansion up to k = 6, per-entry
/// column-replacement determinants (LU) beyond that.
inline Matrix adjugate(const Matrix& M) {
    detail::require(M.rows() == M.cols() && M.rows() > 0, "adjugate: square matrix required");
    const int k = static_cast<int>(M.rows());
    if (k == 1) return Matrix::Ones(1, 1);

    Matrix adj(k, k);
    if (k <= 6) {
        Matrix minor(k - 1, k - 1);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                int rr = 0;
                for (int r = 0; r < k; ++r) {
                    if (r == i) continue;
                    int cc = 0;
                    for (int c = 0; c < k; ++c) {
                        if (c == j) continue;
                        minor(rr, cc++) = M(r, c);
                    }
                    ++rr;
                }
                const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
                adj(j, i) = sign * detail::det_cofactor(minor);
            }
        }
        return adj;
    }
    // adj(M)_{ij} = det(M with column i replaced by e_j)  (Cramer)
    Matrix work = M;
    for (int i = 0; i < k; ++i) {
        const Vector saved = work.col(i);
        for (int j = 0; j < k; ++j) {
            work.col(i) = Vector::Unit(k, j);
            adj(i, j) = Eigen::PartialPivLU<Matrix>(work).determinant();
        }
        work.col(i) = saved;
    }
    return adj;
}

// ============================================================================
// Derivative-free filtered derivative
// ============================================================================

/// y(t) = v(t) - e^{-lambda t} v(0) - lambda v_l(t), where v_l is the
/// lambda-filtered v with zero initial state. Equals the lambda-filtered
/// derivative of v without differentiating anything.
inline Vector filtered_derivative(const Vector& v_now, const Vector& v0, const Vector& v_l_now,
                                  double lambda0, double t) {
    return v_now - std::exp(-lambda0 * t) * v0 - lambda0 * v_l_now;
}

// ============================================================================
// Filter bank: first-order pre-filters plus the one-input-k-output extension
// ============================================================================

/// Mixed scalar-regression signals for one regression problem.
struct DremSignals {
    double delta = 0.0;        // det of the extended k x k matrix
    Matrix mixed;              // adj(F) * H_y, k x n
    double int_delta_sq = 0.0; // running integral of delta^2
};

/// Configuration and state conventions for one regression path. The state
/// slice is laid out as [psi (k); F (k*k, row-major); Hy (k*n, row-major)],
/// all zero at t = 0.
struct FilterBank {
    double lambda0 = 0.1;
    Vector lambdas;   // k pairwise-distinct extension constants
    int n_out = 0;    // regressand dimension

    int k() const { return static_cast<int>(lambdas.size()); }
    int state_size() const { return k() + k() * k() + k() * n_out; }

    void validate() const {
        detail::require(lambda0 > 0.0, "filter bank: lambda0 must be positive");
        detail::require(k() > 0 && n_out > 0, "filter bank: empty bank");
        for (int i = 0; i < k(); ++i) {
            detail::require(lambdas(i) > 0.0, "filter bank: constants must be positive");
            for (int j = i + 1; j < k(); ++j)
                detail::require(lambdas(i) != lambdas(j), "filter bank: constants must be distinct");
        }
    }

    Eigen::Map<const Matrix> F(const Vector& state) const {
        return {state.data() + k(), k(), k()};
    }
    Eigen::Map<const Matrix> Hy(const Vector& state) const {
        return {state.data() + k() + k() * k(), k(), n_out};
    }
    Vector psi(const Vector& state) const { return state.head(k()); }

    /// Derivatives of the whole slice. raw is the unfiltered regressor signal
    /// (pre-filter input), regressand the current psi_y for the H_y channels.
    Vector rhs(const Vector& state, const Vector& raw, const Vector& regressand) const {
        detail::require(state.size() == state_size(), "filter bank: state size mismatch");
        detail::require(raw.size() == k() && regressand.size() == n_out,
                        "filter bank: signal dimension mismatch");
        Vector d(state_size());
        d.head(k()) = -lambda0 * state.head(k()) + raw;
        const auto Fm = F(state);
        const auto Hm = Hy(state);
        Eigen::Map<Matrix> dF(d.data() + k(), k(), k());
        Eigen::Map<Matrix> dH(d.data() + k() + k() * k(), k(), n_out);
        for (int i = 0; i < k(); ++i) {
            dF.row(i) = -lambdas(i) * Fm.row(i) + state.head(k()).transpose();
            dH.row(i) = -lambdas(i) * Hm.row(i) + regressand.transpose();
        }
        return d;
    }

    DremSignals mix_at(const Vector& state, double int_delta_sq = 0.0) const;
};

/// psi_y = x - e^{-lambda t} x(0) - lambda psi_x: the filtered state
/// derivative; satisfies psi_y = Psi*^T psi_z exactly on true trajectories.
inline Vector assemble_regressand(double lambda0, const Vector& psi_x, const Vector& x,
                                  const Vector& x0, double t) {
    return filtered_derivative(x, x0, psi_x, lambda0, t);
}

/// Adjugate mixing: turns the matrix regression H_y = F Theta* into
/// independent scalar regressions mixed = delta Theta*. delta may be zero
/// before excitation builds up; the adjugate is always defined.
inline DremSignals mix(const Matrix& F, const Matrix& Hy, double int_delta_sq = 0.0) {
    detail::require(F.rows() == F.cols() && F.rows() == Hy.rows(), "mix: shape mismatch");
    DremSignals s;
    s.delta = determinant(F);
    s.mixed = adjugate(F) * Hy;
    s.int_delta_sq = int_delta_sq;
    return s;
}

inline DremSignals FilterBank::mix_at(const Vector& state, double int_delta_sq) const {
    return mix(F(state), Hy(state), int_delta_sq);
}

} // namespace lqtrack
