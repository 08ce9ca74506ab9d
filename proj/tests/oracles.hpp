// Test-only oracles, deliberately independent of the implementation paths
// they check.
#pragma once

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "lqtrack/lqr.hpp"

namespace oracles {

using lqtrack::Matrix;
using lqtrack::Vector;

/// Long-horizon Simpson quadrature of int_0^T e^{M^T s} W e^{M s} ds.
/// Converges to the Lyapunov solution of M^T X + X M + W = 0 for Hurwitz M.
inline Matrix lyapunov_by_quadrature(const Matrix& M, const Matrix& W, double T = 60.0,
                                     int intervals = 6000) {
    const int n = static_cast<int>(M.rows());
    const double dt = T / intervals;
    const Matrix Estep = (M * dt).exp();
    Matrix E = Matrix::Identity(n, n);  // e^{M s} marched incrementally
    Matrix acc = Matrix::Zero(n, n);
    for (int i = 0; i <= intervals; ++i) {
        double wgt = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        acc += wgt * (E.transpose() * W * E);
        E = E * Estep;
    }
    return acc * dt / 3.0;
}

/// Central finite differences of the extended-value cost.
inline Matrix gradient_by_finite_differences(const lqtrack::DiscountedLqrProblem& pr,
                                             const Matrix& K, double h = 1e-6) {
    Matrix g(K.rows(), K.cols());
    for (int i = 0; i < K.rows(); ++i) {
        for (int j = 0; j < K.cols(); ++j) {
            Matrix Kp = K, Km = K;
            Kp(i, j) += h;
            Km(i, j) -= h;
            g(i, j) = (lqtrack::cost(pr, Kp) - lqtrack::cost(pr, Km)) / (2.0 * h);
        }
    }
    return g;
}

/// Random augmented problem with K = 0 stabilizing (drift matrices are shifted
/// Hurwitz by construction).
inline lqtrack::DiscountedLqrProblem random_problem(std::mt19937& rng, int n, int m, double gamma,
                                                    bool with_coupling = false) {
    std::normal_distribution<double> nd(0.0, 1.0);
    auto randn = [&](int r, int c) {
        Matrix M(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
        return M;
    };
    auto shift_hurwitz = [&](Matrix M) {
        const double re_max = Eigen::EigenSolver<Matrix>(M).eigenvalues().real().maxCoeff();
        return Matrix(M - (re_max + 0.3 + 0.5 * gamma) * Matrix::Identity(M.rows(), M.cols()));
    };
    lqtrack::LtiPlant plant{shift_hurwitz(randn(n, n)), randn(n, m),
                            with_coupling ? randn(n, n) : Matrix(Matrix::Zero(n, n))};
    lqtrack::Exosystem exo{shift_hurwitz(randn(n, n)), true};
    const auto aug = lqtrack::build_augmented(plant, exo, Matrix::Identity(n, n),
                                              Matrix::Identity(m, m), gamma,
                                              Matrix::Identity(2 * n, 2 * n));
    return lqtrack::DiscountedLqrProblem::from(aug);
}

} // namespace oracles
