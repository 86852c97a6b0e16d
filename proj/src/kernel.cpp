#include "bsysid/kernel.hpp"

#include "bsysid/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bsysid {

namespace {

void require_order(Index n)
{
    if (n < 1) {
        throw std::invalid_argument("FIR order must be positive");
    }
}

void require_open_beta(double beta)
{
    if (!(beta > 0.0 && beta < 1.0)) {
        throw std::domain_error("beta must lie in (0, 1), got " + std::to_string(beta));
    }
}

} // namespace

bool in_omega(const Hyperparameters& eta)
{
    return std::isfinite(eta.lambda) && eta.lambda >= 0.0 && eta.beta >= 0.0 && eta.beta <= 1.0;
}

void require_in_omega(const Hyperparameters& eta, const char* what)
{
    if (!in_omega(eta)) {
        throw std::domain_error(std::string(what) + ": hyperparameters outside feasible set (lambda="
                                + std::to_string(eta.lambda) + ", beta=" + std::to_string(eta.beta)
                                + ")");
    }
}

MatrixXd build_tc_kernel(Index n, const Hyperparameters& eta)
{
    require_order(n);
    require_in_omega(eta, "build_tc_kernel");

    VectorXd powers(n);
    for (Index m = 0; m < n; ++m) {
        powers(m) = std::pow(eta.beta, static_cast<double>(m + 1));
    }

    MatrixXd k(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            k(i, j) = eta.lambda * powers(std::max(i, j));
        }
    }
    return k;
}

MatrixXd kernel_dbeta(Index n, double beta)
{
    require_order(n);
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::domain_error("kernel_dbeta: beta outside [0, 1]");
    }

    // pow(0, 0) == 1 gives the right limit at beta = 0.
    VectorXd f(n);
    for (Index m = 0; m < n; ++m) {
        f(m) = static_cast<double>(m + 1) * std::pow(beta, static_cast<double>(m));
    }

    MatrixXd d(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            d(i, j) = f(std::max(i, j));
        }
    }
    return d;
}

CholeskyFactor::CholeskyFactor(const MatrixXd& k)
    : llt_(k)
{
    if (k.rows() != k.cols()) {
        throw std::invalid_argument("Cholesky factorization needs a square matrix");
    }
    if (llt_.info() != Eigen::Success) {
        throw NotPositiveDefinite("matrix is not numerically positive definite");
    }
}

MatrixXd CholeskyFactor::lower() const
{
    return llt_.matrixL();
}

double CholeskyFactor::logdet() const
{
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

VectorXd CholeskyFactor::solve(const VectorXd& b) const
{
    return llt_.solve(b);
}

MatrixXd CholeskyFactor::solve(const MatrixXd& b) const
{
    return llt_.solve(b);
}

CholeskyFactor chol_logdet_solve(const MatrixXd& k)
{
    return CholeskyFactor(k);
}

VectorXd inverse_diagonal(const Eigen::LLT<MatrixXd>& llt)
{
    // (A^{-1})_kk = || L^{-1} e_k ||^2, and L^{-1} e_k vanishes above row k.
    const MatrixXd& l = llt.matrixLLT();
    const Index n = l.rows();
    VectorXd diag(n);
    VectorXd y;
    for (Index k = 0; k < n; ++k) {
        const Index m = n - k;
        y.setZero(m);
        y(0) = 1.0;
        l.bottomRightCorner(m, m).triangularView<Eigen::Lower>().solveInPlace(y);
        diag(k) = y.squaredNorm();
    }
    return diag;
}

VectorXd tc_weights(Index n, double beta)
{
    require_order(n);
    VectorXd c(n);
    for (Index k = 0; k < n; ++k) {
        const double pk = std::pow(beta, static_cast<double>(k + 1));
        c(k) = (k + 1 < n) ? pk * (1.0 - beta) : pk;
    }
    return c;
}

VectorXd tc_log_weights(Index n, double beta)
{
    require_order(n);
    require_open_beta(beta);
    const double lb = std::log(beta);
    const double l1b = std::log1p(-beta);
    VectorXd lc(n);
    for (Index k = 0; k < n; ++k) {
        lc(k) = static_cast<double>(k + 1) * lb + ((k + 1 < n) ? l1b : 0.0);
    }
    return lc;
}

VectorXd tc_weight_derivatives(Index n, double beta)
{
    require_order(n);
    auto f = [beta](Index m) {  // d/dbeta beta^m
        return static_cast<double>(m) * std::pow(beta, static_cast<double>(m - 1));
    };
    VectorXd dc(n);
    for (Index k = 0; k < n; ++k) {
        dc(k) = (k + 1 < n) ? f(k + 1) - f(k + 2) : f(k + 1);
    }
    return dc;
}

MatrixXd tc_factor(Index n, const Hyperparameters& eta)
{
    require_in_omega(eta, "tc_factor");
    const VectorXd s = (eta.lambda * tc_weights(n, eta.beta)).cwiseSqrt();
    MatrixXd f = MatrixXd::Zero(n, n);
    for (Index k = 0; k < n; ++k) {
        f.col(k).head(k + 1).setConstant(s(k));
    }
    return f;
}

double tc_inverse_quadratic(double beta, const VectorXd& x)
{
    const Index n = x.size();
    const VectorXd lc = tc_log_weights(n, beta);
    double q = 0.0;
    for (Index k = 0; k < n; ++k) {
        const double d = x(k) - (k + 1 < n ? x(k + 1) : 0.0);
        if (d != 0.0) {
            q += d * d * std::exp(-lc(k));
        }
    }
    return q;
}

double tc_inverse_trace(double beta, const MatrixXd& p)
{
    const Index n = p.rows();
    if (p.cols() != n) {
        throw std::invalid_argument("tc_inverse_trace: matrix must be square");
    }
    const VectorXd lc = tc_log_weights(n, beta);
    // Tr(U^{-T} C^{-1} U^{-1} P) = sum_k (U^{-1} P U^{-T})_kk / c_k
    double t = 0.0;
    for (Index k = 0; k < n; ++k) {
        double m = p(k, k);
        if (k + 1 < n) {
            m += p(k + 1, k + 1) - p(k, k + 1) - p(k + 1, k);
        }
        if (m != 0.0) {
            t += m * std::exp(-lc(k));
        }
    }
    return t;
}

double tc_logdet(Index n, double beta)
{
    require_order(n);
    require_open_beta(beta);
    const double nn = static_cast<double>(n);
    return 0.5 * nn * (nn + 1.0) * std::log(beta) + (nn - 1.0) * std::log1p(-beta);
}

} // namespace bsysid
