#pragma once

#include <Eigen/Dense>

namespace bsysid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Lower edge of the interior box used for beta wherever the kernel must be
/// nonsingular (gradients, EM).
inline constexpr double kBetaEps = 1e-6;

/// Prior hyperparameters eta = [lambda, beta] of the TC kernel.
/// Feasible set: lambda >= 0, 0 <= beta <= 1.
struct Hyperparameters {
    double lambda = 0.0;
    double beta = 0.0;

    Eigen::Vector2d as_vector() const { return {lambda, beta}; }
    static Hyperparameters from_vector(const Eigen::Vector2d& v) { return {v(0), v(1)}; }

    friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

bool in_omega(const Hyperparameters& eta);

/// Throws std::domain_error naming `what` when eta is outside the feasible set.
void require_in_omega(const Hyperparameters& eta, const char* what);

/// TC kernel K(i,j) = lambda * beta^max(i,j), 1-based lags.
MatrixXd build_tc_kernel(Index n, const Hyperparameters& eta);

/// Elementwise d/dbeta of beta^max(i,j). At beta = 0 the right limit is used
/// (only the (1,1) entry is nonzero).
MatrixXd kernel_dbeta(Index n, double beta);

/// Dense Cholesky factorization K = L L^T.
class CholeskyFactor {
public:
    /// Throws NotPositiveDefinite if the factorization breaks down.
    explicit CholeskyFactor(const MatrixXd& k);

    Index size() const { return llt_.rows(); }
    MatrixXd lower() const;
    double logdet() const;
    VectorXd solve(const VectorXd& b) const;
    MatrixXd solve(const MatrixXd& b) const;

    const Eigen::LLT<MatrixXd>& llt() const { return llt_; }

private:
    Eigen::LLT<MatrixXd> llt_;
};

CholeskyFactor chol_logdet_solve(const MatrixXd& k);

/// Diagonal of A^{-1} from a Cholesky factorization, without forming A^{-1}.
VectorXd inverse_diagonal(const Eigen::LLT<MatrixXd>& llt);

// ---------------------------------------------------------------------------
// TC structure.
//
// With v_k the indicator of lags {1..k}, the TC kernel expands as
//
//     K_beta = sum_k c_k v_k v_k^T,   c_k = beta^k (1 - beta) for k < n,  c_n = beta^n
//
// i.e. K_beta = U diag(c) U^T with U the upper-triangular matrix of ones. This
// gives an exact square-root factor for every beta in [0, 1] (including the
// singular endpoints), a bidiagonal U^{-1}, and closed-form inverse quadratic
// forms and log-determinant on the interior.
// ---------------------------------------------------------------------------

/// Weights c_k, k = 1..n (returned 0-based).
VectorXd tc_weights(Index n, double beta);

/// ln c_k; requires 0 < beta < 1.
VectorXd tc_log_weights(Index n, double beta);

/// dc_k/dbeta. Also the expansion weights of kernel_dbeta in the v_k basis.
VectorXd tc_weight_derivatives(Index n, double beta);

/// Upper-triangular F with F F^T = lambda K_beta.
MatrixXd tc_factor(Index n, const Hyperparameters& eta);

/// x^T K_beta^{-1} x, 0 < beta < 1.
double tc_inverse_quadratic(double beta, const VectorXd& x);

/// Tr(K_beta^{-1} P), 0 < beta < 1.
double tc_inverse_trace(double beta, const MatrixXd& p);

/// ln det K_beta, 0 < beta < 1.
double tc_logdet(Index n, double beta);

} // namespace bsysid
