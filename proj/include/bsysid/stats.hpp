#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>

namespace bsysid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One block of input/output samples of equal length.
struct Batch {
    VectorXd u;
    VectorXd y;

    Index size() const { return u.size(); }
};

/// Compressed summary of every sample seen so far:
/// R = Phi^T Phi, Ytilde = Phi^T Y, Ybar = Y^T Y, Nbar = number of samples.
///
/// Regressor row for sample t is [u(t), u(t-1), ..., u(t-n+1)]. Inputs before
/// the first sample are zero; across batches the last n-1 inputs are carried
/// in `input_tail()` so rows spanning a batch boundary are exact. Storage is
/// O(n^2) regardless of Nbar.
class SufficientStats {
public:
    explicit SufficientStats(Index n);

    /// Validates the whole batch before touching any state.
    void ingest(const Batch& batch);

    /// Regressor matrix (N_k x n) the next ingest of `batch` would use.
    MatrixXd regressors(const VectorXd& u) const;

    Index order() const { return n_; }
    const MatrixXd& R() const { return r_; }
    const VectorXd& Ytilde() const { return ytilde_; }
    double Ybar() const { return ybar_; }
    std::int64_t Nbar() const { return nbar_; }
    /// Last n-1 inputs, oldest first.
    const VectorXd& input_tail() const { return tail_; }

    /// Text checkpoint (exact round trip).
    void write(std::ostream& os) const;
    static SufficientStats read(std::istream& is);

private:
    Index n_;
    MatrixXd r_;
    VectorXd ytilde_;
    double ybar_ = 0.0;
    std::int64_t nbar_ = 0;
    VectorXd tail_;
};

/// Least-squares estimate R^{-1} Ytilde via Cholesky. Throws RankDeficient
/// when R is singular or too ill-conditioned to trust.
VectorXd ls_estimate(const SufficientStats& stats);

struct LsResult {
    VectorXd h;
    bool provisional = false;  ///< ridge fallback was used
};

/// ls_estimate, falling back to a 1e-8 * trace(R)/n ridge when R is rank
/// deficient (e.g. before n samples have been seen).
LsResult ls_estimate_or_ridge(const SufficientStats& stats);

/// Unbiased residual variance (Ybar - 2 Ytilde^T h + h^T R h) / (Nbar - n),
/// clamped below at 1e-12. Requires Nbar > n.
double noise_variance(const SufficientStats& stats, const VectorXd& h_ls);

inline constexpr double kMinNoiseVariance = 1e-12;

/// (R + row row^T)^{-1} from R^{-1} in O(n^2). Throws IllConditioned when
/// 1 + row^T Rinv row <= 1e-12.
MatrixXd sherman_morrison_inverse_update(const MatrixXd& r_inv, const VectorXd& row);

} // namespace bsysid
