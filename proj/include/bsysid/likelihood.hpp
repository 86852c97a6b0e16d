#pragma once

#include "bsysid/kernel.hpp"
#include "bsysid/stats.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace bsysid {

/// Positive/negative split of the gradient, grad = V - U with V > 0, U >= 0.
/// Component 0 is lambda, component 1 is beta.
struct GradientSplit {
    Eigen::Vector2d V = Eigen::Vector2d::Zero();
    Eigen::Vector2d U = Eigen::Vector2d::Zero();
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
};

struct PosteriorMoments {
    VectorXd mean;
    MatrixXd cov;
};

/// Posterior summary at eta in the form the EM M-step needs.
///
/// With K_eta = F F^T (F the TC factor) and A = sigma2 I + F^T R F:
///   x = A^{-1} F^T Ytilde       (so the posterior mean is F x)
///   ainv_diag = diag(A^{-1})    (so P = sigma2 F A^{-1} F^T)
struct EStep {
    Hyperparameters eta;
    double sigma2 = 0.0;
    VectorXd x;
    VectorXd ainv_diag;
};

/// Negative log marginal likelihood of the FIR/TC model given sufficient
/// statistics and a plug-in noise variance:
///
///   L(eta) = Y^T Sigma_y^{-1} Y + ln det Sigma_y,   Sigma_y = Phi K_eta Phi^T + sigma2 I
///
/// The N ln(2 pi) constant is dropped. Every evaluation works on n x n
/// quantities only, so cost does not depend on Nbar.
class MarginalLikelihood {
public:
    /// Throws std::domain_error unless sigma2 > 0.
    MarginalLikelihood(const SufficientStats& stats, double sigma2);

    Index order() const { return n_; }
    double sigma2() const { return sigma2_; }
    std::int64_t nbar() const { return nbar_; }

    /// Valid on all of Omega, including lambda = 0 and beta in {0, 1}.
    double neg_log_ml(const Hyperparameters& eta) const;
    /// Same value; also writes posterior_mean(eta) into `mean`.
    double neg_log_ml(const Hyperparameters& eta, VectorXd& mean) const;

    /// Requires lambda >= 0 and kBetaEps <= beta <= 1 - kBetaEps. When
    /// `value` is given it receives neg_log_ml(eta) from the same factorization.
    GradientSplit gradient(const Hyperparameters& eta, double* value = nullptr) const;

    /// Lambda component only (entries for beta are zero). Cheaper than
    /// gradient(); same domain.
    GradientSplit lambda_gradient(const Hyperparameters& eta, double* value = nullptr) const;

    /// Posterior mean (R + sigma2 K^{-1})^{-1} Ytilde and covariance
    /// (R / sigma2 + K^{-1})^{-1}; both vanish when lambda = 0.
    PosteriorMoments posterior_moments(const Hyperparameters& eta) const;
    VectorXd posterior_mean(const Hyperparameters& eta) const;

    /// `with_variance = false` skips diag(A^{-1}) (left empty).
    EStep e_step(const Hyperparameters& eta, bool with_variance = true) const;

private:
    struct Factor;
    Factor factorize(const Hyperparameters& eta) const;
    double value_of(const Factor& f) const;
    VectorXd mean_of(const Factor& f) const;
    void require_gradient_domain(const Hyperparameters& eta) const;

    Index n_;
    MatrixXd r_;
    MatrixXd rcum_;     // U^T R U: 2-D prefix sums of R
    VectorXd ycum_;     // U^T Ytilde: prefix sums of Ytilde
    double ybar_;
    std::int64_t nbar_;
    double sigma2_;
};

} // namespace bsysid
