#include "bsysid/likelihood.hpp"

#include "bsysid/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bsysid {

// All evaluations use the TC factor F = U diag(s), s_k = sqrt(lambda c_k), so
// that K_eta = F F^T holds exactly on all of Omega. Then
//
//   F^T R F  = diag(s) Rcum diag(s),     F^T Ytilde = s .* Ycum
//
// and the only O(n^3) work is the Cholesky factor S of A = sigma2 I + F^T R F.
struct MarginalLikelihood::Factor {
    VectorXd c;
    VectorXd s;
    Eigen::LLT<MatrixXd> llt;
    VectorXd z;  // S^{-1} F^T Ytilde
    VectorXd x;  // A^{-1} F^T Ytilde
};

MarginalLikelihood::MarginalLikelihood(const SufficientStats& stats, double sigma2)
    : n_(stats.order())
    , r_(stats.R())
    , ybar_(stats.Ybar())
    , nbar_(stats.Nbar())
    , sigma2_(sigma2)
{
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw std::domain_error("noise variance must be positive and finite");
    }

    rcum_ = r_;
    for (Index j = 0; j < n_; ++j) {
        for (Index i = 1; i < n_; ++i) {
            rcum_(i, j) += rcum_(i - 1, j);
        }
    }
    for (Index j = 1; j < n_; ++j) {
        rcum_.col(j) += rcum_.col(j - 1);
    }

    ycum_ = stats.Ytilde();
    for (Index i = 1; i < n_; ++i) {
        ycum_(i) += ycum_(i - 1);
    }
}

MarginalLikelihood::Factor MarginalLikelihood::factorize(const Hyperparameters& eta) const
{
    require_in_omega(eta, "marginal likelihood");

    Factor f;
    f.c = tc_weights(n_, eta.beta);
    f.s = (eta.lambda * f.c).cwiseSqrt();

    MatrixXd a = f.s.asDiagonal() * rcum_ * f.s.asDiagonal();
    a.diagonal().array() += sigma2_;
    f.llt.compute(a);
    if (f.llt.info() != Eigen::Success) {
        throw NumericalError("Cholesky of sigma2 I + F^T R F failed");
    }

    f.z = f.s.cwiseProduct(ycum_);
    f.llt.matrixL().solveInPlace(f.z);
    f.x = f.z;
    f.llt.matrixU().solveInPlace(f.x);
    return f;
}

double MarginalLikelihood::neg_log_ml(const Hyperparameters& eta) const
{
    return value_of(factorize(eta));
}

double MarginalLikelihood::value_of(const Factor& f) const
{
    const double logdet_a = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
    const double value = static_cast<double>(nbar_ - n_) * std::log(sigma2_) + logdet_a
                         + (ybar_ - f.z.squaredNorm()) / sigma2_;
    if (!std::isfinite(value)) {
        throw NumericalError("non-finite marginal likelihood");
    }
    return value;
}

void MarginalLikelihood::require_gradient_domain(const Hyperparameters& eta) const
{
    if (!(eta.lambda >= 0.0) || !std::isfinite(eta.lambda) || !(eta.beta >= kBetaEps)
        || !(eta.beta <= 1.0 - kBetaEps)) {
        throw std::domain_error("gradient needs lambda >= 0 and beta inside [eps, 1 - eps], got beta="
                                + std::to_string(eta.beta));
    }
}

GradientSplit MarginalLikelihood::gradient(const Hyperparameters& eta, double* value) const
{
    require_gradient_domain(eta);
    const Factor f = factorize(eta);
    if (value) {
        *value = value_of(f);
    }

    // a = Phi^T Sigma^{-1} Y and G = Phi^T Sigma^{-1} Phi, projected onto the
    // v_k basis: p = U^T a, B_k = v_k^T G v_k.
    const VectorXd p = (ycum_ - rcum_ * f.s.cwiseProduct(f.x)) / sigma2_;
    MatrixXd y = f.s.asDiagonal() * rcum_;
    f.llt.matrixL().solveInPlace(y);
    const VectorXd b = (rcum_.diagonal() - y.colwise().squaredNorm().transpose()) / sigma2_;
    const VectorXd p2 = p.cwiseAbs2();

    const VectorXd dc = tc_weight_derivatives(n_, eta.beta);
    const VectorXd dc_pos = dc.cwiseMax(0.0);
    const VectorXd dc_neg = (-dc).cwiseMax(0.0);

    GradientSplit g;
    g.V(0) = f.c.dot(b);
    g.U(0) = f.c.dot(p2);
    g.V(1) = eta.lambda * (dc_pos.dot(b) + dc_neg.dot(p2));
    g.U(1) = eta.lambda * (dc_neg.dot(b) + dc_pos.dot(p2));
    g.grad = g.V - g.U;
    if (!g.grad.allFinite()) {
        throw NumericalError("non-finite gradient");
    }
    return g;
}

GradientSplit MarginalLikelihood::lambda_gradient(const Hyperparameters& eta, double* value) const
{
    require_gradient_domain(eta);
    const Factor f = factorize(eta);
    if (value) {
        *value = value_of(f);
    }

    const VectorXd p = (ycum_ - rcum_ * f.s.cwiseProduct(f.x)) / sigma2_;

    // d/dlambda ln det A = Tr(A^{-1} M_beta) = (n - sigma2 Tr(A^{-1})) / lambda.
    double v = 0.0;
    const double nn = static_cast<double>(n_);
    if (eta.lambda == 0.0) {
        v = f.c.dot(rcum_.diagonal()) / sigma2_;
    } else {
        const double edf = nn - sigma2_ * inverse_diagonal(f.llt).sum();
        if (edf > 1e-8 * nn) {
            v = edf / eta.lambda;
        } else {
            MatrixXd y = f.s.asDiagonal() * rcum_;
            f.llt.matrixL().solveInPlace(y);
            const VectorXd b = (rcum_.diagonal() - y.colwise().squaredNorm().transpose()) / sigma2_;
            v = f.c.dot(b);
        }
    }

    GradientSplit g;
    g.V(0) = v;
    g.U(0) = f.c.dot(p.cwiseAbs2());
    g.grad = g.V - g.U;
    if (!g.grad.allFinite()) {
        throw NumericalError("non-finite gradient");
    }
    return g;
}

double MarginalLikelihood::neg_log_ml(const Hyperparameters& eta, VectorXd& mean) const
{
    const Factor f = factorize(eta);
    const double v = value_of(f);
    mean = mean_of(f);
    return v;
}

VectorXd MarginalLikelihood::posterior_mean(const Hyperparameters& eta) const
{
    return mean_of(factorize(eta));
}

VectorXd MarginalLikelihood::mean_of(const Factor& f) const
{
    // F x = U (s .* x): suffix sums.
    VectorXd h = f.s.cwiseProduct(f.x);
    for (Index i = n_ - 2; i >= 0; --i) {
        h(i) += h(i + 1);
    }
    return h;
}

PosteriorMoments MarginalLikelihood::posterior_moments(const Hyperparameters& eta) const
{
    const Factor f = factorize(eta);

    PosteriorMoments out;
    out.mean = f.s.cwiseProduct(f.x);
    for (Index i = n_ - 2; i >= 0; --i) {
        out.mean(i) += out.mean(i + 1);
    }

    // P = sigma2 F A^{-1} F^T = sigma2 W^T W with W = S^{-1} F^T.
    MatrixXd w = MatrixXd::Zero(n_, n_);
    for (Index k = 0; k < n_; ++k) {
        w.row(k).head(k + 1).setConstant(f.s(k));
    }
    f.llt.matrixL().solveInPlace(w);
    out.cov = sigma2_ * (w.transpose() * w);
    return out;
}

EStep MarginalLikelihood::e_step(const Hyperparameters& eta, bool with_variance) const
{
    const Factor f = factorize(eta);
    EStep e;
    e.eta = eta;
    e.sigma2 = sigma2_;
    e.x = f.x;
    if (with_variance) {
        e.ainv_diag = inverse_diagonal(f.llt);
    }
    return e;
}

} // namespace bsysid
