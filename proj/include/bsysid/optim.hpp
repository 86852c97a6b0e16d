#pragma once

#include "bsysid/kernel.hpp"
#include "bsysid/likelihood.hpp"

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <string_view>

namespace bsysid {

/// Hyperparameter updaters. BB, SGP and BFGS are projected quasi-Newton
/// steps; EM updates both hyperparameters; EM1/EM2 update lambda only.
enum class Method { BB, SGP, BFGS, EM, EM1, EM2 };

std::string_view method_name(Method m);
bool is_gradient_method(Method m);

struct OptimizerConfig {
    double alpha_min = 1e-7;
    double alpha_max = 1e7;
    double d_min = 1e-10;
    double d_max = 1e10;
    double tau0 = 0.5;

    // Armijo backtracking
    double ls_c = 1e-4;
    double ls_delta = 0.5;
    int max_backtracks = 20;

    // run-to-convergence
    double opt_tol = 1e-6;
    int opt_max_iter = 500;

    // EM M-step search over beta
    double golden_tol = 1e-6;
    int golden_max_evals = 100;

    /// Throws std::invalid_argument on inconsistent bounds.
    void validate() const;
};

/// Quantities carried from one update to the next.
struct OptimizerState {
    Hyperparameters eta_prev;
    std::optional<Eigen::Vector2d> grad_prev;  // computed lazily when absent
    std::optional<MatrixXd> b_prev;            // BFGS inverse-Hessian model
    double tau = 0.5;
};

struct StepReport {
    Hyperparameters eta_new;
    double ml_before = std::numeric_limits<double>::quiet_NaN();
    double ml_after = std::numeric_limits<double>::quiet_NaN();
    int backtracks = 0;
    double gamma = 0.0;
    Method method = Method::BB;
    std::optional<VectorXd> h_new;  // posterior mean at eta_new, when a line search computed it
};

struct SecantPair {
    VectorXd r;  ///< eta_k - eta_{k-1}
    VectorXd w;  ///< grad_k - grad_{k-1}
};

SecantPair secant_pair(const VectorXd& eta_k, const VectorXd& eta_km1, const VectorXd& grad_k,
                       const VectorXd& grad_km1);

struct BbStep {
    double alpha = 0.0;
    double tau_next = 0.0;
    bool safeguarded = false;  ///< curvature test failed, alpha = alpha_min
};

/// Alternating Barzilai-Borwein step. With `scaling` (diagonal of D, empty for
/// the identity) the scaled rules r^T D^-2 r / r^T D^-1 w and
/// r^T D w / w^T D^2 w are used; a rule whose denominator alone is
/// non-positive is replaced by alpha_max. r^T w <= 0 (or both scaled
/// denominators non-positive) gives alpha_min and leaves tau unchanged.
BbStep bb_stepsize(const OptimizerConfig& cfg, double tau, const VectorXd& r, const VectorXd& w,
                   const VectorXd& scaling = VectorXd());

/// Diagonal SGP scaling clamp(eta_i / V_i, d_min, d_max). A non-positive V_i
/// maps to d_max.
Eigen::Vector2d sgp_scaling(const Hyperparameters& eta, const GradientSplit& split,
                            const OptimizerConfig& cfg);

/// BFGS inverse-Hessian update satisfying B w = r. Returns B_prev unchanged
/// when r^T w <= 1e-12 |r| |w|.
MatrixXd bfgs_update(const MatrixXd& b_prev, const VectorXd& r, const VectorXd& w);

/// Weighted projection onto Omega. Omega is a box and W is diagonal, so the
/// minimizer of (x - z)^T W (x - z) is the componentwise clamp for every
/// positive diagonal W; `w_diag` is checked but does not change the result.
Hyperparameters project(const Eigen::Vector2d& z, const Eigen::Vector2d& w_diag = {1.0, 1.0});

/// One projected quasi-Newton step with Armijo backtracking. `state` holds the
/// previous iterate and gradient and is advanced to eta_k on return. With
/// `lambda_only` beta is left untouched and the model is one-dimensional.
StepReport gradient_step(const MarginalLikelihood& ctx, OptimizerState& state,
                         const OptimizerConfig& cfg, const Hyperparameters& eta_k, Method method,
                         bool lambda_only = false);

/// One EM iteration on both hyperparameters: posterior moments at eta_k, then
/// the closed-form lambda and a golden-section search on beta. Never increases
/// the negative log marginal likelihood. ml_before/ml_after are only filled
/// when `evaluate_objective` is set.
StepReport em_step(const MarginalLikelihood& ctx, const Hyperparameters& eta_k,
                   const OptimizerConfig& cfg, bool evaluate_objective = true);

/// lambda <- h^T K_beta^{-1} h / n (beta unchanged).
Hyperparameters em1_lambda(const MarginalLikelihood& ctx, const Hyperparameters& eta_k);

/// lambda <- [h^T K_beta^{-1} h + Tr(K_beta^{-1} P)] / n (beta unchanged).
Hyperparameters em2_lambda(const MarginalLikelihood& ctx, const Hyperparameters& eta_k);

/// The lambda M-step [h^T K_beta^{-1} h + Tr(K_beta^{-1} P)] / n written on
/// explicit posterior moments and a dense K_beta (reference form). The trace
/// term is dropped unless `with_trace`. Result is clamped at 0.
double em_lambda_update(const VectorXd& h, const MatrixXd& p, const MatrixXd& k_beta,
                        bool with_trace);

/// Dispatch one update of any method. Gradient methods use and advance `state`.
StepReport update_step(const MarginalLikelihood& ctx, OptimizerState& state,
                       const OptimizerConfig& cfg, const Hyperparameters& eta_k, Method method,
                       bool lambda_only, bool evaluate_objective = true);

struct OptResult {
    Hyperparameters eta;
    double ml = 0.0;
    int iterations = 0;
    OptimizerState state;  ///< secant seed: last gradient point and gradient
};

/// Iterate `method` until |L_j - L_{j-1}| <= opt_tol (1 + |L_j|) or
/// opt_max_iter. Starts from `state` when given (warm start), otherwise from a
/// fresh state seeded at eta0 * (1 + 1e-3).
OptResult opt_until_convergence(const MarginalLikelihood& ctx, const Hyperparameters& eta0,
                                Method method, const OptimizerConfig& cfg, bool lambda_only = false,
                                const OptimizerState* state = nullptr);

/// Fresh state whose previous iterate is eta * (1 + 1e-3) (beta kept inside
/// the gradient domain); its gradient is computed on first use.
OptimizerState bootstrap_state(const Hyperparameters& eta, const OptimizerConfig& cfg);

} // namespace bsysid
