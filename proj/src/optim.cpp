#include "bsysid/optim.hpp"

#include "bsysid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bsysid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp_beta(double beta)
{
    return std::clamp(beta, kBetaEps, 1.0 - kBetaEps);
}

Hyperparameters interior(const Hyperparameters& eta)
{
    return {eta.lambda, clamp_beta(eta.beta)};
}

GradientSplit gradient_of(const MarginalLikelihood& ctx, const Hyperparameters& eta,
                          bool lambda_only, double* value = nullptr)
{
    return lambda_only ? ctx.lambda_gradient(eta, value) : ctx.gradient(eta, value);
}

double safe_neg_log_ml(const MarginalLikelihood& ctx, const Hyperparameters& eta,
                       VectorXd* mean = nullptr)
{
    try {
        return mean ? ctx.neg_log_ml(eta, *mean) : ctx.neg_log_ml(eta);
    } catch (const NumericalError&) {
        return kInf;
    }
}

double log_sum_exp(const VectorXd& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) {
        return m;
    }
    return m + std::log((v.array() - m).exp().sum());
}

// Golden-section minimization of f on [a, b].
template <class F>
double golden_section(F&& f, double a, double b, double tol, int max_evals)
{
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    int evals = 2;
    while (b - a > tol && evals < max_evals) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        ++evals;
    }
    return fc < fd ? c : d;
}

} // namespace

std::string_view method_name(Method m)
{
    switch (m) {
    case Method::BB: return "BB";
    case Method::SGP: return "SGP";
    case Method::BFGS: return "BFGS";
    case Method::EM: return "EM";
    case Method::EM1: return "EM1";
    case Method::EM2: return "EM2";
    }
    return "?";
}

bool is_gradient_method(Method m)
{
    return m == Method::BB || m == Method::SGP || m == Method::BFGS;
}

void OptimizerConfig::validate() const
{
    auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
    if (!(alpha_min > 0.0) || !(alpha_min < alpha_max)) fail("need 0 < alpha_min < alpha_max");
    if (!(d_min > 0.0) || !(d_min < d_max)) fail("need 0 < d_min < d_max");
    if (!(tau0 > 0.0)) fail("tau0 must be positive");
    if (!(ls_c > 0.0 && ls_c < 1.0)) fail("line-search c must lie in (0, 1)");
    if (!(ls_delta > 0.0 && ls_delta < 1.0)) fail("line-search delta must lie in (0, 1)");
    if (max_backtracks < 0) fail("max_backtracks must be >= 0");
    if (!(opt_tol > 0.0)) fail("opt_tol must be positive");
    if (opt_max_iter < 1) fail("opt_max_iter must be >= 1");
    if (!(golden_tol > 0.0)) fail("golden_tol must be positive");
    if (golden_max_evals < 2) fail("golden_max_evals must be >= 2");
}

SecantPair secant_pair(const VectorXd& eta_k, const VectorXd& eta_km1, const VectorXd& grad_k,
                       const VectorXd& grad_km1)
{
    if (eta_k.size() != eta_km1.size() || grad_k.size() != grad_km1.size()
        || eta_k.size() != grad_k.size()) {
        throw std::invalid_argument("secant_pair: dimension mismatch");
    }
    return {eta_k - eta_km1, grad_k - grad_km1};
}

BbStep bb_stepsize(const OptimizerConfig& cfg, double tau, const VectorXd& r, const VectorXd& w,
                   const VectorXd& scaling)
{
    const VectorXd d = scaling.size() == 0 ? VectorXd::Ones(r.size()) : scaling;
    if (d.size() != r.size() || w.size() != r.size()) {
        throw std::invalid_argument("bb_stepsize: dimension mismatch");
    }
    const VectorXd dinv = d.cwiseInverse();

    const double rw1 = r.dot(dinv.cwiseProduct(w));  // r^T D^-1 w
    const double rw2 = r.dot(d.cwiseProduct(w));     // r^T D w
    if (!(r.dot(w) > 0.0) || (!(rw1 > 0.0) && !(rw2 > 0.0))) {
        return {cfg.alpha_min, tau, true};
    }
    // A single non-positive scaled denominator maps that rule to alpha_max.
    const double a1 = rw1 > 0.0 ? dinv.cwiseProduct(r).squaredNorm() / rw1 : cfg.alpha_max;
    const double a2 = rw2 > 0.0 ? rw2 / d.cwiseProduct(w).squaredNorm() : cfg.alpha_max;
    const double a1c = std::clamp(a1, cfg.alpha_min, cfg.alpha_max);
    const double a2c = std::clamp(a2, cfg.alpha_min, cfg.alpha_max);

    if (a2c / a1c <= tau) {
        return {a2c, 0.9 * tau, false};
    }
    return {a1c, 1.1 * tau, false};
}

Eigen::Vector2d sgp_scaling(const Hyperparameters& eta, const GradientSplit& split,
                            const OptimizerConfig& cfg)
{
    const Eigen::Vector2d x = eta.as_vector();
    Eigen::Vector2d d;
    for (int i = 0; i < 2; ++i) {
        const double v = split.V(i);
        d(i) = v > 0.0 ? std::clamp(x(i) / v, cfg.d_min, cfg.d_max) : cfg.d_max;
    }
    return d;
}

MatrixXd bfgs_update(const MatrixXd& b_prev, const VectorXd& r, const VectorXd& w)
{
    const double rw = r.dot(w);
    if (!(rw > 1e-12 * r.norm() * w.norm()) || rw == 0.0) {
        return b_prev;
    }
    const double rho = 1.0 / rw;
    const Index d = r.size();
    const MatrixXd v = MatrixXd::Identity(d, d) - rho * r * w.transpose();
    MatrixXd b = v * b_prev * v.transpose() + rho * r * r.transpose();
    return 0.5 * (b + b.transpose());
}

Hyperparameters project(const Eigen::Vector2d& z, const Eigen::Vector2d& w_diag)
{
    if (!(w_diag.array() > 0.0).all()) {
        throw std::invalid_argument("projection weights must be positive");
    }
    return {std::max(z(0), 0.0), std::clamp(z(1), 0.0, 1.0)};
}

OptimizerState bootstrap_state(const Hyperparameters& eta, const OptimizerConfig& cfg)
{
    OptimizerState st;
    st.eta_prev = {eta.lambda * (1.0 + 1e-3), clamp_beta(eta.beta * (1.0 + 1e-3))};
    st.tau = cfg.tau0;
    return st;
}

StepReport gradient_step(const MarginalLikelihood& ctx, OptimizerState& state,
                         const OptimizerConfig& cfg, const Hyperparameters& eta_k, Method method,
                         bool lambda_only)
{
    if (!is_gradient_method(method)) {
        throw std::invalid_argument("gradient_step needs BB, SGP or BFGS");
    }
    require_in_omega(eta_k, "gradient_step");
    const Index d = lambda_only ? 1 : 2;

    const Hyperparameters eta = interior(eta_k);
    double ml0 = 0.0;
    const GradientSplit split = gradient_of(ctx, eta, lambda_only, &ml0);
    const VectorXd g = split.grad.head(d);
    const VectorXd x = eta.as_vector().head(d);

    const Hyperparameters prev = interior(state.eta_prev);
    if (!state.grad_prev) {
        state.grad_prev = gradient_of(ctx, prev, lambda_only).grad;
    }
    const SecantPair sp =
        secant_pair(x, prev.as_vector().head(d), g, state.grad_prev->head(d));

    // Scaled identity used when no curvature model is usable.
    auto fallback_alpha = [&] {
        const double rw = sp.r.dot(sp.w);
        return rw > 0.0 ? std::clamp(rw / sp.w.squaredNorm(), cfg.alpha_min, cfg.alpha_max)
                        : cfg.alpha_min;
    };

    VectorXd step;
    switch (method) {
    case Method::BB: {
        const BbStep bb = bb_stepsize(cfg, state.tau, sp.r, sp.w);
        state.tau = bb.tau_next;
        step = bb.alpha * g;
        break;
    }
    case Method::SGP: {
        const VectorXd dg = sgp_scaling(eta, split, cfg).head(d);
        const BbStep bb = bb_stepsize(cfg, state.tau, sp.r, sp.w, dg);
        state.tau = bb.tau_next;
        // D already carries the problem scale; alpha = 1 is the plain
        // split-gradient step lambda U / V.
        const double alpha = bb.safeguarded ? std::clamp(1.0, cfg.alpha_min, cfg.alpha_max) : bb.alpha;
        step = alpha * dg.cwiseProduct(g);
        break;
    }
    case Method::BFGS: {
        MatrixXd b0;
        if (state.b_prev && state.b_prev->rows() == d) {
            b0 = *state.b_prev;
        } else {
            b0 = fallback_alpha() * MatrixXd::Identity(d, d);
        }
        const MatrixXd b = bfgs_update(b0, sp.r, sp.w);
        state.b_prev = b;
        step = b * g;
        break;
    }
    default:
        break;
    }

    auto projected = [&](const VectorXd& s) {
        Eigen::Vector2d z = eta.as_vector();
        z.head(d) -= s;
        Hyperparameters p = project(z);
        p.beta = lambda_only ? eta.beta : clamp_beta(p.beta);
        return p;
    };

    Hyperparameters z = projected(step);
    Eigen::Vector2d delta = z.as_vector() - eta.as_vector();
    double slope = split.grad.dot(delta);
    if (slope >= 0.0 && delta.squaredNorm() > 0.0) {
        // Projection of a non-diagonal model can leave the descent cone.
        const double a = fallback_alpha();
        if (method == Method::BFGS) {
            state.b_prev = a * MatrixXd::Identity(d, d);
        }
        z = projected(a * g);
        delta = z.as_vector() - eta.as_vector();
        slope = split.grad.dot(delta);
    }

    StepReport rep;
    rep.method = method;
    rep.ml_before = ml0;
    rep.ml_after = ml0;
    rep.eta_new = eta_k;

    if (delta.squaredNorm() > 0.0 && slope < 0.0) {
        double gamma = 1.0;
        bool accepted = false;
        VectorXd mean;
        for (int j = 0; j <= cfg.max_backtracks; ++j) {
            const Hyperparameters cand = Hyperparameters::from_vector(eta.as_vector() + gamma * delta);
            const double l = in_omega(cand) ? safe_neg_log_ml(ctx, cand, &mean) : kInf;
            if (std::isfinite(l) && l <= rep.ml_before + cfg.ls_c * gamma * slope) {
                rep.eta_new = cand;
                rep.h_new = std::move(mean);
                rep.ml_after = l;
                rep.backtracks = j;
                rep.gamma = gamma;
                accepted = true;
                break;
            }
            gamma *= cfg.ls_delta;
        }
        if (!accepted) {
            rep.backtracks = cfg.max_backtracks;
            rep.gamma = 0.0;
        }
    }

    state.eta_prev = eta;
    state.grad_prev = split.grad;
    return rep;
}

StepReport em_step(const MarginalLikelihood& ctx, const Hyperparameters& eta_k,
                   const OptimizerConfig& cfg, bool evaluate_objective)
{
    require_in_omega(eta_k, "em_step");
    const Hyperparameters eta = interior(eta_k);
    const Index n = ctx.order();
    const double nn = static_cast<double>(n);

    StepReport rep;
    rep.method = Method::EM;
    if (evaluate_objective) {
        rep.ml_before = ctx.neg_log_ml(eta);
    }

    const EStep e = ctx.e_step(eta);
    const VectorXd weight = e.x.cwiseAbs2() + e.sigma2 * e.ainv_diag;
    const VectorXd lc_old = tc_log_weights(n, eta.beta);

    // ln T(b) with T(b) = E[h^T K_b^{-1} h] = lambda sum_k (c_k / c_k(b)) weight_k.
    std::vector<Index> active;
    for (Index k = 0; k < n; ++k) {
        if (weight(k) > 0.0) {
            active.push_back(k);
        }
    }
    if (eta.lambda == 0.0 || active.empty()) {
        rep.eta_new = {0.0, eta.beta};
    } else {
        VectorXd base(static_cast<Index>(active.size()));
        for (Index i = 0; i < base.size(); ++i) {
            base(i) = lc_old(active[i]) + std::log(weight(active[i]));
        }
        auto log_t = [&](double b) {
            const VectorXd lc = tc_log_weights(n, b);
            VectorXd terms(base.size());
            for (Index i = 0; i < base.size(); ++i) {
                terms(i) = base(i) - lc(active[i]);
            }
            return std::log(eta.lambda) + log_sum_exp(terms);
        };
        auto profile = [&](double b) { return nn * log_t(b) + tc_logdet(n, b); };

        double beta_star = golden_section(profile, kBetaEps, 1.0 - kBetaEps, cfg.golden_tol,
                                          cfg.golden_max_evals);
        if (!(profile(beta_star) <= profile(eta.beta))) {
            beta_star = eta.beta;
        }
        const double lambda_star = std::exp(log_t(beta_star)) / nn;
        if (!std::isfinite(lambda_star)) {
            throw NumericalError("EM lambda update overflowed");
        }
        rep.eta_new = {lambda_star, beta_star};
    }

    rep.gamma = 1.0;
    if (evaluate_objective) {
        rep.ml_after = ctx.neg_log_ml(rep.eta_new);
    }
    return rep;
}

Hyperparameters em1_lambda(const MarginalLikelihood& ctx, const Hyperparameters& eta_k)
{
    require_in_omega(eta_k, "em1_lambda");
    const EStep e = ctx.e_step(eta_k, false);
    // h^T K_beta^{-1} h = lambda x^T x
    return {eta_k.lambda * e.x.squaredNorm() / static_cast<double>(ctx.order()), eta_k.beta};
}

Hyperparameters em2_lambda(const MarginalLikelihood& ctx, const Hyperparameters& eta_k)
{
    require_in_omega(eta_k, "em2_lambda");
    const EStep e = ctx.e_step(eta_k, true);
    // Tr(K_beta^{-1} P) = lambda sigma2 Tr(A^{-1})
    const double t = e.x.squaredNorm() + e.sigma2 * e.ainv_diag.sum();
    return {eta_k.lambda * t / static_cast<double>(ctx.order()), eta_k.beta};
}

double em_lambda_update(const VectorXd& h, const MatrixXd& p, const MatrixXd& k_beta,
                        bool with_trace)
{
    const CholeskyFactor chol(k_beta);
    double t = h.dot(chol.solve(h));
    if (with_trace) {
        t += chol.solve(p).trace();
    }
    return std::max(t / static_cast<double>(h.size()), 0.0);
}

StepReport update_step(const MarginalLikelihood& ctx, OptimizerState& state,
                       const OptimizerConfig& cfg, const Hyperparameters& eta_k, Method method,
                       bool lambda_only, bool evaluate_objective)
{
    if (is_gradient_method(method)) {
        return gradient_step(ctx, state, cfg, eta_k, method, lambda_only);
    }
    if (method == Method::EM && !lambda_only) {
        return em_step(ctx, eta_k, cfg, evaluate_objective);
    }

    StepReport rep;
    rep.method = method;
    if (evaluate_objective) {
        rep.ml_before = ctx.neg_log_ml(eta_k);
    }
    rep.eta_new = method == Method::EM1 ? em1_lambda(ctx, eta_k) : em2_lambda(ctx, eta_k);
    rep.gamma = 1.0;
    if (evaluate_objective) {
        rep.ml_after = ctx.neg_log_ml(rep.eta_new);
    }
    return rep;
}

OptResult opt_until_convergence(const MarginalLikelihood& ctx, const Hyperparameters& eta0,
                                Method method, const OptimizerConfig& cfg, bool lambda_only,
                                const OptimizerState* state)
{
    cfg.validate();
    require_in_omega(eta0, "opt_until_convergence");

    OptResult out;
    out.state = state ? *state : bootstrap_state(eta0, cfg);
    out.eta = eta0;
    double prev = ctx.neg_log_ml(eta0);
    out.ml = prev;

    for (int it = 1; it <= cfg.opt_max_iter; ++it) {
        const StepReport rep = update_step(ctx, out.state, cfg, out.eta, method, lambda_only, true);
        out.eta = rep.eta_new;
        out.ml = rep.ml_after;
        out.iterations = it;
        if (std::abs(out.ml - prev) <= cfg.opt_tol * (1.0 + std::abs(out.ml))) {
            break;
        }
        prev = out.ml;
    }
    return out;
}

} // namespace bsysid
