#include "bsysid/estimator.hpp"

#include "bsysid/errors.hpp"
#include "bsysid/likelihood.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace bsysid {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

NoiseEstimate noise_from(const SufficientStats& stats, LsResult ls)
{
    NoiseEstimate out;
    out.h_ls = std::move(ls.h);
    out.provisional = ls.provisional;
    if (stats.Nbar() > stats.order()) {
        out.sigma2 = noise_variance(stats, out.h_ls);
    } else {
        out.sigma2 = std::max(stats.Ybar() / static_cast<double>(stats.Nbar()), kMinNoiseVariance);
        out.provisional = true;
    }
    return out;
}

// R^{-1} when R is safely invertible.
std::optional<MatrixXd> direct_inverse(const MatrixXd& r)
{
    Eigen::LLT<MatrixXd> llt(r);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
        return std::nullopt;
    }
    return llt.solve(MatrixXd::Identity(r.rows(), r.cols()));
}

// lambda0 = Ybar / (Nbar n)
Hyperparameters initial_guess(const SufficientStats& stats, double beta)
{
    const double lambda0 = stats.Ybar()
                           / (static_cast<double>(stats.Nbar()) * static_cast<double>(stats.order()));
    return {lambda0, beta};
}

} // namespace

NoiseEstimate estimate_noise(const SufficientStats& stats)
{
    return noise_from(stats, ls_estimate_or_ridge(stats));
}

OnlineEstimator::OnlineEstimator(Index n, const UpdaterSpec& spec, const EstimatorConfig& cfg)
    : stats_(n)
    , spec_(spec)
    , cfg_(cfg)
{
}

OnlineEstimator OnlineEstimator::initialize(const Batch& warmup, Index n, const UpdaterSpec& spec,
                                            const EstimatorConfig& cfg)
{
    cfg.optim.validate();
    if (!(cfg.beta0 >= 0.0 && cfg.beta0 <= 1.0)) {
        throw std::invalid_argument("beta0 must lie in [0, 1]");
    }
    if (warmup.size() == 0) {
        throw std::invalid_argument("warmup batch is empty");
    }

    const auto t0 = Clock::now();
    OnlineEstimator est(n, spec, cfg);
    est.stats_.ingest(warmup);

    const NoiseEstimate noise = estimate_noise(est.stats_);
    const MarginalLikelihood ctx(est.stats_, noise.sigma2);

    const Hyperparameters eta0 = initial_guess(est.stats_, cfg.beta0);
    const OptResult opt = opt_until_convergence(ctx, eta0, Method::SGP, cfg.optim);

    est.eta_ = opt.eta;
    est.state_ = opt.state;
    est.warmup_.eta = opt.eta;
    est.warmup_.h_hat = ctx.posterior_mean(opt.eta);
    est.warmup_.sigma2 = noise.sigma2;
    est.warmup_.nbar = est.stats_.Nbar();
    est.warmup_.provisional_sigma2 = noise.provisional;
    est.warmup_.iterations = opt.iterations;
    est.warmup_.elapsed_seconds = seconds_since(t0);
    return est;
}

OnlineEstimator OnlineEstimator::with_updater(const UpdaterSpec& spec) const
{
    OnlineEstimator copy = *this;
    copy.spec_ = spec;
    return copy;
}

EstimateSnapshot OnlineEstimator::process_batch(const Batch& batch)
{
    const auto t0 = Clock::now();

    SufficientStats stats = stats_;
    const VectorXd first_row =
        batch.size() > 0 ? VectorXd(stats.regressors(batch.u).row(0).transpose()) : VectorXd();
    stats.ingest(batch);

    // Steps 4-5: LS estimate and noise variance.
    std::optional<MatrixXd> r_inv;
    NoiseEstimate noise;
    if (cfg_.use_sherman_morrison && batch.size() == 1) {
        if (r_inv_) {
            try {
                r_inv = sherman_morrison_inverse_update(*r_inv_, first_row);
            } catch (const IllConditioned&) {
                r_inv = direct_inverse(stats.R());
            }
        } else {
            r_inv = direct_inverse(stats.R());
        }
    }
    if (r_inv) {
        noise = noise_from(stats, {*r_inv * stats.Ytilde(), false});
    } else {
        noise = estimate_noise(stats);
    }

    // Step 6: hyperparameters.
    const MarginalLikelihood ctx(stats, noise.sigma2);
    OptimizerState state = state_;
    Hyperparameters eta;
    std::optional<VectorXd> h_new;
    int iterations = 1;
    if (spec_.mode == Mode::Opt) {
        const OptResult opt =
            cfg_.opt_warm_start
                ? opt_until_convergence(ctx, eta_, spec_.method, cfg_.optim, spec_.lambda_only,
                                        &state)
                : opt_until_convergence(ctx, initial_guess(stats, spec_.lambda_only ? eta_.beta : cfg_.beta0),
                                        spec_.method, cfg_.optim, spec_.lambda_only);
        eta = opt.eta;
        state = opt.state;
        iterations = opt.iterations;
    } else {
        StepReport rep = update_step(ctx, state, cfg_.optim, eta_, spec_.method, spec_.lambda_only, false);
        eta = rep.eta_new;
        h_new = std::move(rep.h_new);
    }

    // Step 7: posterior mean.
    EstimateSnapshot snap;
    snap.h_hat = h_new ? std::move(*h_new) : ctx.posterior_mean(eta);
    snap.eta = eta;
    snap.sigma2 = noise.sigma2;
    snap.nbar = stats.Nbar();
    snap.provisional_sigma2 = noise.provisional;
    snap.iterations = iterations;

    stats_ = std::move(stats);
    eta_ = eta;
    state_ = std::move(state);
    r_inv_ = std::move(r_inv);
    snap.elapsed_seconds = seconds_since(t0);
    last_ = snap;
    return snap;
}

const EstimateSnapshot& OnlineEstimator::current_estimate() const
{
    if (!last_) {
        throw std::logic_error("no batch has been processed yet");
    }
    return *last_;
}

} // namespace bsysid
