#pragma once

#include "bsysid/kernel.hpp"
#include "bsysid/optim.hpp"
#include "bsysid/stats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

namespace bsysid {

enum class Mode { OneStep, Opt };

/// Which hyperparameter update runs on every batch. With `lambda_only` beta
/// stays at its warmup value; EM with `lambda_only` is EM2.
struct UpdaterSpec {
    Method method = Method::SGP;
    bool lambda_only = false;
    Mode mode = Mode::OneStep;

    friend bool operator==(const UpdaterSpec&, const UpdaterSpec&) = default;
};

struct EstimatorConfig {
    OptimizerConfig optim;
    double beta0 = 0.9;
    bool use_sherman_morrison = true;
    /// Opt mode: start each batch from the previous estimate and optimizer
    /// state (true) or from the initial guess with a fresh state (false).
    bool opt_warm_start = false;
};

struct EstimateSnapshot {
    VectorXd h_hat;
    Hyperparameters eta;
    double sigma2 = 0.0;
    double elapsed_seconds = 0.0;  ///< wall time of the call that produced it
    std::int64_t nbar = 0;
    bool provisional_sigma2 = false;  ///< Nbar <= n or rank-deficient R
    int iterations = 0;               ///< updater iterations (1 in one-step mode)
};

/// Streaming empirical-Bayes FIR estimator.
///
/// Per batch: update sufficient statistics, refresh the LS noise variance,
/// move the hyperparameters (one updater step, or a full optimization in Opt
/// mode), and return the posterior mean of the impulse response.
class OnlineEstimator {
public:
    /// Ingests `warmup`, estimates sigma2 and runs SGP to convergence from
    /// lambda0 = Ybar / (Nbar n), beta0 = cfg.beta0. Throws
    /// std::invalid_argument for an empty warmup.
    static OnlineEstimator initialize(const Batch& warmup, Index n, const UpdaterSpec& spec,
                                      const EstimatorConfig& cfg = {});

    /// Same estimator state driven by a different updater.
    OnlineEstimator with_updater(const UpdaterSpec& spec) const;

    /// Atomic: on any exception the estimator is left as it was.
    EstimateSnapshot process_batch(const Batch& batch);

    /// Last processed batch. Throws std::logic_error before the first one.
    const EstimateSnapshot& current_estimate() const;

    /// Result of initialize().
    const EstimateSnapshot& warmup_estimate() const { return warmup_; }

    const SufficientStats& stats() const { return stats_; }
    const Hyperparameters& eta() const { return eta_; }
    const OptimizerState& optimizer_state() const { return state_; }
    const UpdaterSpec& updater() const { return spec_; }
    Index order() const { return stats_.order(); }

private:
    OnlineEstimator(Index n, const UpdaterSpec& spec, const EstimatorConfig& cfg);

    SufficientStats stats_;
    UpdaterSpec spec_;
    EstimatorConfig cfg_;
    Hyperparameters eta_;
    OptimizerState state_;
    std::optional<MatrixXd> r_inv_;  // R^{-1}, kept current across rank-one batches
    EstimateSnapshot warmup_;
    std::optional<EstimateSnapshot> last_;
};

struct NoiseEstimate {
    double sigma2 = 0.0;
    VectorXd h_ls;
    bool provisional = false;
};

/// LS noise variance; before Nbar > n falls back to max(Ybar / Nbar, 1e-12)
/// and marks the result provisional.
NoiseEstimate estimate_noise(const SufficientStats& stats);

} // namespace bsysid
