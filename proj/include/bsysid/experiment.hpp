#pragma once

#include "bsysid/estimator.hpp"
#include "bsysid/simgen.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace bsysid {

/// Parses an updater token: bb, sgp, bfgs, em, em1, em2, each optionally
/// suffixed "-lambda" (beta frozen) and/or prefixed "opt-" (run to
/// convergence every batch). "opt" alone is opt-sgp. Tokens without the
/// prefix/suffix take `default_mode` / `default_lambda_only`. Throws
/// std::invalid_argument naming the token.
UpdaterSpec parse_method_token(std::string_view token, Mode default_mode = Mode::OneStep,
                               bool default_lambda_only = false);

/// CSV label: "SGP", "EM1", ... and "OPT" / "OPT-BB" ... in Opt mode.
std::string method_label(const UpdaterSpec& spec);

struct ExperimentConfig {
    Index n = 80;
    Index n_total = 5000;
    Index n_warmup = 100;
    std::vector<Index> nk{10};
    double snr = 5.0;
    int runs = 200;
    std::uint64_t seed = 1;
    std::vector<UpdaterSpec> methods;
    int threads = 0;  ///< 0: one per hardware thread
    bool record_timing = true;
    double band = 0.8;
    SystemOptions system;
    EstimatorConfig estimator;

    /// Throws std::invalid_argument naming the offending setting.
    void validate() const;
};

/// One row of a trace. Row 0 of every (run, method) is the shared warmup
/// estimate, with zero timing.
struct RunRecord {
    int run_id = 0;
    std::string method;
    bool lambda_only = false;
    int batch_index = 0;
    std::int64_t nbar = 0;
    double fit = 0.0;
    double lambda = 0.0;
    double beta = 0.0;
    double sigma2 = 0.0;
    double batch_seconds = 0.0;
    double cumulative_seconds = 0.0;
};

struct Dataset {
    TrueSystem system;
    VectorXd u;
    VectorXd y;
    double sigma2_true = 0.0;
};

/// Synthetic system and data for Monte Carlo run `run_index`.
Dataset make_dataset(const ExperimentConfig& cfg, std::uint64_t run_index);

/// Identify from (u, y): warmup on the first n_warmup samples, then batches
/// of `nk` samples for every configured method. Trailing samples that do not
/// fill a batch are ignored. `h_true` may be null (fit left at 0).
std::vector<RunRecord> identify(const VectorXd& u, const VectorXd& y, const ExperimentConfig& cfg,
                                Index nk, int run_id, const VectorXd* h_true);

/// One synthetic system (run index 0), one trace group per nk value; the
/// group index is the run_id.
std::vector<RunRecord> run_single(const ExperimentConfig& cfg, Dataset* dataset_out = nullptr);

/// cfg.runs independent runs (single nk), in run order regardless of
/// threading.
std::vector<RunRecord> run_montecarlo(const ExperimentConfig& cfg);

struct SummaryRow {
    std::string method;
    bool lambda_only = false;
    int runs = 0;
    double fit_q1 = 0.0;
    double fit_median = 0.0;
    double fit_q3 = 0.0;
    double time_median = 0.0;  ///< median over runs of final cumulative seconds
    double time_total = 0.0;
};

/// Final-batch statistics per method, in configured method order.
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records,
                                  const ExperimentConfig& cfg);

/// Linearly interpolated sample quantile, p in [0, 1].
double quantile(std::vector<double> values, double p);

inline constexpr const char* kRunRecordSchema = "# schema: bsysid-runrecord v1";

/// `with_fit = false` drops the fit column (no ground truth).
void write_records_csv(std::ostream& os, const std::vector<RunRecord>& records, bool with_fit);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

/// Two-column "u,y" dataset with header line.
void write_dataset_csv(std::ostream& os, const VectorXd& u, const VectorXd& y);

} // namespace bsysid
