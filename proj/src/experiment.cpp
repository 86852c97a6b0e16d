#include "bsysid/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace bsysid {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Batch slice(const VectorXd& u, const VectorXd& y, Index start, Index len)
{
    return {u.segment(start, len), y.segment(start, len)};
}

} // namespace

UpdaterSpec parse_method_token(std::string_view token, Mode default_mode, bool default_lambda_only)
{
    const std::string original(token);
    UpdaterSpec spec;
    spec.mode = default_mode;
    spec.lambda_only = default_lambda_only;

    std::string t;
    for (char ch : token) {
        t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    if (t == "opt") {
        t = "opt-sgp";
    }
    if (t.rfind("opt-", 0) == 0) {
        spec.mode = Mode::Opt;
        t.erase(0, 4);
    }
    const std::string suffix = "-lambda";
    if (t.size() > suffix.size() && t.compare(t.size() - suffix.size(), suffix.size(), suffix) == 0) {
        spec.lambda_only = true;
        t.erase(t.size() - suffix.size());
    }

    if (t == "bb") spec.method = Method::BB;
    else if (t == "sgp") spec.method = Method::SGP;
    else if (t == "bfgs") spec.method = Method::BFGS;
    else if (t == "em") spec.method = Method::EM;
    else if (t == "em1") spec.method = Method::EM1;
    else if (t == "em2") spec.method = Method::EM2;
    else throw std::invalid_argument("unknown method '" + original + "'");

    if (spec.method == Method::EM1 || spec.method == Method::EM2) {
        spec.lambda_only = true;
    }
    return spec;
}

std::string method_label(const UpdaterSpec& spec)
{
    const std::string base(method_name(spec.method));
    if (spec.mode == Mode::Opt) {
        return spec.method == Method::SGP ? "OPT" : "OPT-" + base;
    }
    return base;
}

void ExperimentConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
    if (n < 1) fail("n must be positive");
    if (n_warmup < 1) fail("n_warmup must be positive");
    if (nk.empty()) fail("nk needs at least one value");
    for (Index k : nk) {
        if (k < 1) fail("nk values must be positive");
        if (n_warmup + k > n_total) fail("n_total must cover the warmup and at least one batch");
    }
    if (!(snr > 0.0)) fail("snr must be positive");
    if (runs < 1) fail("runs must be positive");
    if (methods.empty()) fail("methods must name at least one updater");
    if (threads < 0) fail("threads must be >= 0");
    if (!(band > 0.0 && band <= 1.0)) fail("band must lie in (0, 1]");
    estimator.optim.validate();
}

Dataset make_dataset(const ExperimentConfig& cfg, std::uint64_t run_index)
{
    Rng rng = make_rng(cfg.seed, run_index);
    SystemOptions sys_opt = cfg.system;
    sys_opt.n = cfg.n;

    Dataset ds;
    ds.system = random_system(rng, sys_opt);
    ds.u = bandlimited_input(rng, cfg.n_total, cfg.band);
    IoData io = simulate_io(ds.system.h, ds.u, cfg.snr, rng);
    ds.y = std::move(io.y);
    ds.sigma2_true = io.sigma2;
    return ds;
}

std::vector<RunRecord> identify(const VectorXd& u, const VectorXd& y, const ExperimentConfig& cfg,
                                Index nk, int run_id, const VectorXd* h_true)
{
    if (u.size() != y.size()) {
        throw std::invalid_argument("input and output lengths differ");
    }
    if (cfg.methods.empty()) {
        throw std::invalid_argument("no methods configured");
    }
    if (u.size() < cfg.n_warmup + nk) {
        throw std::invalid_argument("data too short for warmup plus one batch");
    }
    const Index batches = (u.size() - cfg.n_warmup) / nk;

    const OnlineEstimator base = OnlineEstimator::initialize(
        slice(u, y, 0, cfg.n_warmup), cfg.n, cfg.methods.front(), cfg.estimator);

    auto score = [&](const VectorXd& h) { return h_true ? fit(*h_true, h) : 0.0; };

    // Methods advance batch by batch together so that all of them are timed
    // under the same machine load.
    const std::size_t nm = cfg.methods.size();
    std::vector<OnlineEstimator> ests;
    std::vector<std::vector<RunRecord>> per(nm);
    std::vector<double> cumulative(nm, 0.0);
    ests.reserve(nm);
    for (std::size_t m = 0; m < nm; ++m) {
        const UpdaterSpec& spec = cfg.methods[m];
        ests.push_back(base.with_updater(spec));
        const EstimateSnapshot& w = ests.back().warmup_estimate();

        RunRecord rec;
        rec.run_id = run_id;
        rec.method = method_label(spec);
        rec.lambda_only = spec.lambda_only;
        rec.batch_index = 0;
        rec.nbar = w.nbar;
        rec.fit = score(w.h_hat);
        rec.lambda = w.eta.lambda;
        rec.beta = w.eta.beta;
        rec.sigma2 = w.sigma2;
        per[m].reserve(static_cast<std::size_t>(batches + 1));
        per[m].push_back(rec);
    }

    for (Index b = 0; b < batches; ++b) {
        const Batch batch = slice(u, y, cfg.n_warmup + b * nk, nk);
        for (std::size_t m = 0; m < nm; ++m) {
            const EstimateSnapshot snap = ests[m].process_batch(batch);
            cumulative[m] += snap.elapsed_seconds;
            RunRecord rec = per[m].front();
            rec.batch_index = static_cast<int>(b + 1);
            rec.nbar = snap.nbar;
            rec.fit = score(snap.h_hat);
            rec.lambda = snap.eta.lambda;
            rec.beta = snap.eta.beta;
            rec.sigma2 = snap.sigma2;
            rec.batch_seconds = cfg.record_timing ? snap.elapsed_seconds : 0.0;
            rec.cumulative_seconds = cfg.record_timing ? cumulative[m] : 0.0;
            per[m].push_back(rec);
        }
    }

    std::vector<RunRecord> out;
    out.reserve(nm * static_cast<std::size_t>(batches + 1));
    for (auto& recs : per) {
        out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
}

std::vector<RunRecord> run_single(const ExperimentConfig& cfg, Dataset* dataset_out)
{
    cfg.validate();
    Dataset ds = make_dataset(cfg, 0);
    std::vector<RunRecord> out;
    for (std::size_t g = 0; g < cfg.nk.size(); ++g) {
        auto part = identify(ds.u, ds.y, cfg, cfg.nk[g], static_cast<int>(g), &ds.system.h);
        out.insert(out.end(), part.begin(), part.end());
    }
    if (dataset_out) {
        *dataset_out = std::move(ds);
    }
    return out;
}

std::vector<RunRecord> run_montecarlo(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (cfg.nk.size() != 1) {
        throw std::invalid_argument("montecarlo takes a single nk value");
    }
    const int runs = cfg.runs;
    int threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, runs);

    std::vector<std::vector<RunRecord>> results(static_cast<std::size_t>(runs));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(runs));
    std::atomic<int> next{0};

    auto worker = [&] {
        for (int r = next++; r < runs; r = next++) {
            try {
                const Dataset ds = make_dataset(cfg, static_cast<std::uint64_t>(r));
                results[static_cast<std::size_t>(r)] =
                    identify(ds.u, ds.y, cfg, cfg.nk.front(), r, &ds.system.h);
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    std::vector<RunRecord> out;
    for (auto& part : results) {
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    return out;
}

double quantile(std::vector<double> values, double p)
{
    if (values.empty()) {
        throw std::invalid_argument("quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records,
                                  const ExperimentConfig& cfg)
{
    std::vector<SummaryRow> rows;
    for (const UpdaterSpec& spec : cfg.methods) {
        const std::string label = method_label(spec);
        // Last record of each run for this method.
        std::vector<const RunRecord*> finals;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const RunRecord& rec = records[i];
            if (rec.method != label || rec.lambda_only != spec.lambda_only) {
                continue;
            }
            const bool last = i + 1 == records.size() || records[i + 1].run_id != rec.run_id
                              || records[i + 1].method != rec.method
                              || records[i + 1].lambda_only != rec.lambda_only;
            if (last) {
                finals.push_back(&rec);
            }
        }
        if (finals.empty()) {
            continue;
        }
        std::vector<double> fits;
        std::vector<double> times;
        for (const RunRecord* rec : finals) {
            fits.push_back(rec->fit);
            times.push_back(rec->cumulative_seconds);
        }
        SummaryRow row;
        row.method = label;
        row.lambda_only = spec.lambda_only;
        row.runs = static_cast<int>(finals.size());
        row.fit_q1 = quantile(fits, 0.25);
        row.fit_median = quantile(fits, 0.5);
        row.fit_q3 = quantile(fits, 0.75);
        row.time_median = quantile(times, 0.5);
        for (double t : times) {
            row.time_total += t;
        }
        rows.push_back(row);
    }
    return rows;
}

void write_records_csv(std::ostream& os, const std::vector<RunRecord>& records, bool with_fit)
{
    os << kRunRecordSchema << '\n';
    os << "run_id,method,lambda_only,batch_index,nbar,";
    if (with_fit) {
        os << "fit,";
    }
    os << "lambda,beta,sigma2,batch_seconds,cumulative_seconds\n";
    for (const RunRecord& r : records) {
        os << r.run_id << ',' << r.method << ',' << (r.lambda_only ? 1 : 0) << ',' << r.batch_index
           << ',' << r.nbar << ',';
        if (with_fit) {
            os << fmt(r.fit) << ',';
        }
        os << fmt(r.lambda) << ',' << fmt(r.beta) << ',' << fmt(r.sigma2) << ','
           << fmt(r.batch_seconds) << ',' << fmt(r.cumulative_seconds) << '\n';
    }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows)
{
    os << "method,lambda_only,runs,fit_q1,fit_median,fit_q3,time_median,time_total\n";
    for (const SummaryRow& r : rows) {
        os << r.method << ',' << (r.lambda_only ? 1 : 0) << ',' << r.runs << ',' << fmt(r.fit_q1)
           << ',' << fmt(r.fit_median) << ',' << fmt(r.fit_q3) << ',' << fmt(r.time_median) << ','
           << fmt(r.time_total) << '\n';
    }
}

void write_dataset_csv(std::ostream& os, const VectorXd& u, const VectorXd& y)
{
    os << "u,y\n";
    for (Index t = 0; t < u.size(); ++t) {
        os << fmt(u(t)) << ',' << fmt(y(t)) << '\n';
    }
}

} // namespace bsysid
