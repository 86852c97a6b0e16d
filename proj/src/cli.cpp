#include "bsysid/cli.hpp"

#include "bsysid/config.hpp"
#include "bsysid/experiment.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

namespace bsysid::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out = ".";
    std::string methods;
    std::string mode;
    std::string nk;
    std::string dataset;
    std::optional<long long> seed;
    std::optional<long long> runs;
    bool lambda_only = false;
};

void add_common(CLI::App* sub, Options& o)
{
    sub->add_option("--config", o.config, "key=value configuration file");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--methods", o.methods, "comma-separated updaters, e.g. opt,sgp,em2");
    sub->add_option("--nk", o.nk, "batch size (comma-separated list for single/stream)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--mode", o.mode, "onestep or opt");
    sub->add_flag("--lambda-only", o.lambda_only, "keep beta at its warmup value");
    sub->allow_extras();
}

// Remaining "--key value" / "--key=value" arguments.
KeyValues extra_overrides(const std::vector<std::string>& extras)
{
    KeyValues kv;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
            throw ConfigError("unexpected argument '" + arg + "'");
        }
        const std::string body = arg.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            kv[normalize_key(body.substr(0, eq))] = body.substr(eq + 1);
        } else {
            if (i + 1 >= extras.size()) {
                throw ConfigError("option '" + arg + "' needs a value");
            }
            kv[normalize_key(body)] = extras[++i];
        }
    }
    return kv;
}

ExperimentConfig build_config(const Options& o, const std::vector<std::string>& extras)
{
    KeyValues kv;
    if (!o.config.empty()) {
        kv = read_key_values(o.config);
    }
    for (const auto& [k, v] : extra_overrides(extras)) {
        kv[k] = v;
    }
    if (o.seed) kv["seed"] = std::to_string(*o.seed);
    if (o.runs) kv["runs"] = std::to_string(*o.runs);
    if (!o.methods.empty()) kv["methods"] = o.methods;
    if (!o.nk.empty()) kv["nk"] = o.nk;
    if (!o.mode.empty()) kv["mode"] = o.mode;
    if (o.lambda_only) kv["lambda_only"] = "true";

    ExperimentConfig cfg = default_experiment_config();
    apply_config(cfg, kv);
    return cfg;
}

std::string group_comment(const ExperimentConfig& cfg)
{
    std::string s = "# run_id groups:";
    for (std::size_t g = 0; g < cfg.nk.size(); ++g) {
        s += (g ? "," : " ") + std::to_string(g) + "=nk" + std::to_string(cfg.nk[g]);
    }
    return s;
}

std::string records_text(const std::vector<RunRecord>& recs, bool with_fit,
                         const std::string& comment)
{
    std::ostringstream os;
    write_records_csv(os, recs, with_fit);
    std::string text = os.str();
    if (!comment.empty()) {
        const auto nl = text.find('\n');
        text.insert(nl + 1, comment + "\n");
    }
    return text;
}

// All-or-nothing output: files are written only after the computation
// succeeded, and removed again if any write fails.
void write_outputs(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files)
{
    std::vector<fs::path> written;
    try {
        fs::create_directories(dir);
        for (const auto& [name, text] : files) {
            const fs::path p = dir / name;
            written.push_back(p);
            std::ofstream f(p, std::ios::binary);
            f << text;
            f.close();
            if (!f) {
                throw std::runtime_error("failed to write " + p.string());
            }
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) {
            fs::remove(p, ec);
        }
        throw;
    }
}

int cmd_single(const ExperimentConfig& cfg, const Options& o, std::ostream& out)
{
    Dataset ds;
    const auto recs = run_single(cfg, &ds);

    std::ostringstream sys;
    sys << "k,h\n";
    for (Index k = 0; k < ds.system.h.size(); ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", ds.system.h(k));
        sys << (k + 1) << ',' << buf << '\n';
    }
    std::ostringstream data;
    write_dataset_csv(data, ds.u, ds.y);

    write_outputs(o.out, {{"single_trace.csv", records_text(recs, true, group_comment(cfg))},
                          {"system.csv", sys.str()},
                          {"data.csv", data.str()}});
    out << "wrote " << recs.size() << " records to " << (fs::path(o.out) / "single_trace.csv").string()
        << '\n';
    return kExitOk;
}

int cmd_montecarlo(const ExperimentConfig& cfg, const Options& o, std::ostream& out)
{
    if (cfg.nk.size() != 1) {
        throw ConfigError("config key 'nk': montecarlo takes a single batch size");
    }
    const auto recs = run_montecarlo(cfg);
    const auto summary = summarize(recs, cfg);
    std::ostringstream s;
    write_summary_csv(s, summary);

    write_outputs(o.out, {{"runs.csv", records_text(recs, true, "")}, {"summary.csv", s.str()}});
    out << s.str();
    return kExitOk;
}

int cmd_stream(const ExperimentConfig& cfg, const Options& o, std::ostream& out)
{
    const IoSeries data = read_dataset(o.dataset);
    std::vector<RunRecord> recs;
    for (std::size_t g = 0; g < cfg.nk.size(); ++g) {
        auto part = identify(data.u, data.y, cfg, cfg.nk[g], static_cast<int>(g), nullptr);
        recs.insert(recs.end(), part.begin(), part.end());
    }
    write_outputs(o.out, {{"stream_trace.csv", records_text(recs, false, group_comment(cfg))}});
    out << "wrote " << recs.size() << " records to " << (fs::path(o.out) / "stream_trace.csv").string()
        << '\n';
    return kExitOk;
}

} // namespace

IoSeries read_dataset(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset '" + path + "'");
    }
    std::vector<double> u;
    std::vector<double> y;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (lineno == 1 && line == "u,y") {
            continue;
        }
        const auto comma = line.find(',');
        double a = 0.0;
        double b = 0.0;
        bool ok = comma != std::string::npos;
        if (ok) {
            const char* s = line.data();
            const char* mid = s + comma;
            const char* end = s + line.size();
            const auto ra = std::from_chars(s, mid, a);
            const auto rb = std::from_chars(mid + 1, end, b);
            ok = ra.ec == std::errc() && ra.ptr == mid && rb.ec == std::errc() && rb.ptr == end
                 && std::isfinite(a) && std::isfinite(b);
        }
        if (!ok) {
            throw ConfigError(path + ":" + std::to_string(lineno)
                              + ": expected two finite numbers 'u,y'");
        }
        u.push_back(a);
        y.push_back(b);
    }
    if (u.empty()) {
        throw ConfigError("dataset '" + path + "' has no data rows");
    }
    IoSeries s;
    s.u = Eigen::Map<const VectorXd>(u.data(), static_cast<Index>(u.size()));
    s.y = Eigen::Map<const VectorXd>(y.data(), static_cast<Index>(y.size()));
    return s;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Online empirical-Bayes FIR identification"};
    app.require_subcommand(1);

    Options o;
    CLI::App* single = app.add_subcommand("single", "one synthetic system, every method and nk");
    CLI::App* mc = app.add_subcommand("montecarlo", "Monte Carlo study");
    CLI::App* stream = app.add_subcommand("stream", "identify from a u,y dataset file");
    add_common(single, o);
    add_common(mc, o);
    add_common(stream, o);
    mc->add_option("--runs", o.runs, "number of Monte Carlo runs");
    stream->add_option("dataset", o.dataset, "two-column u,y file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    CLI::App* cmd = app.get_subcommands().front();
    try {
        const ExperimentConfig cfg = build_config(o, cmd->remaining());
        if (cmd == single) return cmd_single(cfg, o, out);
        if (cmd == mc) return cmd_montecarlo(cfg, o, out);
        return cmd_stream(cfg, o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace bsysid::cli
