#include "bsysid/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <sstream>

namespace bsysid {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what)
{
    throw ConfigError("config key '" + key + "': " + what + " (got '" + value + "')");
}

long long to_int(const std::string& key, const std::string& v)
{
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) {
        bad_value(key, v, "expected an integer");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v)
{
    std::string lower = v;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "inf" || lower == "infinity") {
        return std::numeric_limits<double>::infinity();
    }
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end || std::isnan(out)) {
        bad_value(key, v, "expected a number");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    bad_value(key, v, "expected a boolean");
}

Mode to_mode(const std::string& key, const std::string& v)
{
    if (v == "onestep" || v == "one_step" || v == "one-step") return Mode::OneStep;
    if (v == "opt") return Mode::Opt;
    bad_value(key, v, "expected 'onestep' or 'opt'");
}

} // namespace

std::string normalize_key(const std::string& key)
{
    std::string out;
    for (char c : key) {
        out.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

KeyValues parse_key_values(std::istream& is, const std::string& source)
{
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = normalize_key(trim(line.substr(0, eq)));
        if (key.empty()) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
        }
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    return parse_key_values(in, path);
}

ExperimentConfig default_experiment_config()
{
    ExperimentConfig cfg;
    cfg.methods = {UpdaterSpec{}};
    return cfg;
}

void apply_config(ExperimentConfig& cfg, const KeyValues& kv)
{
    OptimizerConfig& o = cfg.estimator.optim;
    Mode mode = Mode::OneStep;
    bool lambda_only = false;

    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto idx = [](Index& dst) { return [&dst](const std::string& k, const std::string& v) { dst = static_cast<Index>(to_int(k, v)); }; };
    auto integer = [](int& dst) { return [&dst](const std::string& k, const std::string& v) { dst = static_cast<int>(to_int(k, v)); }; };
    auto real = [](double& dst) { return [&dst](const std::string& k, const std::string& v) { dst = to_double(k, v); }; };
    auto flag = [](bool& dst) { return [&dst](const std::string& k, const std::string& v) { dst = to_bool(k, v); }; };

    const std::map<std::string, Setter> setters = {
        {"n", idx(cfg.n)},
        {"n_total", idx(cfg.n_total)},
        {"n_warmup", idx(cfg.n_warmup)},
        {"nk",
         [&](const std::string& k, const std::string& v) {
             cfg.nk.clear();
             for (const auto& item : split_list(v)) {
                 cfg.nk.push_back(static_cast<Index>(to_int(k, item)));
             }
             if (cfg.nk.empty()) bad_value(k, v, "expected a list of batch sizes");
         }},
        {"snr", real(cfg.snr)},
        {"runs", integer(cfg.runs)},
        {"seed",
         [&](const std::string& k, const std::string& v) {
             const long long s = to_int(k, v);
             if (s < 0) bad_value(k, v, "expected a nonnegative integer");
             cfg.seed = static_cast<std::uint64_t>(s);
         }},
        {"threads", integer(cfg.threads)},
        {"record_timing", flag(cfg.record_timing)},
        {"band", real(cfg.band)},
        {"order_min", integer(cfg.system.order_min)},
        {"order_max", integer(cfg.system.order_max)},
        {"pole_radius", real(cfg.system.pole_radius)},
        {"decay_ratio", real(cfg.system.decay_ratio)},
        {"max_retries", integer(cfg.system.max_retries)},
        {"beta0", real(cfg.estimator.beta0)},
        {"use_sherman_morrison", flag(cfg.estimator.use_sherman_morrison)},
        {"opt_warm_start", flag(cfg.estimator.opt_warm_start)},
        {"alpha_min", real(o.alpha_min)},
        {"alpha_max", real(o.alpha_max)},
        {"d_min", real(o.d_min)},
        {"d_max", real(o.d_max)},
        {"tau0", real(o.tau0)},
        {"ls_c", real(o.ls_c)},
        {"ls_delta", real(o.ls_delta)},
        {"max_backtracks", integer(o.max_backtracks)},
        {"opt_tol", real(o.opt_tol)},
        {"opt_max_iter", integer(o.opt_max_iter)},
        {"golden_tol", real(o.golden_tol)},
        {"golden_max_evals", integer(o.golden_max_evals)},
        {"mode", [&](const std::string& k, const std::string& v) { mode = to_mode(k, v); }},
        {"lambda_only", [&](const std::string& k, const std::string& v) { lambda_only = to_bool(k, v); }},
        {"methods", [](const std::string&, const std::string&) {}},
    };

    for (const auto& [key, value] : kv) {
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        it->second(key, value);
    }

    if (const auto it = kv.find("methods"); it != kv.end()) {
        cfg.methods.clear();
        for (const auto& token : split_list(it->second)) {
            try {
                cfg.methods.push_back(parse_method_token(token, mode, lambda_only));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("config key 'methods': " + std::string(e.what()));
            }
        }
        if (cfg.methods.empty()) {
            throw ConfigError("config key 'methods': empty list");
        }
    } else if (kv.count("mode") || kv.count("lambda_only")) {
        for (auto& m : cfg.methods) {
            m.mode = mode;
            m.lambda_only = lambda_only || m.method == Method::EM1 || m.method == Method::EM2;
        }
    }

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

} // namespace bsysid
