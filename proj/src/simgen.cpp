#include "bsysid/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bsysid {

namespace {

using cd = std::complex<double>;

// Uniform point in the disk of the given radius.
cd disk_point(Rng& rng, double radius)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double r = radius * std::sqrt(unif(rng));
    const double theta = 2.0 * std::numbers::pi * unif(rng);
    return std::polar(r, theta);
}

// `count` roots closed under conjugation.
std::vector<cd> conjugate_roots(Rng& rng, int count, double radius)
{
    std::vector<cd> roots;
    for (int i = 0; i + 1 < count; i += 2) {
        const cd p = disk_point(rng, radius);
        roots.push_back(p);
        roots.push_back(std::conj(p));
    }
    if (count % 2 == 1) {
        std::uniform_real_distribution<double> unif(-radius, radius);
        roots.emplace_back(unif(rng), 0.0);
    }
    return roots;
}

double sample_variance(const VectorXd& v)
{
    if (v.size() < 2) {
        return 0.0;
    }
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

} // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

VectorXd impulse_response(const std::vector<cd>& poles, const std::vector<cd>& zeros, double gain,
                          Index n)
{
    std::vector<cd> x(static_cast<std::size_t>(n), cd(0.0));
    if (n > 0) {
        x[0] = gain;
    }
    const std::size_t sections = std::max(poles.size(), zeros.size());
    for (std::size_t s = 0; s < sections; ++s) {
        const cd p = s < poles.size() ? poles[s] : cd(0.0);
        const cd z = s < zeros.size() ? zeros[s] : cd(0.0);
        cd in_prev(0.0);
        cd out_prev(0.0);
        for (auto& v : x) {
            const cd out = v - z * in_prev + p * out_prev;
            in_prev = v;
            out_prev = out;
            v = out;
        }
    }
    VectorXd h(n);
    for (Index t = 0; t < n; ++t) {
        h(t) = x[static_cast<std::size_t>(t)].real();
    }
    return h;
}

TrueSystem random_system(Rng& rng, const SystemOptions& opt)
{
    if (opt.order_min < 1 || opt.order_max < opt.order_min || opt.n < 1
        || !(opt.pole_radius > 0.0 && opt.pole_radius < 1.0)) {
        throw std::invalid_argument("invalid random system options");
    }
    std::uniform_int_distribution<int> order_dist(opt.order_min, opt.order_max);

    for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
        TrueSystem sys;
        sys.order = order_dist(rng);
        sys.poles = conjugate_roots(rng, sys.order, opt.pole_radius);
        sys.zeros = conjugate_roots(rng, sys.order, 1.0);

        const VectorXd raw = impulse_response(sys.poles, sys.zeros, 1.0, opt.n);
        const double norm = raw.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            continue;
        }
        sys.gain = 1.0 / norm;
        sys.h = raw * sys.gain;
        const double peak = sys.h.cwiseAbs().maxCoeff();
        if (std::abs(sys.h(opt.n - 1)) <= opt.decay_ratio * peak) {
            return sys;
        }
    }
    throw std::runtime_error("random_system: decay check failed after "
                             + std::to_string(opt.max_retries) + " retries");
}

VectorXd lowpass_taps(int taps, double cutoff)
{
    if (taps < 1 || !(cutoff > 0.0 && cutoff <= 1.0)) {
        throw std::invalid_argument("invalid low-pass design");
    }
    const double mid = 0.5 * static_cast<double>(taps - 1);
    VectorXd h(taps);
    for (int k = 0; k < taps; ++k) {
        const double t = static_cast<double>(k) - mid;
        const double arg = std::numbers::pi * cutoff * t;
        const double sinc = t == 0.0 ? 1.0 : std::sin(arg) / arg;
        const double window =
            taps == 1 ? 1.0
                      : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / (taps - 1));
        h(k) = cutoff * sinc * window;
    }
    return h / h.sum();
}

VectorXd bandlimited_input(Rng& rng, Index n_samples, double band)
{
    if (n_samples < 1) {
        throw std::invalid_argument("bandlimited_input needs at least one sample");
    }
    constexpr int kTaps = 64;
    const VectorXd taps = lowpass_taps(kTaps, band);
    std::normal_distribution<double> gauss(0.0, 1.0);

    VectorXd white(n_samples + kTaps - 1);
    for (Index i = 0; i < white.size(); ++i) {
        white(i) = gauss(rng);
    }
    VectorXd u(n_samples);
    for (Index t = 0; t < n_samples; ++t) {
        u(t) = taps.reverse().dot(white.segment(t, kTaps));
    }
    const double var = sample_variance(u);
    if (var > 0.0) {
        u /= std::sqrt(var);
    }
    return u;
}

IoData simulate_io(const VectorXd& h, const VectorXd& u, double snr, Rng& rng)
{
    if (!(snr > 0.0)) {
        throw std::invalid_argument("SNR must be positive");
    }
    const Index n = h.size();
    const Index len = u.size();
    IoData out;
    out.y0 = VectorXd::Zero(len);
    for (Index t = 0; t < len; ++t) {
        const Index kmax = std::min(n, t + 1);
        out.y0(t) = h.head(kmax).dot(u.segment(t - kmax + 1, kmax).reverse());
    }
    out.y = out.y0;
    if (std::isinf(snr)) {
        out.sigma2 = 0.0;
        return out;
    }
    out.sigma2 = sample_variance(out.y0) / snr;
    if (!(out.sigma2 > 0.0)) {
        return out;
    }
    std::normal_distribution<double> gauss(0.0, std::sqrt(out.sigma2));
    for (Index t = 0; t < len; ++t) {
        out.y(t) += gauss(rng);
    }
    return out;
}

double fit(const VectorXd& h_true, const VectorXd& h_hat)
{
    if (h_true.size() != h_hat.size()) {
        throw std::invalid_argument("fit: length mismatch");
    }
    const double norm = h_true.norm();
    if (!(norm > 0.0)) {
        throw std::invalid_argument("fit: true response is zero");
    }
    return 100.0 * (1.0 - (h_true - h_hat).norm() / norm);
}

} // namespace bsysid
