#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace bsysid {

using Eigen::Index;
using Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Independent generator for stream `stream` of a seeded experiment.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

/// Rational SISO system G(q) = gain * prod(1 - z_i q^-1) / prod(1 - p_i q^-1)
/// and its first n impulse-response taps h(1..n) (h(1) is the direct term).
struct TrueSystem {
    std::vector<std::complex<double>> poles;
    std::vector<std::complex<double>> zeros;
    double gain = 1.0;
    int order = 0;
    VectorXd h;
};

struct SystemOptions {
    int order_min = 5;
    int order_max = 10;
    double pole_radius = 0.95;
    Index n = 80;
    double decay_ratio = 1e-3;  ///< |h(n)| <= decay_ratio * max |h|
    int max_retries = 50;
};

/// Random stable system. Poles are uniform in the disk of radius
/// pole_radius in conjugate pairs (plus one real pole for odd orders), zeros
/// likewise in the unit disk, gain chosen so that |h|_2 = 1. Draws failing
/// the decay check are resampled; throws std::runtime_error after
/// max_retries failures.
TrueSystem random_system(Rng& rng, const SystemOptions& opt = {});

/// First n taps of gain * prod(1 - z q^-1) / prod(1 - p q^-1) by a cascade of
/// first-order complex sections.
VectorXd impulse_response(const std::vector<std::complex<double>>& poles,
                          const std::vector<std::complex<double>>& zeros, double gain, Index n);

/// Linear-phase low-pass: Hamming-windowed sinc, cutoff given as a fraction
/// of Nyquist, unit DC gain.
VectorXd lowpass_taps(int taps, double cutoff);

/// White unit Gaussian noise through a 64-tap low-pass with cutoff `band`
/// (fraction of Nyquist), rescaled to unit sample variance when N >= 2.
VectorXd bandlimited_input(Rng& rng, Index n_samples, double band = 0.8);

struct IoData {
    VectorXd y;
    VectorXd y0;  ///< noise-free output
    double sigma2 = 0.0;
};

/// y0 = h * u (zero initial conditions), sigma2 = var(y0) / snr,
/// y = y0 + N(0, sigma2). snr = +inf draws no noise.
IoData simulate_io(const VectorXd& h, const VectorXd& u, double snr, Rng& rng);

/// 100 (1 - |h_true - h_hat| / |h_true|).
double fit(const VectorXd& h_true, const VectorXd& h_hat);

} // namespace bsysid
