#pragma once

#include <vector>

#include "pairdiff/rng.hpp"
#include "pairdiff/tensor.hpp"

namespace pairdiff {

// Image value range used across the toolkit: every modality is normalized to
// [-1, 1] before diffusion and x0 estimates are clamped back into it.
inline constexpr double kValueMin = -1.0;
inline constexpr double kValueMax = 1.0;

// Discrete noise schedule. Index convention: t = 0 is the clean image,
// t = T fully noised. betas[t-1], alphas[t-1], alpha_bars[t-1] hold the
// coefficients for step t; alpha_bar(0) == 1 by convention.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // beta_t, t = 1..T
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

    double beta(int t) const;       // t in 1..T
    double alpha(int t) const;      // t in 1..T
    double alpha_bar(int t) const;  // t in 0..T, alpha_bar(0) = 1
};

// Gaussian noise plus one shared scalar offset; the offset is what lets the
// model learn global image brightness.
struct NoiseField {
    Tensor values;        // base + offset, elementwise
    double offset = 0.0;  // the sampled constant C
};

enum class SigmaMode { kBeta, kBetaTilde };

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// Default training schedule (T=1000, linear 1e-4..0.02).
NoiseSchedule default_schedule();

// N'_{ij} = N_{ij} + C with N iid standard normal and
// C = offset_weight * (one standard normal draw).
NoiseField sample_offset_noise(int height, int width, double offset_weight, Rng& rng);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
Tensor forward_diffuse(const Tensor& x0, int t, const NoiseField& noise,
                       const NoiseSchedule& schedule);

// (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t), clamped to the value range.
// `clamp=false` exposes the raw algebraic inverse for the exactness checks.
Tensor estimate_x0(const Tensor& x_t, const Tensor& eps_pred, int t,
                   const NoiseSchedule& schedule, bool clamp = true);

// One ancestral reverse step. z is fresh standard normal for t > 1 and zero
// at t = 1. sigma^2 is beta_t or beta_t (1-abar_{t-1})/(1-abar_t) per mode.
Tensor posterior_step(const Tensor& x_t, const Tensor& eps_pred, int t,
                      const NoiseSchedule& schedule, Rng& rng,
                      SigmaMode sigma_mode = SigmaMode::kBetaTilde);

// Deterministic variant: the posterior mean with sigma forced to zero.
Tensor posterior_mean(const Tensor& x_t, const Tensor& eps_pred, int t,
                      const NoiseSchedule& schedule);

double posterior_sigma2(const NoiseSchedule& schedule, int t, SigmaMode mode);

inline double clamp_value(double v) {
    return v < kValueMin ? kValueMin : (v > kValueMax ? kValueMax : v);
}

}  // namespace pairdiff
