#include "pairdiff/schedule.hpp"

#include <cmath>

#include "pairdiff/errors.hpp"

namespace pairdiff {

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > T) throw IndexError("beta: t=" + std::to_string(t) + " outside 1.." + std::to_string(T));
    return betas[static_cast<size_t>(t) - 1];
}

double NoiseSchedule::alpha(int t) const {
    if (t < 1 || t > T) throw IndexError("alpha: t=" + std::to_string(t) + " outside 1.." + std::to_string(T));
    return alphas[static_cast<size_t>(t) - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T) throw IndexError("alpha_bar: t=" + std::to_string(t) + " outside 0.." + std::to_string(T));
    return t == 0 ? 1.0 : alpha_bars[static_cast<size_t>(t) - 1];
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ParameterError("make_linear_schedule: T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0)) throw ParameterError("make_linear_schedule: beta_start must be > 0");
    if (!(beta_end < 1.0)) throw ParameterError("make_linear_schedule: beta_end must be < 1");
    if (beta_start > beta_end) throw ParameterError("make_linear_schedule: beta_start > beta_end");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double b = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * static_cast<double>(i) / (T - 1);
        s.betas[static_cast<size_t>(i)] = b;
        s.alphas[static_cast<size_t>(i)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bars[static_cast<size_t>(i)] = prod;
    }
    return s;
}

NoiseSchedule default_schedule() { return make_linear_schedule(1000, 1e-4, 0.02); }

NoiseField sample_offset_noise(int height, int width, double offset_weight, Rng& rng) {
    if (height < 1 || width < 1)
        throw ShapeError("sample_offset_noise: degenerate shape");
    if (offset_weight < 0.0)
        throw ParameterError("sample_offset_noise: offset_weight must be >= 0");

    NoiseField field;
    field.offset = offset_weight * rng.normal();
    field.values = Tensor({height, width});
    for (size_t i = 0; i < field.values.size(); ++i)
        field.values[i] = rng.normal() + field.offset;
    return field;
}

Tensor forward_diffuse(const Tensor& x0, int t, const NoiseField& noise,
                       const NoiseSchedule& schedule) {
    if (t < 0 || t > schedule.T)
        throw IndexError("forward_diffuse: t=" + std::to_string(t) + " outside 0.." +
                         std::to_string(schedule.T));
    if (!x0.same_shape(noise.values))
        throw ShapeError("forward_diffuse: noise shape " + noise.values.shape_str() +
                         " != image shape " + x0.shape_str());

    const double ab = schedule.alpha_bar(t);
    const double cs = std::sqrt(ab);
    const double cn = std::sqrt(1.0 - ab);
    Tensor out = Tensor::zeros_like(x0);
    for (size_t i = 0; i < x0.size(); ++i) out[i] = cs * x0[i] + cn * noise.values[i];
    return out;
}

Tensor estimate_x0(const Tensor& x_t, const Tensor& eps_pred, int t,
                   const NoiseSchedule& schedule, bool clamp) {
    if (t < 1 || t > schedule.T)
        throw IndexError("estimate_x0: t=" + std::to_string(t) + " outside 1.." +
                         std::to_string(schedule.T));
    if (!x_t.same_shape(eps_pred))
        throw ShapeError("estimate_x0: eps shape mismatch");

    const double ab = schedule.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);
    const double cn = std::sqrt(1.0 - ab);
    Tensor out = Tensor::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i) {
        double v = inv * (x_t[i] - cn * eps_pred[i]);
        out[i] = clamp ? clamp_value(v) : v;
    }
    return out;
}

double posterior_sigma2(const NoiseSchedule& schedule, int t, SigmaMode mode) {
    const double b = schedule.beta(t);
    if (mode == SigmaMode::kBeta) return b;
    return b * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - schedule.alpha_bar(t));
}

Tensor posterior_mean(const Tensor& x_t, const Tensor& eps_pred, int t,
                      const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.T)
        throw IndexError("posterior_step: t=" + std::to_string(t) + " outside 1.." +
                         std::to_string(schedule.T));
    if (!x_t.same_shape(eps_pred))
        throw ShapeError("posterior_step: eps shape mismatch");

    const double inv_sa = 1.0 / std::sqrt(schedule.alpha(t));
    const double ceps = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
    Tensor out = Tensor::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i) out[i] = inv_sa * (x_t[i] - ceps * eps_pred[i]);
    return out;
}

Tensor posterior_step(const Tensor& x_t, const Tensor& eps_pred, int t,
                      const NoiseSchedule& schedule, Rng& rng, SigmaMode sigma_mode) {
    Tensor out = posterior_mean(x_t, eps_pred, t, schedule);
    if (t > 1) {
        const double sigma = std::sqrt(posterior_sigma2(schedule, t, sigma_mode));
        for (size_t i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
    }
    return out;
}

}  // namespace pairdiff
