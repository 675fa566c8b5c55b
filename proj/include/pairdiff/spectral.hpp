#pragma once

#include <utility>

#include "pairdiff/rng.hpp"
#include "pairdiff/tensor.hpp"

namespace pairdiff {

// The two learnable scalars of the parametric low-pass filter, both in [0,1].
// cutoff scales the Gaussian rolloff radius, floor sets the high-frequency
// gain the rolloff decays to.
struct FilterParams {
    double cutoff = 0.5;
    double floor = 0.0;
};

// Small two-layer perceptron mapping a timestep embedding to the two filter
// scalars. Outputs are squashed through a sigmoid so the range invariant
// always holds.
struct FilterController {
    int in_dim = 0;
    int hidden = 0;
    Tensor w1, b1;  // (hidden, in_dim), (hidden)
    Tensor w2, b2;  // (2, hidden), (2)

    static FilterController create(int in_dim, int hidden, Rng& rng);
};

// Learned full-resolution gain map (FF-Parser style baseline). Size-locked to
// one image shape, unlike the two-scalar parametric filter.
struct StaticFreqMask {
    Tensor gains;  // (H, W), initialized to 1

    static StaticFreqMask create(int height, int width);
};

inline constexpr double kCutoffEps = 1e-6;

// Radial frequency magnitude per DFT bin (unshifted layout) and the largest
// radius on the grid.
Tensor radial_grid(int height, int width);
double radial_max(int height, int width);

// M(r) = floor + (1-floor) exp(-(r / (cutoff*r_max + eps))^2); M(0) = 1.
Tensor build_mask(int height, int width, const FilterParams& params);

// dM/dcutoff and dM/dfloor on the same grid.
std::pair<Tensor, Tensor> build_mask_grad(int height, int width, const FilterParams& params);

// FFT -> elementwise gain multiply -> inverse FFT, real part.
Tensor apply_lowpass(const Tensor& image, const FilterParams& params);
Tensor apply_static_mask(const Tensor& image, const StaticFreqMask& mask);

// Shared transform pipeline behind both filters.
Tensor apply_gain_mask(const Tensor& image, const Tensor& gains);

// Deterministic controller inference: sigmoid(W2 silu(W1 e + b1) + b2).
FilterParams controller_emit(const Tensor& embedding, const FilterController& controller);

// Raw 2D DFT helpers (FFTW-backed, unnormalized forward; callers divide by
// H*W after the inverse). Exposed for the autodiff filter op.
void fft2(const Tensor& real_image, Tensor& out_re, Tensor& out_im);
Tensor ifft2_real(const Tensor& re, const Tensor& im);

}  // namespace pairdiff
