#include "pairdiff/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

#include "pairdiff/errors.hpp"

namespace pairdiff {

namespace {

// One cached c2c plan pair per image size. FFTW planning is not thread-safe
// and plans share work buffers, so all executions go through the mutex.
struct PlanEntry {
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
    fftw_plan fwd{};
    fftw_plan bwd{};
    int h = 0, w = 0;

    ~PlanEntry() {
        if (in) {
            fftw_destroy_plan(fwd);
            fftw_destroy_plan(bwd);
            fftw_free(in);
            fftw_free(out);
        }
    }
};

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

PlanEntry& plan_for(int h, int w) {
    static std::map<std::pair<int, int>, PlanEntry> cache;
    auto& entry = cache[{h, w}];
    if (!entry.in) {
        entry.h = h;
        entry.w = w;
        size_t n = static_cast<size_t>(h) * w;
        entry.in = fftw_alloc_complex(n);
        entry.out = fftw_alloc_complex(n);
        entry.fwd = fftw_plan_dft_2d(h, w, entry.in, entry.out, FFTW_FORWARD, FFTW_ESTIMATE);
        entry.bwd = fftw_plan_dft_2d(h, w, entry.in, entry.out, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    return entry;
}

double wrapped_freq(int idx, int n) {
    return idx <= n / 2 ? static_cast<double>(idx) : static_cast<double>(idx - n);
}

}  // namespace

Tensor radial_grid(int height, int width) {
    Tensor r({height, width});
    for (int y = 0; y < height; ++y) {
        double fy = wrapped_freq(y, height);
        for (int x = 0; x < width; ++x) {
            double fx = wrapped_freq(x, width);
            r.at(y, x) = std::sqrt(fy * fy + fx * fx);
        }
    }
    return r;
}

double radial_max(int height, int width) {
    double fy = height / 2;
    double fx = width / 2;
    return std::sqrt(fy * fy + fx * fx);
}

static void check_params(const FilterParams& p) {
    if (p.cutoff < 0.0 || p.cutoff > 1.0)
        throw ParameterError("FilterParams: cutoff outside [0,1]");
    if (p.floor < 0.0 || p.floor > 1.0)
        throw ParameterError("FilterParams: floor outside [0,1]");
}

Tensor build_mask(int height, int width, const FilterParams& params) {
    if (height < 1 || width < 1) throw ShapeError("build_mask: degenerate shape");
    check_params(params);
    const double rmax = radial_max(height, width);
    const double denom = params.cutoff * rmax + kCutoffEps;
    Tensor gains = radial_grid(height, width);
    for (size_t i = 0; i < gains.size(); ++i) {
        double q = gains[i] / denom;
        gains[i] = params.floor + (1.0 - params.floor) * std::exp(-q * q);
    }
    return gains;
}

std::pair<Tensor, Tensor> build_mask_grad(int height, int width, const FilterParams& params) {
    check_params(params);
    const double rmax = radial_max(height, width);
    const double denom = params.cutoff * rmax + kCutoffEps;
    Tensor r = radial_grid(height, width);
    Tensor d_cutoff({height, width});
    Tensor d_floor({height, width});
    for (size_t i = 0; i < r.size(); ++i) {
        double q = r[i] / denom;
        double e = std::exp(-q * q);
        d_floor[i] = 1.0 - e;
        d_cutoff[i] = (1.0 - params.floor) * e * 2.0 * q * q * rmax / denom;
    }
    return {d_cutoff, d_floor};
}

void fft2(const Tensor& real_image, Tensor& out_re, Tensor& out_im) {
    const int h = real_image.dim(0), w = real_image.dim(1);
    std::lock_guard<std::mutex> lock(plan_mutex());
    PlanEntry& p = plan_for(h, w);
    for (size_t i = 0; i < real_image.size(); ++i) {
        p.in[i][0] = real_image[i];
        p.in[i][1] = 0.0;
    }
    fftw_execute(p.fwd);
    out_re = Tensor({h, w});
    out_im = Tensor({h, w});
    for (size_t i = 0; i < out_re.size(); ++i) {
        out_re[i] = p.out[i][0];
        out_im[i] = p.out[i][1];
    }
}

Tensor ifft2_real(const Tensor& re, const Tensor& im) {
    const int h = re.dim(0), w = re.dim(1);
    std::lock_guard<std::mutex> lock(plan_mutex());
    PlanEntry& p = plan_for(h, w);
    for (size_t i = 0; i < re.size(); ++i) {
        p.in[i][0] = re[i];
        p.in[i][1] = im[i];
    }
    fftw_execute(p.bwd);
    Tensor out({h, w});
    const double scale = 1.0 / (static_cast<double>(h) * w);
    for (size_t i = 0; i < out.size(); ++i) out[i] = p.out[i][0] * scale;
    return out;
}

Tensor apply_gain_mask(const Tensor& image, const Tensor& gains) {
    if (!image.same_shape(gains))
        throw ShapeError("apply_gain_mask: gain shape " + gains.shape_str() +
                         " != image shape " + image.shape_str());
    if (!image.all_finite()) throw ValidationError("apply_gain_mask: non-finite input");

    Tensor re, im;
    fft2(image, re, im);
    for (size_t i = 0; i < re.size(); ++i) {
        re[i] *= gains[i];
        im[i] *= gains[i];
    }
    return ifft2_real(re, im);
}

Tensor apply_lowpass(const Tensor& image, const FilterParams& params) {
    return apply_gain_mask(image, build_mask(image.dim(0), image.dim(1), params));
}

StaticFreqMask StaticFreqMask::create(int height, int width) {
    StaticFreqMask m;
    m.gains = Tensor({height, width}, 1.0);
    return m;
}

Tensor apply_static_mask(const Tensor& image, const StaticFreqMask& mask) {
    if (!image.same_shape(mask.gains))
        throw ShapeError("apply_static_mask: mask is size-locked to " + mask.gains.shape_str() +
                         ", image is " + image.shape_str());
    if (!mask.gains.all_finite()) throw ValidationError("apply_static_mask: non-finite gains");
    return apply_gain_mask(image, mask.gains);
}

FilterController FilterController::create(int in_dim, int hidden, Rng& rng) {
    FilterController c;
    c.in_dim = in_dim;
    c.hidden = hidden;
    c.w1 = Tensor({hidden, in_dim});
    c.b1 = Tensor({hidden});
    c.w2 = Tensor({2, hidden});
    c.b2 = Tensor({2});
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (size_t i = 0; i < c.w1.size(); ++i) c.w1[i] = s1 * rng.normal();
    for (size_t i = 0; i < c.w2.size(); ++i) c.w2[i] = s2 * rng.normal();
    return c;
}

FilterParams controller_emit(const Tensor& embedding, const FilterController& controller) {
    if (embedding.rank() != 1 || embedding.dim(0) != controller.in_dim)
        throw ShapeError("controller_emit: embedding dim " + embedding.shape_str() +
                         " != controller input width " + std::to_string(controller.in_dim));

    std::vector<double> h(static_cast<size_t>(controller.hidden));
    for (int i = 0; i < controller.hidden; ++i) {
        double a = controller.b1[static_cast<size_t>(i)];
        for (int j = 0; j < controller.in_dim; ++j)
            a += controller.w1[static_cast<size_t>(i) * controller.in_dim + j] * embedding[static_cast<size_t>(j)];
        h[static_cast<size_t>(i)] = a / (1.0 + std::exp(-a));  // silu
    }
    double out[2];
    for (int o = 0; o < 2; ++o) {
        double a = controller.b2[static_cast<size_t>(o)];
        for (int i = 0; i < controller.hidden; ++i)
            a += controller.w2[static_cast<size_t>(o) * controller.hidden + i] * h[static_cast<size_t>(i)];
        out[o] = 1.0 / (1.0 + std::exp(-a));
    }
    return FilterParams{out[0], out[1]};
}

}  // namespace pairdiff
