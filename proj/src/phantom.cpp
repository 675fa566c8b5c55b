#include "pairdiff/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pairdiff/errors.hpp"

namespace pairdiff {

std::string to_string(SourceTag tag) {
    switch (tag) {
        case SourceTag::kReal: return "real";
        case SourceTag::kPhantom: return "phantom";
        case SourceTag::kSynthetic: return "synthetic";
        case SourceTag::kSeededSynthetic: return "seeded-synthetic";
    }
    return "phantom";
}

SourceTag source_tag_from_string(const std::string& s) {
    if (s == "real") return SourceTag::kReal;
    if (s == "phantom") return SourceTag::kPhantom;
    if (s == "synthetic") return SourceTag::kSynthetic;
    if (s == "seeded-synthetic") return SourceTag::kSeededSynthetic;
    throw ParameterError("unknown source tag: " + s);
}

void PairedSample::validate() const {
    if (modalities.empty()) throw ShapeError("PairedSample: no modalities");
    for (const Tensor& m : modalities) {
        if (m.rank() != 2) throw ShapeError("PairedSample: modalities must be 2D");
        if (!m.same_shape(modalities[0]))
            throw ShapeError("PairedSample: modalities not co-registered");
    }
    for (double v : mask().vec())
        if (v != 0.0 && v != 1.0)
            throw ValidationError("PairedSample: mask must be binary {0,1}");
}

std::vector<Tensor> to_model_space(const PairedSample& s) {
    std::vector<Tensor> out = s.modalities;
    out.back() = mask_to_model(out.back());
    return out;
}

Tensor mask_to_model(const Tensor& mask01) {
    Tensor out = Tensor::zeros_like(mask01);
    for (size_t i = 0; i < mask01.size(); ++i) out[i] = 2.0 * mask01[i] - 1.0;
    return out;
}

Tensor mask_from_model(const Tensor& model, double threshold) {
    Tensor out = Tensor::zeros_like(model);
    for (size_t i = 0; i < model.size(); ++i) out[i] = model[i] > threshold ? 1.0 : 0.0;
    return out;
}

void PhantomConfig::validate() const {
    if (image_size < 8) throw ParameterError("PhantomConfig: image_size too small");
    if (head_ry_min <= 0 || head_rx_min <= 0 || head_ry_min > head_ry_max ||
        head_rx_min > head_rx_max || head_ry_max >= 0.5 || head_rx_max >= 0.5)
        throw ParameterError("PhantomConfig: head radius range must sit inside the image");
    if (blob_r_min <= 0 || blob_r_min > blob_r_max || blob_r_max > image_size / 4.0)
        throw ParameterError("PhantomConfig: bad blob radius range");
    if (hot_contrast <= 0 || hot_contrast > 1) throw ParameterError("PhantomConfig: bad hot_contrast");
    if (noise_level < 0) throw ParameterError("PhantomConfig: negative noise level");
}

PairedSample generate_phantom(const PhantomConfig& cfg, Rng& rng) {
    cfg.validate();
    const int n = cfg.image_size;
    const double cy = n / 2.0 + rng.uniform_in(-2.0, 2.0) * n / 32.0;
    const double cx = n / 2.0 + rng.uniform_in(-2.0, 2.0) * n / 32.0;
    const double ry = rng.uniform_in(cfg.head_ry_min, cfg.head_ry_max) * n;
    const double rx = rng.uniform_in(cfg.head_rx_min, cfg.head_rx_max) * n;

    Tensor anat01({n, n});
    Tensor d2({n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double dy = (y - cy) / ry;
            double dx = (x - cx) / rx;
            double d = dy * dy + dx * dx;
            d2.at(y, x) = d;
            anat01.at(y, x) = d < 1.0 ? (d > 0.72 ? 0.95 : 0.4) : 0.0;
        }

    // tumour blob strictly inside the ellipse (d^2 < 0.45 keeps the whole
    // blob clear of the ring)
    const double blob_scale = n / 32.0;
    double by = 0, bx = 0, rb = 0;
    for (;;) {
        by = rng.uniform_in(0.15 * n, 0.85 * n);
        bx = rng.uniform_in(0.15 * n, 0.85 * n);
        rb = rng.uniform_in(cfg.blob_r_min, cfg.blob_r_max) * blob_scale;
        double dy = (by - cy) / ry, dx = (bx - cx) / rx;
        if (dy * dy + dx * dx < 0.45) break;
    }
    Tensor mask({n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            mask.at(y, x) = ((y - by) * (y - by) + (x - bx) * (x - bx)) < rb * rb ? 1.0 : 0.0;

    Tensor func01({n, n});
    for (size_t i = 0; i < func01.size(); ++i)
        func01[i] = cfg.silhouette_gain * anat01[i] + cfg.hot_contrast * mask[i];

    auto clip01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
    for (size_t i = 0; i < anat01.size(); ++i) {
        anat01[i] = clip01(anat01[i] + cfg.noise_level * rng.normal());
        func01[i] = clip01(func01[i] + cfg.noise_level * rng.normal());
    }

    PairedSample s;
    s.modalities.resize(3);
    s.modalities[0] = Tensor({n, n});
    s.modalities[1] = Tensor({n, n});
    for (size_t i = 0; i < anat01.size(); ++i) {
        s.modalities[0][i] = 2.0 * anat01[i] - 1.0;
        s.modalities[1][i] = 2.0 * func01[i] - 1.0;
    }
    s.modalities[2] = mask;
    s.source_tag = SourceTag::kPhantom;
    return s;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

std::string AugmentTransform::describe() const {
    std::ostringstream os;
    os << "jitter=(" << jitter_y << "," << jitter_x << ") rot=" << rotation
       << " flip=" << (flip ? 1 : 0);
    return os.str();
}

AugmentTransform sample_augment_transform(Rng& rng) {
    AugmentTransform tf;
    tf.jitter_y = rng.uniform_in(-4.0, 4.0);
    tf.jitter_x = rng.uniform_in(-4.0, 4.0);
    tf.rotation = rng.uniform_in(-10.0, 10.0) * M_PI / 180.0;
    tf.flip = rng.bernoulli(0.5);
    return tf;
}

namespace {

double bilinear_at(const Tensor& img, double y, double x, double background) {
    const int h = img.dim(0), w = img.dim(1);
    if (y < -1.0 || x < -1.0 || y > h || x > w) return background;
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    auto px = [&](int yy, int xx) {
        if (yy < 0 || xx < 0 || yy >= h || xx >= w) return background;
        return img.at(yy, xx);
    };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

}  // namespace

PairedSample apply_transform(const PairedSample& s, const AugmentTransform& tf) {
    s.validate();
    PairedSample out = s;
    const int h = s.modalities[0].dim(0), w = s.modalities[0].dim(1);
    const double cyc = (h - 1) / 2.0, cxc = (w - 1) / 2.0;
    const double c = std::cos(tf.rotation), sn = std::sin(tf.rotation);

    for (size_t m = 0; m < s.modalities.size(); ++m) {
        const bool is_mask = m + 1 == s.modalities.size();
        const double background = is_mask ? 0.0 : -1.0;
        Tensor dst({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                // inverse map: undo translation, rotation, then flip
                double py = y - tf.jitter_y - cyc;
                double px = x - tf.jitter_x - cxc;
                double sy = c * py + sn * px + cyc;
                double sx = -sn * py + c * px + cxc;
                if (tf.flip) sx = (w - 1) - sx;
                dst.at(y, x) = bilinear_at(s.modalities[m], sy, sx, background);
            }
        if (is_mask)
            for (size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] > 0.5 ? 1.0 : 0.0;
        out.modalities[m] = std::move(dst);
    }
    out.transform_log.push_back(tf.describe());
    return out;
}

PairedSample augment(const PairedSample& s, Rng& rng) {
    return apply_transform(s, sample_augment_transform(rng));
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

SplitIndices split_dataset(size_t count, double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed) {
    if (count == 0) throw DataError("split: empty dataset");
    if (std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw ParameterError("split: ratios must sum to 1");
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0)
        throw ParameterError("split: negative ratio");

    std::vector<size_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 engine(seed);
    std::shuffle(idx.begin(), idx.end(), engine);

    const size_t n_val = static_cast<size_t>(std::floor(val_ratio * static_cast<double>(count)));
    const size_t n_test = static_cast<size_t>(std::floor(test_ratio * static_cast<double>(count)));
    const size_t n_train = count - n_val - n_test;  // remainder goes to training

    SplitIndices out;
    out.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
    out.val.assign(idx.begin() + static_cast<long>(n_train),
                   idx.begin() + static_cast<long>(n_train + n_val));
    out.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
    return out;
}

}  // namespace pairdiff
