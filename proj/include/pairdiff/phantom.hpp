#pragma once

#include <string>
#include <vector>

#include "pairdiff/rng.hpp"
#include "pairdiff/tensor.hpp"

namespace pairdiff {

enum class SourceTag { kReal, kPhantom, kSynthetic, kSeededSynthetic };

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

// An ordered set of co-registered single-channel 2D images. Anatomy and
// functional live in [-1,1]; the mask stays binary {0,1} and is mapped to
// model space only at the diffusion boundary.
struct PairedSample {
    std::vector<Tensor> modalities;
    std::vector<std::string> modality_names{"anatomy", "functional", "mask"};
    std::string id;
    SourceTag source_tag = SourceTag::kPhantom;
    std::vector<std::string> transform_log;

    void validate() const;
    const Tensor& mask() const { return modalities.back(); }
};

// Modality <-> model-space mapping. index n-1 is the mask by convention.
std::vector<Tensor> to_model_space(const PairedSample& s);
Tensor mask_to_model(const Tensor& mask01);
Tensor mask_from_model(const Tensor& model, double threshold = 0.0);

struct PhantomConfig {
    int image_size = 32;
    // head-ellipse semi-axis ranges, as fractions of image size
    double head_ry_min = 0.28, head_ry_max = 0.38;
    double head_rx_min = 0.25, head_rx_max = 0.34;
    // tumour-blob radius range in pixels (at image_size 32)
    double blob_r_min = 2.0, blob_r_max = 3.5;
    double hot_contrast = 0.7;       // functional hot-blob contrast in [0,1] units
    double silhouette_gain = 0.25;   // anatomy silhouette weight in the functional image
    double noise_level = 0.04;       // additive background noise (pre-normalization units)
    uint64_t seed = 0;

    void validate() const;
};

// anatomy: smooth ellipse head with a bright ring (bone analog);
// mask: one blob strictly inside the ellipse;
// functional: silhouette_gain * anatomy + hot_contrast * mask, plus noise.
// Thresholding the functional at half the hot contrast recovers the mask.
PairedSample generate_phantom(const PhantomConfig& cfg, Rng& rng);

struct AugmentTransform {
    double jitter_y = 0.0;  // pixels, |.| <= 4
    double jitter_x = 0.0;
    double rotation = 0.0;  // radians, |.| <= 10 deg
    bool flip = false;      // horizontal (mid-sagittal) flip

    bool is_identity() const { return jitter_y == 0 && jitter_x == 0 && rotation == 0 && !flip; }
    std::string describe() const;
};

AugmentTransform sample_augment_transform(Rng& rng);

// Applies the same geometric transform to every modality; mask re-binarized
// after interpolation. Background fill: -1 for images, 0 for the mask.
PairedSample apply_transform(const PairedSample& s, const AugmentTransform& tf);
PairedSample augment(const PairedSample& s, Rng& rng);

struct SplitIndices {
    std::vector<size_t> train, val, test;
};

// Deterministic shuffled partition; floor-based val/test sizes, remainder to
// training. Disjoint and covering for every nonempty input.
SplitIndices split_dataset(size_t count, double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed);

}  // namespace pairdiff
