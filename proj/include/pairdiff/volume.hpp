#pragma once

#include <array>
#include <string>
#include <vector>

#include "pairdiff/phantom.hpp"
#include "pairdiff/tensor.hpp"

namespace pairdiff {

// 3D scalar volume with physical spacing and world origin (mm). Data layout
// is slice-major: index (x,y,z) -> data[(z*ny + y)*nx + x]; axial slices are
// fixed-z planes.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<double> data;

    static Volume create(int nx, int ny, int nz, std::array<double, 3> spacing = {1, 1, 1},
                         std::array<double, 3> origin = {0, 0, 0}, double fill = 0.0);

    double& at(int x, int y, int z) { return data[(static_cast<size_t>(z) * ny + y) * nx + x]; }
    double at(int x, int y, int z) const { return data[(static_cast<size_t>(z) * ny + y) * nx + x]; }

    size_t size() const { return data.size(); }
    Tensor axial_slice(int z) const;  // (ny, nx)
    void validate() const;
};

enum class ResampleMethod { kTrilinear, kNearest };

// Output dims = round(in_dim * in_spacing / target_spacing); node-centered
// sampling, edges clamped. Nearest mode emits only values present in the
// input (binary masks stay binary).
Volume resample_volume(const Volume& v, std::array<double, 3> target_spacing,
                       ResampleMethod method);

// Translates volumes onto a shared world grid using their origins: in-plane
// (x,y) extent is cropped to the common intersection, the vertical (z) axis
// is padded to the union with each modality's background value. Outputs
// share shape and origin.
std::vector<Volume> align_and_pad(const std::vector<Volume>& volumes,
                                  const std::vector<double>& backgrounds);

struct CropWindow {
    int row0 = 0, col0 = 0, size = 0;
};

// Window of size x size centered on the center of mass of pixels above
// background_threshold (geometric center when nothing exceeds it), clamped
// to lie fully inside the slice.
CropWindow smart_crop_window(const Tensor& slice, int size, double background_threshold);
Tensor crop_apply(const Tensor& slice, const CropWindow& window);
Tensor smart_crop(const Tensor& slice, int size, double background_threshold);

// One PairedSample per axial slice with at least one positive mask voxel.
// The crop window is computed from the anatomy modality (volumes[0]) and
// reused across every modality of that slice.
std::vector<PairedSample> extract_tumour_slices(const std::vector<Volume>& volumes,
                                                const Volume& mask_volume, int crop_size,
                                                double background_threshold,
                                                const std::vector<std::string>& modality_names = {});

// Linear rescale of [lo,hi] onto [-1,1], clipped.
Volume normalize_volume(const Volume& v, double lo, double hi);

}  // namespace pairdiff
