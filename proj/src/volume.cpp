#include "pairdiff/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pairdiff/errors.hpp"

namespace pairdiff {

Volume Volume::create(int nx, int ny, int nz, std::array<double, 3> spacing,
                      std::array<double, 3> origin, double fill) {
    Volume v;
    v.nx = nx;
    v.ny = ny;
    v.nz = nz;
    v.spacing = spacing;
    v.origin = origin;
    v.data.assign(static_cast<size_t>(nx) * ny * nz, fill);
    v.validate();
    return v;
}

void Volume::validate() const {
    if (nx < 1 || ny < 1 || nz < 1) throw DataError("Volume: degenerate dims");
    if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0)
        throw DataError("Volume: spacing must be strictly positive");
    if (data.size() != static_cast<size_t>(nx) * ny * nz)
        throw DataError("Volume: data size mismatch");
}

Tensor Volume::axial_slice(int z) const {
    if (z < 0 || z >= nz) throw IndexError("axial_slice: z out of range");
    Tensor t({ny, nx});
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) t.at(y, x) = at(x, y, z);
    return t;
}

Volume resample_volume(const Volume& v, std::array<double, 3> target_spacing,
                       ResampleMethod method) {
    v.validate();
    for (double s : target_spacing)
        if (s <= 0) throw ParameterError("resample_volume: target spacing must be positive");

    const int on[3] = {
        static_cast<int>(std::llround(v.nx * v.spacing[0] / target_spacing[0])),
        static_cast<int>(std::llround(v.ny * v.spacing[1] / target_spacing[1])),
        static_cast<int>(std::llround(v.nz * v.spacing[2] / target_spacing[2]))};
    if (on[0] < 1 || on[1] < 1 || on[2] < 1)
        throw DataError("resample_volume: output dims degenerate");

    Volume out = Volume::create(on[0], on[1], on[2], target_spacing, v.origin);
    auto clampi = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };

    for (int z = 0; z < on[2]; ++z)
        for (int y = 0; y < on[1]; ++y)
            for (int x = 0; x < on[0]; ++x) {
                const double fx = x * target_spacing[0] / v.spacing[0];
                const double fy = y * target_spacing[1] / v.spacing[1];
                const double fz = z * target_spacing[2] / v.spacing[2];
                if (method == ResampleMethod::kNearest) {
                    out.at(x, y, z) = v.at(clampi(static_cast<int>(std::llround(fx)), v.nx),
                                           clampi(static_cast<int>(std::llround(fy)), v.ny),
                                           clampi(static_cast<int>(std::llround(fz)), v.nz));
                } else {
                    const int x0 = clampi(static_cast<int>(std::floor(fx)), v.nx);
                    const int y0 = clampi(static_cast<int>(std::floor(fy)), v.ny);
                    const int z0 = clampi(static_cast<int>(std::floor(fz)), v.nz);
                    const int x1 = clampi(x0 + 1, v.nx), y1 = clampi(y0 + 1, v.ny), z1 = clampi(z0 + 1, v.nz);
                    const double tx = fx - std::floor(fx), ty = fy - std::floor(fy), tz = fz - std::floor(fz);
                    const double c00 = v.at(x0, y0, z0) * (1 - tx) + v.at(x1, y0, z0) * tx;
                    const double c10 = v.at(x0, y1, z0) * (1 - tx) + v.at(x1, y1, z0) * tx;
                    const double c01 = v.at(x0, y0, z1) * (1 - tx) + v.at(x1, y0, z1) * tx;
                    const double c11 = v.at(x0, y1, z1) * (1 - tx) + v.at(x1, y1, z1) * tx;
                    const double c0 = c00 * (1 - ty) + c10 * ty;
                    const double c1 = c01 * (1 - ty) + c11 * ty;
                    out.at(x, y, z) = c0 * (1 - tz) + c1 * tz;
                }
            }
    return out;
}

std::vector<Volume> align_and_pad(const std::vector<Volume>& volumes,
                                  const std::vector<double>& backgrounds) {
    if (volumes.empty()) throw DataError("align_and_pad: no volumes");
    if (backgrounds.size() != volumes.size())
        throw ParameterError("align_and_pad: one background value per volume required");
    for (const Volume& v : volumes) {
        v.validate();
        for (int a = 0; a < 3; ++a)
            if (std::fabs(v.spacing[static_cast<size_t>(a)] - volumes[0].spacing[static_cast<size_t>(a)]) > 1e-9)
                throw ParameterError("align_and_pad: spacing differs across inputs");
    }

    const auto spacing = volumes[0].spacing;
    double min_origin[3];
    for (int a = 0; a < 3; ++a) {
        min_origin[a] = volumes[0].origin[static_cast<size_t>(a)];
        for (const Volume& v : volumes)
            min_origin[a] = std::min(min_origin[a], v.origin[static_cast<size_t>(a)]);
    }

    // integer voxel offsets of each volume on the shared world grid
    std::vector<std::array<int, 3>> starts(volumes.size());
    std::vector<std::array<int, 3>> ends(volumes.size());
    for (size_t i = 0; i < volumes.size(); ++i) {
        const Volume& v = volumes[i];
        const int dims[3] = {v.nx, v.ny, v.nz};
        for (int a = 0; a < 3; ++a) {
            starts[i][static_cast<size_t>(a)] = static_cast<int>(
                std::llround((v.origin[static_cast<size_t>(a)] - min_origin[a]) / spacing[static_cast<size_t>(a)]));
            ends[i][static_cast<size_t>(a)] = starts[i][static_cast<size_t>(a)] + dims[a];
        }
    }

    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        int is = starts[0][static_cast<size_t>(a)], ie = ends[0][static_cast<size_t>(a)];
        for (size_t i = 1; i < volumes.size(); ++i) {
            is = std::max(is, starts[i][static_cast<size_t>(a)]);
            ie = std::min(ie, ends[i][static_cast<size_t>(a)]);
        }
        if (ie <= is) {
            std::ostringstream os;
            os << "align_and_pad: empty intersection on axis " << a << " (extents:";
            for (size_t i = 0; i < volumes.size(); ++i)
                os << " [" << starts[i][static_cast<size_t>(a)] << "," << ends[i][static_cast<size_t>(a)] << ")";
            os << ")";
            throw DataError(os.str());
        }
        if (a == 2) {
            // vertical axis: pad to the union
            lo[a] = starts[0][2];
            hi[a] = ends[0][2];
            for (size_t i = 1; i < volumes.size(); ++i) {
                lo[a] = std::min(lo[a], starts[i][2]);
                hi[a] = std::max(hi[a], ends[i][2]);
            }
        } else {
            lo[a] = is;
            hi[a] = ie;
        }
    }

    std::vector<Volume> out;
    out.reserve(volumes.size());
    for (size_t i = 0; i < volumes.size(); ++i) {
        const Volume& v = volumes[i];
        Volume o = Volume::create(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], spacing,
                                  {min_origin[0] + lo[0] * spacing[0],
                                   min_origin[1] + lo[1] * spacing[1],
                                   min_origin[2] + lo[2] * spacing[2]},
                                  backgrounds[i]);
        for (int z = 0; z < o.nz; ++z) {
            const int sz = z + lo[2] - starts[i][2];
            if (sz < 0 || sz >= v.nz) continue;
            for (int y = 0; y < o.ny; ++y) {
                const int sy = y + lo[1] - starts[i][1];
                if (sy < 0 || sy >= v.ny) continue;
                for (int x = 0; x < o.nx; ++x) {
                    const int sx = x + lo[0] - starts[i][0];
                    if (sx < 0 || sx >= v.nx) continue;
                    o.at(x, y, z) = v.at(sx, sy, sz);
                }
            }
        }
        out.push_back(std::move(o));
    }
    return out;
}

CropWindow smart_crop_window(const Tensor& slice, int size, double background_threshold) {
    const int h = slice.dim(0), w = slice.dim(1);
    if (size > h || size > w)
        throw ParameterError("smart_crop: size " + std::to_string(size) + " exceeds slice " +
                             slice.shape_str());

    double sum = 0.0, sy = 0.0, sx = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (slice.at(y, x) > background_threshold) {
                sum += 1.0;
                sy += y;
                sx += x;
            }
    double cy, cx;
    if (sum > 0.0) {
        cy = sy / sum;
        cx = sx / sum;
    } else {
        cy = (h - 1) / 2.0;
        cx = (w - 1) / 2.0;
    }

    auto clampi = [](long v, int lo, int hi) {
        return static_cast<int>(v < lo ? lo : (v > hi ? hi : v));
    };
    CropWindow win;
    win.size = size;
    win.row0 = clampi(std::llround(cy - size / 2.0), 0, h - size);
    win.col0 = clampi(std::llround(cx - size / 2.0), 0, w - size);
    return win;
}

Tensor crop_apply(const Tensor& slice, const CropWindow& window) {
    Tensor out({window.size, window.size});
    for (int y = 0; y < window.size; ++y)
        for (int x = 0; x < window.size; ++x)
            out.at(y, x) = slice.at(window.row0 + y, window.col0 + x);
    return out;
}

Tensor smart_crop(const Tensor& slice, int size, double background_threshold) {
    return crop_apply(slice, smart_crop_window(slice, size, background_threshold));
}

std::vector<PairedSample> extract_tumour_slices(const std::vector<Volume>& volumes,
                                                const Volume& mask_volume, int crop_size,
                                                double background_threshold,
                                                const std::vector<std::string>& modality_names) {
    if (volumes.empty()) throw DataError("extract_tumour_slices: no modality volumes");
    for (const Volume& v : volumes)
        if (v.nx != mask_volume.nx || v.ny != mask_volume.ny || v.nz != mask_volume.nz)
            throw ShapeError("extract_tumour_slices: volumes not aligned/equal-shape");

    std::vector<PairedSample> out;
    for (int z = 0; z < mask_volume.nz; ++z) {
        Tensor mslice = mask_volume.axial_slice(z);
        bool any = false;
        for (double v : mslice.vec())
            if (v > 0.5) {
                any = true;
                break;
            }
        if (!any) continue;

        const CropWindow win = smart_crop_window(volumes[0].axial_slice(z), crop_size,
                                                 background_threshold);
        PairedSample s;
        s.id = "slice_" + std::to_string(z);
        s.source_tag = SourceTag::kReal;
        for (const Volume& v : volumes) s.modalities.push_back(crop_apply(v.axial_slice(z), win));
        Tensor mcrop = crop_apply(mslice, win);
        for (size_t i = 0; i < mcrop.size(); ++i) mcrop[i] = mcrop[i] > 0.5 ? 1.0 : 0.0;
        s.modalities.push_back(std::move(mcrop));
        if (!modality_names.empty())
            s.modality_names = modality_names;
        else if (s.modalities.size() != 3)
            s.modality_names.assign(s.modalities.size(), "");
        out.push_back(std::move(s));
    }
    return out;
}

Volume normalize_volume(const Volume& v, double lo, double hi) {
    if (hi <= lo) throw ParameterError("normalize_volume: hi must exceed lo");
    Volume out = v;
    const double scale = 2.0 / (hi - lo);
    for (double& d : out.data) {
        double t = (d - lo) * scale - 1.0;
        d = t < -1.0 ? -1.0 : (t > 1.0 ? 1.0 : t);
    }
    return out;
}

}  // namespace pairdiff
