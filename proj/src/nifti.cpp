#include "pairdiff/nifti.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "pairdiff/errors.hpp"

namespace pairdiff {

namespace {

// NIfTI-1 datatype codes
enum : int16_t {
    kDtU8 = 2,
    kDtI16 = 4,
    kDtI32 = 8,
    kDtF32 = 16,
    kDtF64 = 64,
    kDtU16 = 512,
};

template <typename T>
void read_payload(std::ifstream& f, Volume& v, double slope, double inter) {
    std::vector<T> buf(v.size());
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<long>(buf.size() * sizeof(T)));
    if (!f) throw DataError("read_nifti: truncated voxel payload");
    for (size_t i = 0; i < buf.size(); ++i) v.data[i] = slope * static_cast<double>(buf[i]) + inter;
}

}  // namespace

Volume read_nifti(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_nifti: cannot open " + path);
    std::vector<char> hdr(348);
    f.read(hdr.data(), 348);
    if (!f) throw DataError("read_nifti: header truncated in " + path);

    auto rd_i32 = [&](size_t off) { int32_t v; std::memcpy(&v, hdr.data() + off, 4); return v; };
    auto rd_i16 = [&](size_t off) { int16_t v; std::memcpy(&v, hdr.data() + off, 2); return v; };
    auto rd_f32 = [&](size_t off) { float v; std::memcpy(&v, hdr.data() + off, 4); return v; };

    if (rd_i32(0) != 348) throw DataError("read_nifti: not a NIfTI-1 file (sizeof_hdr != 348)");
    if (std::memcmp(hdr.data() + 344, "n+1", 3) != 0)
        throw DataError("read_nifti: unsupported magic (expect single-file n+1)");

    const int16_t ndim = rd_i16(40);
    if (ndim < 3) throw DataError("read_nifti: need a 3D volume");
    const int nx = rd_i16(42), ny = rd_i16(44), nz = rd_i16(46);
    const int16_t datatype = rd_i16(70);
    const double sx = rd_f32(80), sy = rd_f32(84), sz = rd_f32(88);  // pixdim[1..3]
    const float vox_offset = rd_f32(108);
    double slope = rd_f32(112), inter = rd_f32(116);
    if (slope == 0.0) {
        slope = 1.0;
        inter = 0.0;
    }
    const double ox = rd_f32(268), oy = rd_f32(272), oz = rd_f32(276);  // qoffset

    Volume v = Volume::create(nx, ny, nz, {sx > 0 ? sx : 1.0, sy > 0 ? sy : 1.0, sz > 0 ? sz : 1.0},
                              {ox, oy, oz});
    f.seekg(static_cast<long>(vox_offset));
    switch (datatype) {
        case kDtU8: read_payload<uint8_t>(f, v, slope, inter); break;
        case kDtI16: read_payload<int16_t>(f, v, slope, inter); break;
        case kDtU16: read_payload<uint16_t>(f, v, slope, inter); break;
        case kDtI32: read_payload<int32_t>(f, v, slope, inter); break;
        case kDtF32: read_payload<float>(f, v, slope, inter); break;
        case kDtF64: read_payload<double>(f, v, slope, inter); break;
        default:
            throw DataError("read_nifti: unsupported datatype code " + std::to_string(datatype));
    }
    return v;
}

void write_nifti(const std::string& path, const Volume& v) {
    v.validate();
    std::vector<char> hdr(348, 0);
    auto wr_i32 = [&](size_t off, int32_t val) { std::memcpy(hdr.data() + off, &val, 4); };
    auto wr_i16 = [&](size_t off, int16_t val) { std::memcpy(hdr.data() + off, &val, 2); };
    auto wr_f32 = [&](size_t off, float val) { std::memcpy(hdr.data() + off, &val, 4); };

    wr_i32(0, 348);
    wr_i16(40, 3);
    wr_i16(42, static_cast<int16_t>(v.nx));
    wr_i16(44, static_cast<int16_t>(v.ny));
    wr_i16(46, static_cast<int16_t>(v.nz));
    for (size_t d = 4; d <= 7; ++d) wr_i16(40 + 2 * d, 1);
    wr_i16(70, kDtF32);
    wr_i16(72, 32);  // bitpix
    wr_f32(76, 1.0f);
    wr_f32(80, static_cast<float>(v.spacing[0]));
    wr_f32(84, static_cast<float>(v.spacing[1]));
    wr_f32(88, static_cast<float>(v.spacing[2]));
    wr_f32(108, 352.0f);  // vox_offset
    wr_f32(112, 1.0f);    // scl_slope
    wr_f32(116, 0.0f);    // scl_inter
    wr_f32(268, static_cast<float>(v.origin[0]));
    wr_f32(272, static_cast<float>(v.origin[1]));
    wr_f32(276, static_cast<float>(v.origin[2]));
    std::memcpy(hdr.data() + 344, "n+1\0", 4);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_nifti: cannot open " + path);
    f.write(hdr.data(), 348);
    const char pad[4] = {0, 0, 0, 0};
    f.write(pad, 4);  // extension flag
    std::vector<float> buf(v.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(v.data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<long>(buf.size() * sizeof(float)));
}

}  // namespace pairdiff
