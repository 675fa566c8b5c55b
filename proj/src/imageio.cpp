#include "pairdiff/imageio.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "pairdiff/errors.hpp"

namespace pairdiff {

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_be32(out, crc);
}

std::vector<uint8_t> encode_gray_png(const std::vector<uint8_t>& pixels, int width, int height) {
    // filter byte 0 per scanline
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + static_cast<long>(y) * width,
                   pixels.begin() + static_cast<long>(y + 1) * width);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("png: deflate failed");
    comp.resize(comp_len);

    std::vector<uint8_t> out{137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(width));
    put_be32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    return out;
}

uint8_t to_byte(double v, double lo, double hi) {
    double t = (v - lo) / (hi - lo);
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return static_cast<uint8_t>(t * 255.0 + 0.5);
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
}

}  // namespace

void write_png(const std::string& path, const Tensor& image, double lo, double hi) {
    if (image.rank() != 2) throw ShapeError("write_png: expects 2D image");
    const int h = image.dim(0), w = image.dim(1);
    std::vector<uint8_t> px(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < px.size(); ++i) px[i] = to_byte(image[i], lo, hi);
    write_bytes(path, encode_gray_png(px, w, h));
}

void write_png_grid(const std::string& path, const std::vector<std::vector<Tensor>>& rows,
                    double lo, double hi) {
    if (rows.empty() || rows[0].empty()) throw ShapeError("write_png_grid: empty grid");
    const int th = rows[0][0].dim(0), tw = rows[0][0].dim(1);
    const int ncols = static_cast<int>(rows[0].size());
    const int nrows = static_cast<int>(rows.size());
    const int W = ncols * tw + (ncols - 1);
    const int H = nrows * th + (nrows - 1);
    std::vector<uint8_t> px(static_cast<size_t>(H) * W, 255);
    for (int r = 0; r < nrows; ++r)
        for (int c = 0; c < static_cast<int>(rows[static_cast<size_t>(r)].size()); ++c) {
            const Tensor& img = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
            if (img.dim(0) != th || img.dim(1) != tw)
                throw ShapeError("write_png_grid: tiles must share shape");
            const int oy = r * (th + 1), ox = c * (tw + 1);
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x)
                    px[static_cast<size_t>(oy + y) * W + ox + x] = to_byte(img.at(y, x), lo, hi);
        }
    write_bytes(path, encode_gray_png(px, W, H));
}

}  // namespace pairdiff
