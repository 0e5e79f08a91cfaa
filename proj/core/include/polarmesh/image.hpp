#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace polarmesh {

// Row-major interleaved image, double storage. Intensities live in linear
// units; file I/O normalizes integer samples by their bit-depth maximum.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

// Bilinear sample with edge clamping. (x, y) are continuous coordinates in
// the integer-pixel-center convention: (0, 0) is the center of pixel (0, 0).
double sample_bilinear(const Image& img, double x, double y, int channel);

// Bilinear sample plus the spatial derivatives of the interpolated value with
// respect to the continuous pixel coordinates. Inside a bilinear cell the
// derivative is exact; `on_cell_edge` reports coordinates within `edge_eps`
// of an integer pixel line, where the derivative is one-sided and a finite
// difference straddling the line would disagree. Border clamping makes the
// derivative vanish in the clamped direction.
struct BilinearSample {
    double value = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    bool on_cell_edge = false;
};
BilinearSample sample_bilinear_grad(const Image& img, double x, double y,
                                    int channel, double edge_eps = 1e-3);

// Nearest-pixel sample, coordinates clamped into the image.
double sample_nearest(const Image& img, double x, double y, int channel);

// Netpbm readers/writers.
//
// PGM (P5): single channel, maxval 255 or 65535 (big-endian 16-bit).
// PPM (P6): three channels, same maxvals.
// PFM (Pf/PF): 32-bit float, scale sign encodes byte order, rows stored
// bottom-up per the format convention.
//
// Integer loads divide by maxval so pixel values land in [0, 1]; integer
// saves clamp to [0, 1] and scale back. PFM round-trips floats verbatim.
Image load_pgm(const std::string& path);
Image load_ppm(const std::string& path);
Image load_pfm(const std::string& path);
Image load_image(const std::string& path);  // dispatch on magic number

void save_pgm(const std::string& path, const Image& img, int bit_depth = 16);
void save_ppm(const std::string& path, const Image& img, int bit_depth = 16);
void save_pfm(const std::string& path, const Image& img);

}  // namespace polarmesh
