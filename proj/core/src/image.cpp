#include "polarmesh/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace polarmesh {

namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

// Skips whitespace and '#' comment lines, then reads one token.
std::string next_token(std::istream& in) {
    std::string tok;
    int c = in.peek();
    while (c != EOF) {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
        c = in.peek();
    }
    in >> tok;
    return tok;
}

struct PnmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    double maxval = 0;  // maxval for P5/P6, |scale| for PFM
    bool little_endian = false;
};

PnmHeader read_header(std::istream& in, const std::string& path) {
    PnmHeader h;
    h.magic = next_token(in);
    if (h.magic != "P5" && h.magic != "P6" && h.magic != "Pf" && h.magic != "PF")
        fail(path, "unsupported format magic '" + h.magic + "'");
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    double v = std::stod(next_token(in));
    if (h.magic == "Pf" || h.magic == "PF") {
        h.little_endian = v < 0;
        h.maxval = std::abs(v);
    } else {
        h.maxval = v;
    }
    // exactly one whitespace byte separates header and raster
    in.get();
    if (h.width <= 0 || h.height <= 0) fail(path, "bad dimensions");
    return h;
}

Image load_integer_pnm(const std::string& path, int expect_channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    PnmHeader h = read_header(in, path);
    int channels = (h.magic == "P6") ? 3 : 1;
    if (channels != expect_channels && expect_channels > 0)
        fail(path, "unexpected channel count");
    if (h.maxval <= 0 || h.maxval > 65535) fail(path, "bad maxval");

    Image img(h.width, h.height, channels);
    size_t n = img.data.size();
    if (h.maxval > 255) {
        std::vector<uint8_t> raw(n * 2);
        in.read(reinterpret_cast<char*>(raw.data()), raw.size());
        if (!in) fail(path, "truncated raster");
        for (size_t i = 0; i < n; ++i) {
            uint16_t v = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
            img.data[i] = v / h.maxval;
        }
    } else {
        std::vector<uint8_t> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), raw.size());
        if (!in) fail(path, "truncated raster");
        for (size_t i = 0; i < n; ++i)
            img.data[i] = raw[i] / h.maxval;
    }
    return img;
}

void save_integer_pnm(const std::string& path, const Image& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("bit_depth must be 8 or 16");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    const char* magic = img.channels == 3 ? "P6" : "P5";
    int maxval = bit_depth == 16 ? 65535 : 255;
    out << magic << "\n" << img.width << " " << img.height << "\n" << maxval << "\n";
    for (double f : img.data) {
        double v = std::clamp(f, 0.0, 1.0) * maxval;
        auto q = static_cast<uint32_t>(std::lround(v));
        if (bit_depth == 16) {
            uint8_t b[2] = {static_cast<uint8_t>(q >> 8), static_cast<uint8_t>(q & 0xff)};
            out.write(reinterpret_cast<char*>(b), 2);
        } else {
            uint8_t b = static_cast<uint8_t>(q);
            out.write(reinterpret_cast<char*>(&b), 1);
        }
    }
    if (!out) fail(path, "write failed");
}

}  // namespace

double sample_bilinear(const Image& img, double x, double y, int channel) {
    int x0 = clampi(static_cast<int>(std::floor(x)), 0, img.width - 1);
    int y0 = clampi(static_cast<int>(std::floor(y)), 0, img.height - 1);
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double fx = std::clamp(x - x0, 0.0, 1.0);
    double fy = std::clamp(y - y0, 0.0, 1.0);
    double v00 = img.at(x0, y0, channel), v10 = img.at(x1, y0, channel);
    double v01 = img.at(x0, y1, channel), v11 = img.at(x1, y1, channel);
    return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

BilinearSample sample_bilinear_grad(const Image& img, double x, double y,
                                    int channel, double edge_eps) {
    int x0 = clampi(static_cast<int>(std::floor(x)), 0, img.width - 1);
    int y0 = clampi(static_cast<int>(std::floor(y)), 0, img.height - 1);
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double fx = std::clamp(x - x0, 0.0, 1.0);
    double fy = std::clamp(y - y0, 0.0, 1.0);
    double v00 = img.at(x0, y0, channel), v10 = img.at(x1, y0, channel);
    double v01 = img.at(x0, y1, channel), v11 = img.at(x1, y1, channel);
    BilinearSample s;
    s.value = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
    s.dx = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
    s.dy = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
    double rx = x - std::floor(x);
    double ry = y - std::floor(y);
    s.on_cell_edge = rx < edge_eps || rx > 1.0 - edge_eps ||
                     ry < edge_eps || ry > 1.0 - edge_eps;
    return s;
}

double sample_nearest(const Image& img, double x, double y, int channel) {
    int xi = clampi(static_cast<int>(std::lround(x)), 0, img.width - 1);
    int yi = clampi(static_cast<int>(std::lround(y)), 0, img.height - 1);
    return img.at(xi, yi, channel);
}

Image load_pgm(const std::string& path) { return load_integer_pnm(path, 1); }
Image load_ppm(const std::string& path) { return load_integer_pnm(path, 3); }

Image load_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    PnmHeader h = read_header(in, path);
    if (h.magic != "Pf" && h.magic != "PF") fail(path, "not a PFM file");
    int channels = h.magic == "PF" ? 3 : 1;
    Image img(h.width, h.height, channels);
    size_t row_floats = static_cast<size_t>(h.width) * channels;
    std::vector<uint8_t> raw(row_floats * 4);
    const bool host_le = (std::endian::native == std::endian::little);
    // PFM stores rows bottom-to-top
    for (int y = h.height - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(raw.data()), raw.size());
        if (!in) fail(path, "truncated raster");
        for (size_t i = 0; i < row_floats; ++i) {
            uint8_t b[4] = {raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]};
            if (h.little_endian != host_le) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
            float f;
            std::memcpy(&f, b, 4);
            img.data[static_cast<size_t>(y) * row_floats + i] = static_cast<double>(f);
        }
    }
    return img;
}

Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char m[2] = {0, 0};
    in.read(m, 2);
    in.close();
    if (m[0] != 'P') fail(path, "not a netpbm file");
    switch (m[1]) {
        case '5': return load_pgm(path);
        case '6': return load_ppm(path);
        case 'f':
        case 'F': return load_pfm(path);
        default: fail(path, "unsupported netpbm variant");
    }
}

void save_pgm(const std::string& path, const Image& img, int bit_depth) {
    if (img.channels != 1) throw std::invalid_argument("save_pgm: single-channel images only");
    save_integer_pnm(path, img, bit_depth);
}

void save_ppm(const std::string& path, const Image& img, int bit_depth) {
    if (img.channels != 3) throw std::invalid_argument("save_ppm: three-channel images only");
    save_integer_pnm(path, img, bit_depth);
}

void save_pfm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_pfm: 1 or 3 channels only");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    const bool host_le = (std::endian::native == std::endian::little);
    out << (img.channels == 3 ? "PF" : "Pf") << "\n"
        << img.width << " " << img.height << "\n"
        << (host_le ? "-1.0" : "1.0") << "\n";
    size_t row_floats = static_cast<size_t>(img.width) * img.channels;
    std::vector<float> row(row_floats);
    for (int y = img.height - 1; y >= 0; --y) {
        const double* src = img.data.data() + static_cast<size_t>(y) * row_floats;
        for (size_t i = 0; i < row_floats; ++i) row[i] = static_cast<float>(src[i]);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row_floats * 4));
    }
    if (!out) fail(path, "write failed");
}

}  // namespace polarmesh
