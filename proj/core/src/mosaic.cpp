#include "polarmesh/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "polarmesh/parallel.hpp"

namespace polarmesh {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

// Generic bilinear Bayer interpolation. For a missing channel, average the
// axis-aligned neighbors that carry it; fall back to the diagonals. With one
// color per 2x2 cell this reproduces the classic bilinear rules for any
// arrangement. Border neighbors are replicate-clamped, and the color test
// runs on the clamped position so only genuine samples of the channel are
// averaged.
Image debayer_bilinear(const Image& plane, const std::array<int, 4>& bayer) {
    Image rgb(plane.width, plane.height, 3);
    auto color_at = [&](int x, int y) { return bayer[(y & 1) * 2 + (x & 1)]; };
    auto gather = [&](int x, int y, int c, const int (*offsets)[2], double& sum, int& count) {
        for (int k = 0; k < 4; ++k) {
            int nx = clampi(x + offsets[k][0], 0, plane.width - 1);
            int ny = clampi(y + offsets[k][1], 0, plane.height - 1);
            if (color_at(nx, ny) != c) continue;
            sum += plane.at(nx, ny);
            ++count;
        }
    };
    static constexpr int axis[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    static constexpr int diag[4][2] = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
    for (int y = 0; y < plane.height; ++y) {
        for (int x = 0; x < plane.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                if (color_at(x, y) == c) {
                    rgb.at(x, y, c) = plane.at(x, y);
                    continue;
                }
                double sum = 0;
                int count = 0;
                gather(x, y, c, axis, sum, count);
                if (count == 0) gather(x, y, c, diag, sum, count);
                rgb.at(x, y, c) = count > 0 ? sum / count : plane.at(x, y);
            }
        }
    }
    return rgb;
}

}  // namespace

std::array<int, 4> MosaicLayout::canonical_index() const {
    std::array<int, 4> idx{-1, -1, -1, -1};
    const double targets[4] = {0.0, 45.0 * kDegToRad, 90.0 * kDegToRad, 135.0 * kDegToRad};
    for (int t = 0; t < 4; ++t) {
        for (int k = 0; k < 4; ++k) {
            if (std::abs(orientation_rad[k] - targets[t]) < 1e-9) idx[t] = k;
        }
        if (idx[t] < 0)
            throw std::invalid_argument(
                "mosaic layout: orientations must be a permutation of 0/45/90/135 degrees");
    }
    return idx;
}

MosaicLayout MosaicLayout::sony_quad() {
    MosaicLayout l;
    l.orientation_rad = {90.0 * kDegToRad, 45.0 * kDegToRad, 135.0 * kDegToRad, 0.0};
    l.bayer = {0, 1, 1, 2};  // RGGB
    return l;
}

MosaicLayout MosaicLayout::parse(const std::string& text) {
    MosaicLayout l = sony_quad();
    bool saw_orient = false, saw_bayer = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "orientations_deg") {
            for (auto& o : l.orientation_rad) {
                double deg;
                if (!(ls >> deg)) throw std::invalid_argument("mosaic layout: need 4 orientations");
                o = deg * kDegToRad;
            }
            saw_orient = true;
        } else if (key == "bayer") {
            std::string pattern;
            if (!(ls >> pattern) || pattern.size() != 4)
                throw std::invalid_argument("mosaic layout: bayer needs 4 letters");
            for (int i = 0; i < 4; ++i) {
                switch (std::toupper(pattern[i])) {
                    case 'R': l.bayer[i] = 0; break;
                    case 'G': l.bayer[i] = 1; break;
                    case 'B': l.bayer[i] = 2; break;
                    default: throw std::invalid_argument("mosaic layout: bayer letters are R/G/B");
                }
            }
            saw_bayer = true;
        } else {
            throw std::invalid_argument("mosaic layout: unknown key '" + key + "'");
        }
    }
    if (!saw_orient || !saw_bayer)
        throw std::invalid_argument("mosaic layout: requires orientations_deg and bayer lines");
    l.canonical_index();  // validates orientations
    return l;
}

MosaicLayout MosaicLayout::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string MosaicLayout::serialize() const {
    std::ostringstream out;
    out << "orientations_deg";
    for (double o : orientation_rad) out << " " << std::lround(o / kDegToRad);
    out << "\nbayer ";
    for (int c : bayer) out << "RGB"[c];
    out << "\n";
    return out.str();
}

void MosaicLayout::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << serialize();
}

PolarimetricImage demosaic(const PolarizationMosaic& mosaic) {
    const Image& raw = mosaic.raw;
    if (raw.channels != 1) throw std::invalid_argument("demosaic: raw mosaic must be single-channel");
    if (raw.width % 4 != 0 || raw.height % 4 != 0)
        throw std::invalid_argument("demosaic: dimensions must be multiples of 4");
    for (double v : raw.data)
        if (v < 0) throw std::invalid_argument("demosaic: negative sample");

    const int w = raw.width, h = raw.height;
    const int hw = w / 2, hh = h / 2;

    // 1-2. extract each orientation's Bayer plane and color-interpolate it
    std::array<Image, 4> rgb_half;
    for (int d = 0; d < 4; ++d) {
        int dy = d / 2, dx = d % 2;
        Image plane(hw, hh, 1);
        for (int by = 0; by < hh; ++by)
            for (int bx = 0; bx < hw; ++bx)
                plane.at(bx, by) = raw.at(2 * bx + dx, 2 * by + dy);
        rgb_half[d] = debayer_bilinear(plane, mosaic.layout.bayer);
    }

    // orientation index (within the 2x2 block) of each canonical angle
    auto canon = mosaic.layout.canonical_index();
    const int d0 = canon[0], d45 = canon[1], d90 = canon[2], d135 = canon[3];

    PolarimetricImage out;
    out.width = w;
    out.height = h;
    out.aop = Image(w, h, 1);
    out.dop = Image(w, h, 1);
    out.rgb_unpolarized = Image(w, h, 3);
    out.valid_mask = Image(w, h, 1);

    // 3-4. polarization upsampling + per-pixel Stokes quantities
    parallel_for(static_cast<size_t>(h), [&](size_t y_begin, size_t y_end) {
        for (size_t yy = y_begin; yy < y_end; ++yy) {
            int y = static_cast<int>(yy);
            for (int x = 0; x < w; ++x) {
                // RGB of all four orientations at this pixel
                Eigen::Vector3d rgb[4];
                for (int d = 0; d < 4; ++d) {
                    int dy = d / 2, dx = d % 2;
                    double hx = (x - dx) * 0.5;
                    double hy = (y - dy) * 0.5;
                    for (int c = 0; c < 3; ++c)
                        rgb[d][c] = sample_bilinear(rgb_half[d], hx, hy, c);
                }
                double i0 = rgb[d0].mean(), i45 = rgb[d45].mean();
                double i90 = rgb[d90].mean(), i135 = rgb[d135].mean();
                StokesVector s{i0 + i90, i0 - i90, i45 - i135, 0.0};
                double rho = dop(s);
                auto phi = aop(s);
                out.dop.at(x, y) = phi ? rho : 0.0;
                out.aop.at(x, y) = phi.value_or(0.0);
                out.valid_mask.at(x, y) = phi ? 1.0 : 0.0;
                Eigen::Vector3d unpol = unpolarized_rgb(rgb[d0], rgb[d90], rho);
                for (int c = 0; c < 3; ++c) out.rgb_unpolarized.at(x, y, c) = unpol[c];
            }
        }
    });
    return out;
}

}  // namespace polarmesh
