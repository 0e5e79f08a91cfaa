#pragma once

#include <array>
#include <string>

#include "polarmesh/polarization.hpp"

namespace polarmesh {

// Describes the 4x4 color-polarization filter tile. Every 2x2 pixel block
// carries the four polarizer orientations (row-major within the block), and
// the blocks themselves are Bayer-arranged by color (row-major across the
// 2x2 blocks of the tile). Sensors differ in the exact placement, so the
// layout ships as a sidecar descriptor next to the raw file:
//
//   orientations_deg 90 45 135 0
//   bayer RGGB
//
struct MosaicLayout {
    std::array<double, 4> orientation_rad{};  // per (dy, dx) block offset
    std::array<int, 4> bayer{};               // 0 = R, 1 = G, 2 = B per block

    // Index 0..3 of the orientation equal to 0, 45, 90, 135 degrees.
    std::array<int, 4> canonical_index() const;

    static MosaicLayout sony_quad();  // orientations 90 45 / 135 0, RGGB

    static MosaicLayout parse(const std::string& text);
    static MosaicLayout load(const std::string& path);
    std::string serialize() const;
    void save(const std::string& path) const;
};

// Raw single-channel mosaic straight off a color-polarization sensor.
struct PolarizationMosaic {
    Image raw;  // 1 channel, samples >= 0
    MosaicLayout layout;

    int width() const { return raw.width; }
    int height() const { return raw.height; }
};

// Full-resolution AoP / DoP / unpolarized-RGB recovery:
//  1. per-orientation Bayer planes extracted from every 2x2 block,
//  2. bilinear Bayer color interpolation at half resolution,
//  3. bilinear polarization upsampling back to full resolution,
//  4. per-pixel Stokes vector (RGB averaged per orientation) -> AoP, DoP,
//     and the unpolarized component (i0 + i90)(1 - rho)/2 per channel.
// Border pixels use replicate-edge padding. Throws std::invalid_argument
// when dimensions are not multiples of 4 or samples are negative.
PolarimetricImage demosaic(const PolarizationMosaic& mosaic);

}  // namespace polarmesh
