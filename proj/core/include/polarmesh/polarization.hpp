#pragma once

#include <Eigen/Core>
#include <optional>

#include "polarmesh/image.hpp"

namespace polarmesh {

// Linear-polarization Stokes parameters. s3 stays zero: circular
// polarization is out of scope.
struct StokesVector {
    double s0 = 0;
    double s1 = 0;
    double s2 = 0;
    double s3 = 0;
};

// Per-view polarimetric quantities at full sensor resolution.
// aop is in [0, pi) radians, dop in [0, 1]; pixels where the angle of
// polarization is undefined (no linear polarization) carry valid = false
// and dop = 0.
struct PolarimetricImage {
    Image aop;              // 1 channel, radians
    Image dop;              // 1 channel
    Image rgb_unpolarized;  // 3 channels
    Image valid_mask;       // 1 channel, 0 or 1
    int width = 0;
    int height = 0;
};

// Stokes vector from the four canonical polarizer measurements.
// Throws std::invalid_argument on negative intensities.
StokesVector stokes_from_intensities(double i0, double i45, double i90, double i135);

// Angle of polarization, (1/2) atan2(s2, s1) wrapped into [0, pi).
// nullopt when s1 and s2 both vanish (no azimuth information).
std::optional<double> aop(const StokesVector& s);

// Degree of polarization, sqrt(s1^2 + s2^2) / s0 clamped to [0, 1].
// Returns 0 when s0 == 0.
double dop(const StokesVector& s);

// Unpolarized RGB component: per channel (i0 + i90) * (1 - rho) / 2.
Eigen::Vector3d unpolarized_rgb(const Eigen::Vector3d& i0_rgb,
                                const Eigen::Vector3d& i90_rgb, double rho);

// Malus-style intensity through a linear polarizer at angle phi_pol when the
// reflected light has AoP phi and extremal intensities i_max >= i_min.
// Throws std::invalid_argument if i_min > i_max or i_min < 0.
double synthesize_intensity(double i_max, double i_min, double phi, double phi_pol);

// Wraps an angle into [0, pi).
double wrap_angle_pi(double angle);

// Wraps an angle into [0, 2*pi).
double wrap_angle_two_pi(double angle);

}  // namespace polarmesh
