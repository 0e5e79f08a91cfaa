#include "polarmesh/polarization.hpp"

#include <cmath>
#include <stdexcept>

namespace polarmesh {

StokesVector stokes_from_intensities(double i0, double i45, double i90, double i135) {
    if (i0 < 0 || i45 < 0 || i90 < 0 || i135 < 0)
        throw std::invalid_argument("stokes_from_intensities: negative intensity");
    return {i0 + i90, i0 - i90, i45 - i135, 0.0};
}

std::optional<double> aop(const StokesVector& s) {
    if (s.s1 == 0.0 && s.s2 == 0.0) return std::nullopt;
    return wrap_angle_pi(0.5 * std::atan2(s.s2, s.s1));
}

double dop(const StokesVector& s) {
    if (s.s0 <= 0.0) return 0.0;
    double rho = std::sqrt(s.s1 * s.s1 + s.s2 * s.s2) / s.s0;
    return std::min(rho, 1.0);
}

Eigen::Vector3d unpolarized_rgb(const Eigen::Vector3d& i0_rgb,
                                const Eigen::Vector3d& i90_rgb, double rho) {
    return (i0_rgb + i90_rgb) * (1.0 - rho) * 0.5;
}

double synthesize_intensity(double i_max, double i_min, double phi, double phi_pol) {
    if (i_min < 0 || i_min > i_max)
        throw std::invalid_argument("synthesize_intensity: requires i_max >= i_min >= 0");
    return 0.5 * (i_max + i_min) + 0.5 * (i_max - i_min) * std::cos(2.0 * (phi_pol - phi));
}

double wrap_angle_pi(double angle) {
    double a = std::fmod(angle, M_PI);
    if (a < 0) a += M_PI;
    // fmod of a tiny negative can round back up to pi
    if (a >= M_PI) a = 0.0;
    return a;
}

double wrap_angle_two_pi(double angle) {
    double a = std::fmod(angle, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    if (a >= 2.0 * M_PI) a = 0.0;
    return a;
}

}  // namespace polarmesh
