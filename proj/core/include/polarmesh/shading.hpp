#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace polarmesh {

// Second-order spherical-harmonics lighting for one view: nine basis
// weights plus per-channel color scales.
struct Illumination {
    Eigen::Matrix<double, 9, 1> sh = Eigen::Matrix<double, 9, 1>::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Ones();

    static Illumination ambient(double l0) {
        Illumination ill;
        ill.sh[0] = l0;
        return ill;
    }
};

// Monomial second-order basis evaluated at a unit normal:
//   1, Ny, Nz, Nx, NxNy, NyNz, Nz^2 - 1/3, NxNz, Nx^2 - Ny^2.
Eigen::Matrix<double, 9, 1> sh_basis(const Eigen::Vector3d& n);

// d(basis)/d(normal), 9 x 3.
Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Eigen::Vector3d& n);

// Shading scalar S = sh . basis(n). Linear in sh.
double sh_shading(const Eigen::Vector3d& n, const Eigen::Matrix<double, 9, 1>& sh);

// dS/dn.
Eigen::Vector3d sh_shading_gradient(const Eigen::Vector3d& n,
                                    const Eigen::Matrix<double, 9, 1>& sh);

// Rendered color: per channel ch, albedo_ch * S(n) * color_ch. Negative
// shading passes through untouched.
Eigen::Vector3d render_vertex(const Eigen::Vector3d& albedo, const Eigen::Vector3d& n,
                              const Illumination& illum);

// Text format: one view per line, 12 numbers (nine basis weights then the
// RGB color scales). '#' starts a comment.
std::vector<Illumination> load_illuminations(const std::string& path);
void save_illuminations(const std::vector<Illumination>& illums, const std::string& path);

}  // namespace polarmesh
