#include "polarmesh/shading.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace polarmesh {

Eigen::Matrix<double, 9, 1> sh_basis(const Eigen::Vector3d& n) {
    const double x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<double, 9, 1> b;
    b << 1.0, y, z, x, x * y, y * z, z * z - 1.0 / 3.0, x * z, x * x - y * y;
    return b;
}

Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Eigen::Vector3d& n) {
    const double x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<double, 9, 3> j;
    // Columns: d/dx, d/dy, d/dz.
    j << 0, 0, 0,            //
        0, 1, 0,             //
        0, 0, 1,             //
        1, 0, 0,             //
        y, x, 0,             //
        0, z, y,             //
        0, 0, 2 * z,         //
        z, 0, x,             //
        2 * x, -2 * y, 0;
    return j;
}

double sh_shading(const Eigen::Vector3d& n, const Eigen::Matrix<double, 9, 1>& sh) {
    return sh.dot(sh_basis(n));
}

Eigen::Vector3d sh_shading_gradient(const Eigen::Vector3d& n,
                                    const Eigen::Matrix<double, 9, 1>& sh) {
    return sh_basis_jacobian(n).transpose() * sh;
}

Eigen::Vector3d render_vertex(const Eigen::Vector3d& albedo, const Eigen::Vector3d& n,
                              const Illumination& illum) {
    return albedo.cwiseProduct(illum.color) * sh_shading(n, illum.sh);
}

std::vector<Illumination> load_illuminations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open illumination file: " + path);
    std::vector<Illumination> illums;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        ss >> std::ws;
        if (ss.eof() || ss.peek() == '#') continue;
        Illumination ill;
        for (int k = 0; k < 9; ++k)
            if (!(ss >> ill.sh[k]))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": expected 12 numbers");
        for (int k = 0; k < 3; ++k)
            if (!(ss >> ill.color[k]))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": expected 12 numbers");
        illums.push_back(ill);
    }
    return illums;
}

void save_illuminations(const std::vector<Illumination>& illums, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write illumination file: " + path);
    out << "# per view: 9 shading basis weights, then R G B color scales\n";
    out << std::setprecision(17);
    for (const Illumination& ill : illums) {
        for (int k = 0; k < 9; ++k) out << ill.sh[k] << ' ';
        out << ill.color[0] << ' ' << ill.color[1] << ' ' << ill.color[2] << '\n';
    }
    if (!out) throw std::runtime_error("failed writing illumination file: " + path);
}

}  // namespace polarmesh
