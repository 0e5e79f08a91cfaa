#include "polarmesh/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "polarmesh/polarization.hpp"

namespace polarmesh {

std::optional<Projection> Camera::project(const Eigen::Vector3d& x) const {
    Eigen::Vector3d xc = to_camera(x);
    if (xc.z() <= 0.0) return std::nullopt;
    Projection p;
    p.pixel = Eigen::Vector2d(fx * xc.x() / xc.z() + cx, fy * xc.y() / xc.z() + cy);
    p.depth = xc.z();
    return p;
}

std::optional<double> Camera::projected_azimuth(const Eigen::Vector3d& world_dir) const {
    Eigen::Vector3d n = R * world_dir;
    double plane_sq = n.x() * n.x() + n.y() * n.y();
    if (plane_sq < kAzimuthEpsilon) return std::nullopt;
    // Image y runs downward, so flip it to measure counterclockwise.
    return wrap_angle_two_pi(std::atan2(-n.y(), n.x()));
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fx, double fy, double cx,
                       double cy, int width, int height) {
    Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    double xn = x.norm();
    if (xn < 1e-12) throw std::invalid_argument("look_at: view direction parallel to up");
    x /= xn;
    Eigen::Vector3d y = z.cross(x);
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = width;
    cam.height = height;
    cam.R.row(0) = x.transpose();
    cam.R.row(1) = y.transpose();
    cam.R.row(2) = z.transpose();
    cam.t = -(cam.R * eye);
    return cam;
}

std::vector<Camera> load_cameras(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open camera file: " + path);
    std::vector<Camera> cameras;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        ss >> std::ws;
        if (ss.eof() || ss.peek() == '#') continue;
        Camera cam;
        double r[9];
        double t[3];
        if (!(ss >> cam.view_id >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> r[0] >> r[1] >>
              r[2] >> r[3] >> r[4] >> r[5] >> r[6] >> r[7] >> r[8] >> t[0] >> t[1] >> t[2] >>
              cam.width >> cam.height)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed camera line");
        }
        cam.R << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
        cam.t = Eigen::Vector3d(t[0], t[1], t[2]);
        if (cam.width <= 0 || cam.height <= 0) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": non-positive image size");
        }
        cameras.push_back(cam);
    }
    return cameras;
}

void save_cameras(const std::vector<Camera>& cameras, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write camera file: " + path);
    out << "# view_id fx fy cx cy r11 r12 r13 r21 r22 r23 r31 r32 r33 t1 t2 t3 width height\n";
    out << std::setprecision(17);
    for (const Camera& cam : cameras) {
        out << cam.view_id << ' ' << cam.fx << ' ' << cam.fy << ' ' << cam.cx << ' '
            << cam.cy;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out << ' ' << cam.R(i, j);
        for (int i = 0; i < 3; ++i) out << ' ' << cam.t(i);
        out << ' ' << cam.width << ' ' << cam.height << '\n';
    }
    if (!out) throw std::runtime_error("failed writing camera file: " + path);
}

}  // namespace polarmesh
