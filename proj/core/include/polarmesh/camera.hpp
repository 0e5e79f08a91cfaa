#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace polarmesh {

// Pinhole projection of a world point: pixel position (integer-coordinate
// pixel centers) and camera-space depth.
struct Projection {
    Eigen::Vector2d pixel;
    double depth = 0.0;
};

// Calibrated pinhole camera. R maps world to camera coordinates (x right,
// y down, z forward): Xc = R * X + t.
struct Camera {
    int view_id = 0;
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    int width = 0, height = 0;

    Eigen::Vector3d to_camera(const Eigen::Vector3d& x) const { return R * x + t; }

    // Optical center in world coordinates.
    Eigen::Vector3d center() const { return -(R.transpose() * t); }

    // Empty when the point lies on or behind the camera plane.
    std::optional<Projection> project(const Eigen::Vector3d& x) const;

    // True when a pixel position can be sampled from the image without
    // extrapolation (centers at integer coordinates).
    bool in_image(const Eigen::Vector2d& pixel) const {
        return pixel.x() >= 0.0 && pixel.x() <= width - 1.0 && pixel.y() >= 0.0 &&
               pixel.y() <= height - 1.0;
    }

    // Azimuth of a world-space direction projected into the image plane,
    // measured counterclockwise from the image x axis in [0, 2*pi). Empty
    // when the direction is almost parallel to the optical axis.
    std::optional<double> projected_azimuth(const Eigen::Vector3d& world_dir) const;

    // Camera at `eye` looking toward `target`; `up` fixes the roll. The
    // image y axis points against `up` as far as the viewing direction
    // allows.
    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double fx, double fy, double cx,
                          double cy, int width, int height);
};

// Squared image-plane norm below which the projected azimuth is treated as
// undefined.
inline constexpr double kAzimuthEpsilon = 1e-6;

// Text format, one camera per line:
//   view_id fx fy cx cy r11 r12 r13 r21 r22 r23 r31 r32 r33 t1 t2 t3 width height
// Blank lines and lines starting with '#' are ignored.
std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::vector<Camera>& cameras, const std::string& path);

}  // namespace polarmesh
