#include "polarmesh/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polarmesh/parallel.hpp"

namespace polarmesh {

Image rasterize_depth(const Mesh& mesh, const Camera& camera, std::vector<int>* face_ids) {
    Image depth(camera.width, camera.height, 1, std::numeric_limits<double>::infinity());
    if (face_ids) face_ids->assign(static_cast<size_t>(camera.width) * camera.height, -1);
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        auto pa = camera.project(mesh.vertices[face[0]]);
        auto pb = camera.project(mesh.vertices[face[1]]);
        auto pc = camera.project(mesh.vertices[face[2]]);
        if (!pa || !pb || !pc) continue;
        const Eigen::Vector2d &qa = pa->pixel, &qb = pb->pixel, &qc = pc->pixel;
        double area2 = (qb.x() - qa.x()) * (qc.y() - qa.y()) -
                       (qb.y() - qa.y()) * (qc.x() - qa.x());
        if (std::abs(area2) < 1e-12) continue;
        int x0 = std::max(0, static_cast<int>(std::ceil(std::min({qa.x(), qb.x(), qc.x()}))));
        int x1 = std::min(camera.width - 1,
                          static_cast<int>(std::floor(std::max({qa.x(), qb.x(), qc.x()}))));
        int y0 = std::max(0, static_cast<int>(std::ceil(std::min({qa.y(), qb.y(), qc.y()}))));
        int y1 = std::min(camera.height - 1,
                          static_cast<int>(std::floor(std::max({qa.y(), qb.y(), qc.y()}))));
        double iza = 1.0 / pa->depth, izb = 1.0 / pb->depth, izc = 1.0 / pc->depth;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double l0 = ((qc.x() - qb.x()) * (y - qb.y()) -
                             (qc.y() - qb.y()) * (x - qb.x())) /
                            area2;
                double l1 = ((qa.x() - qc.x()) * (y - qc.y()) -
                             (qa.y() - qc.y()) * (x - qc.x())) /
                            area2;
                double l2 = 1.0 - l0 - l1;
                if (l0 < -1e-12 || l1 < -1e-12 || l2 < -1e-12) continue;
                // 1/z is affine across the screen-space triangle.
                double z = 1.0 / (l0 * iza + l1 * izb + l2 * izc);
                if (z < depth.at(x, y)) {
                    depth.at(x, y) = z;
                    if (face_ids)
                        (*face_ids)[static_cast<size_t>(y) * camera.width + x] =
                            static_cast<int>(f);
                }
            }
        }
    }
    return depth;
}

std::vector<std::vector<int>> compute_visibility(const Mesh& mesh,
                                                 const std::vector<Camera>& cameras,
                                                 double depth_tolerance) {
    const int nv = mesh.vertex_count();
    if (depth_tolerance <= 0)
        depth_tolerance = kDepthToleranceScale * bounding_box(mesh).diagonal();
    const std::vector<Eigen::Vector3d> normals = vertex_normals(mesh);

    std::vector<std::vector<char>> flags(cameras.size());
    parallel_for(cameras.size(), [&](size_t begin, size_t end) {
        for (size_t c = begin; c < end; ++c) {
            const Camera& cam = cameras[c];
            std::vector<int> face_ids;
            const Image depth = rasterize_depth(mesh, cam, &face_ids);
            const Eigen::Vector3d center = cam.center();
            std::vector<char>& visible = flags[c];
            visible.assign(nv, 0);
            for (int v = 0; v < nv; ++v) {
                auto proj = cam.project(mesh.vertices[v]);
                if (!proj || !cam.in_image(proj->pixel)) continue;
                if (normals[v].dot(mesh.vertices[v] - center) >= 0.0) continue;
                // Search a 3x3 window: the vertex's own pixel may round onto
                // a neighboring sample near silhouettes.
                int px = static_cast<int>(std::lround(proj->pixel.x()));
                int py = static_cast<int>(std::lround(proj->pixel.y()));
                bool match = false;
                for (int dy = -1; dy <= 1 && !match; ++dy) {
                    for (int dx = -1; dx <= 1 && !match; ++dx) {
                        int x = px + dx, y = py + dy;
                        if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
                        if (std::abs(depth.at(x, y) - proj->depth) <= depth_tolerance) {
                            match = true;
                            break;
                        }
                        // The surface seen at this pixel belongs to the
                        // vertex itself: visible regardless of the local
                        // depth slope.
                        int fid = face_ids[static_cast<size_t>(y) * cam.width + x];
                        if (fid >= 0) {
                            const auto& face = mesh.faces[fid];
                            if (face[0] == v || face[1] == v || face[2] == v) {
                                match = true;
                                break;
                            }
                        }
                    }
                }
                visible[v] = match;
            }
        }
    });

    std::vector<std::vector<int>> result(nv);
    for (size_t c = 0; c < cameras.size(); ++c)
        for (int v = 0; v < nv; ++v)
            if (flags[c][v]) result[v].push_back(static_cast<int>(c));
    return result;
}

}  // namespace polarmesh
