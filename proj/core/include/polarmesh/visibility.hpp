#pragma once

#include <vector>

#include "polarmesh/camera.hpp"
#include "polarmesh/image.hpp"
#include "polarmesh/mesh.hpp"

namespace polarmesh {

// Relative depth tolerance: visibility compares vertex depth against the
// depth buffer within kDepthToleranceScale * bounding-box diagonal.
inline constexpr double kDepthToleranceScale = 1e-3;

// Z-buffer of the whole mesh at full image resolution; background pixels
// hold +infinity. Faces with a corner on or behind the camera plane are
// skipped (scenes here keep the object fully in front of every camera).
// When face_ids is given it receives the winning face per pixel (-1 for
// background), aligned with the returned image.
Image rasterize_depth(const Mesh& mesh, const Camera& camera,
                      std::vector<int>* face_ids = nullptr);

// Ascending camera indices per vertex. A vertex is visible in a camera when
// its projection is inside the image with positive depth, its vertex normal
// faces the camera, and a pixel in the 3x3 window around the projection is
// either owned by a face incident to the vertex or depth-buffer-consistent
// with the vertex depth within the tolerance (pass depth_tolerance <= 0 to
// use kDepthToleranceScale * diagonal). The incidence clause keeps vertices
// of coarse, steeply sloped surfaces visible where interpolated depth at a
// neighboring pixel center legitimately drifts beyond the tolerance.
std::vector<std::vector<int>> compute_visibility(const Mesh& mesh,
                                                 const std::vector<Camera>& cameras,
                                                 double depth_tolerance = -1.0);

}  // namespace polarmesh
