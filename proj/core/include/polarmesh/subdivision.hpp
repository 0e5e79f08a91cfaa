#pragma once

#include <vector>

#include "polarmesh/camera.hpp"
#include "polarmesh/mesh.hpp"

namespace polarmesh {

// One sqrt(3)-subdivision step: a vertex at each face centroid, every
// interior original edge flipped, original vertices smoothed (boundary
// vertices stay put). Vertex count grows to V + F, face count to 3F; albedo
// of a centroid vertex is the mean of its corners. Throws on non-manifold
// input.
Mesh sqrt3_subdivide(const Mesh& mesh);

// Pixel area of a face's projection (shoelace formula); 0 when any corner
// is on or behind the camera plane.
double projected_face_area(const Camera& camera, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& b, const Eigen::Vector3d& c);

struct SubdivisionResult {
    Mesh mesh;
    int rounds = 0;
    bool budget_met = true;  // false when the round cap stopped the loop
};

// Subdivides until every face's largest projected pixel area over the
// cameras where all three of its corners are visible drops below
// budget_pixels, or max_rounds is hit. Visibility is recomputed each round.
SubdivisionResult subdivide_to_pixel_budget(const Mesh& mesh,
                                            const std::vector<Camera>& cameras,
                                            double budget_pixels, int max_rounds = 4);

}  // namespace polarmesh
