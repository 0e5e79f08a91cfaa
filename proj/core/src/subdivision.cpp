#include "polarmesh/subdivision.hpp"

#include <cmath>
#include <numbers>

#include "polarmesh/visibility.hpp"

namespace polarmesh {

namespace {

// True when `face` walks the directed edge a -> b.
bool traverses(const std::array<int, 3>& face, int a, int b) {
    for (int k = 0; k < 3; ++k)
        if (face[k] == a && face[(k + 1) % 3] == b) return true;
    return false;
}

}  // namespace

Mesh sqrt3_subdivide(const Mesh& mesh) {
    const MeshAdjacency adj = build_adjacency(mesh);
    const int nv = mesh.vertex_count();
    const int nf = mesh.face_count();
    const bool color = mesh.has_albedo();

    Mesh out;
    out.vertices.resize(nv + nf);
    if (color) out.albedo.resize(nv + nf);

    // Smoothed originals. Interior vertices relax toward their one-ring with
    // the valence-dependent weight of the scheme; boundary vertices are kept.
    for (int v = 0; v < nv; ++v) {
        const auto& ring = adj.vertex_ring[v];
        if (adj.boundary_vertex[v] || ring.empty()) {
            out.vertices[v] = mesh.vertices[v];
        } else {
            double n = static_cast<double>(ring.size());
            double beta = (4.0 - 2.0 * std::cos(2.0 * std::numbers::pi / n)) / 9.0;
            Eigen::Vector3d sum = Eigen::Vector3d::Zero();
            for (int j : ring) sum += mesh.vertices[j];
            out.vertices[v] = (1.0 - beta) * mesh.vertices[v] + (beta / n) * sum;
        }
        if (color) out.albedo[v] = mesh.albedo[v];
    }

    // Centroid vertices, one per face.
    for (int f = 0; f < nf; ++f) {
        const auto& face = mesh.faces[f];
        out.vertices[nv + f] = (mesh.vertices[face[0]] + mesh.vertices[face[1]] +
                                mesh.vertices[face[2]]) /
                               3.0;
        if (color)
            out.albedo[nv + f] =
                (mesh.albedo[face[0]] + mesh.albedo[face[1]] + mesh.albedo[face[2]]) / 3.0;
    }

    // Interior edges are flipped to connect the two incident centroids;
    // boundary edges keep their fan triangle.
    out.faces.reserve(adj.edges.size() * 2);
    for (const MeshEdge& e : adj.edges) {
        if (e.f1 == -1) {
            int f = e.f0;
            int a = traverses(mesh.faces[f], e.a, e.b) ? e.a : e.b;
            int b = a == e.a ? e.b : e.a;
            out.faces.push_back({a, b, nv + f});
        } else {
            int fl = traverses(mesh.faces[e.f0], e.a, e.b) ? e.f0 : e.f1;
            int fr = fl == e.f0 ? e.f1 : e.f0;
            out.faces.push_back({e.a, nv + fr, nv + fl});
            out.faces.push_back({e.b, nv + fl, nv + fr});
        }
    }
    return out;
}

double projected_face_area(const Camera& camera, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    auto pa = camera.project(a), pb = camera.project(b), pc = camera.project(c);
    if (!pa || !pb || !pc) return 0.0;
    const Eigen::Vector2d &qa = pa->pixel, &qb = pb->pixel, &qc = pc->pixel;
    return 0.5 * std::abs(qa.x() * (qb.y() - qc.y()) + qb.x() * (qc.y() - qa.y()) +
                          qc.x() * (qa.y() - qb.y()));
}

namespace {

bool any_face_over_budget(const Mesh& mesh, const std::vector<Camera>& cameras,
                          double budget_pixels) {
    const auto visibility = compute_visibility(mesh, cameras);
    for (const auto& face : mesh.faces) {
        const auto &va = visibility[face[0]], &vb = visibility[face[1]],
                   &vc = visibility[face[2]];
        for (int c : va) {
            if (std::find(vb.begin(), vb.end(), c) == vb.end()) continue;
            if (std::find(vc.begin(), vc.end(), c) == vc.end()) continue;
            double area = projected_face_area(cameras[c], mesh.vertices[face[0]],
                                              mesh.vertices[face[1]], mesh.vertices[face[2]]);
            if (area >= budget_pixels) return true;
        }
    }
    return false;
}

}  // namespace

SubdivisionResult subdivide_to_pixel_budget(const Mesh& mesh,
                                            const std::vector<Camera>& cameras,
                                            double budget_pixels, int max_rounds) {
    SubdivisionResult result;
    result.mesh = mesh;
    while (any_face_over_budget(result.mesh, cameras, budget_pixels)) {
        if (result.rounds >= max_rounds) {
            result.budget_met = false;
            return result;
        }
        result.mesh = sqrt3_subdivide(result.mesh);
        ++result.rounds;
    }
    return result;
}

}  // namespace polarmesh
