#include "polarmesh/mesh.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace polarmesh {

Eigen::Vector3d face_area_normal(const Mesh& mesh, int face) {
    const auto& f = mesh.faces[face];
    const Eigen::Vector3d& a = mesh.vertices[f[0]];
    return (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a);
}

std::vector<Eigen::Vector3d> face_unit_normals(const Mesh& mesh,
                                               std::vector<char>* degenerate) {
    std::vector<Eigen::Vector3d> normals(mesh.faces.size());
    if (degenerate) degenerate->assign(mesh.faces.size(), 0);
    for (int f = 0; f < mesh.face_count(); ++f) {
        Eigen::Vector3d n = face_area_normal(mesh, f);
        double len = n.norm();
        if (len <= kDegenerateFaceEpsilon) {
            normals[f].setZero();
            if (degenerate) (*degenerate)[f] = 1;
        } else {
            normals[f] = n / len;
        }
    }
    return normals;
}

std::vector<Eigen::Vector3d> vertex_normals(const Mesh& mesh, bool* had_degenerate) {
    std::vector<char> face_bad;
    std::vector<Eigen::Vector3d> face_n = face_unit_normals(mesh, &face_bad);
    std::vector<Eigen::Vector3d> sums(mesh.vertices.size(), Eigen::Vector3d::Zero());
    for (int f = 0; f < mesh.face_count(); ++f) {
        if (face_bad[f]) continue;
        for (int v : mesh.faces[f]) sums[v] += face_n[f];
    }
    bool bad = false;
    for (auto& s : sums) {
        double len = s.norm();
        if (len < 1e-12) {
            s = Eigen::Vector3d(0, 0, 1);
            bad = true;
        } else {
            s /= len;
        }
    }
    if (had_degenerate) *had_degenerate = bad;
    return sums;
}

namespace {

int64_t edge_key(int a, int b, int64_t n) {
    if (a > b) std::swap(a, b);
    return static_cast<int64_t>(a) * n + b;
}

}  // namespace

MeshAdjacency build_adjacency(const Mesh& mesh) {
    const int nv = mesh.vertex_count();
    const int nf = mesh.face_count();
    MeshAdjacency adj;
    adj.vertex_faces.resize(nv);
    adj.vertex_ring.resize(nv);
    adj.face_neighbors.assign(nf, {-1, -1, -1});
    adj.boundary_vertex.assign(nv, 0);

    std::unordered_map<int64_t, int> edge_index;
    edge_index.reserve(static_cast<size_t>(nf) * 2);
    std::vector<std::array<int, 3>> face_edges(nf);
    for (int f = 0; f < nf; ++f) {
        const auto& face = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            int a = face[k], b = face[(k + 1) % 3];
            if (a < 0 || b < 0 || a >= nv || b >= nv)
                throw std::runtime_error("face index out of range");
            auto [it, inserted] = edge_index.try_emplace(edge_key(a, b, nv),
                                                         static_cast<int>(adj.edges.size()));
            if (inserted) {
                MeshEdge e;
                e.a = std::min(a, b);
                e.b = std::max(a, b);
                e.f0 = f;
                adj.edges.push_back(e);
            } else {
                MeshEdge& e = adj.edges[it->second];
                if (e.f1 != -1) throw std::runtime_error("non-manifold edge");
                e.f1 = f;
            }
            face_edges[f][k] = it->second;
        }
        adj.vertex_faces[face[0]].push_back(f);
        adj.vertex_faces[face[1]].push_back(f);
        adj.vertex_faces[face[2]].push_back(f);
    }

    // Re-sort edges by endpoints so the ordering is independent of hashing,
    // then resolve the per-face neighbor across each edge.
    std::vector<int> order(adj.edges.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        const MeshEdge &ex = adj.edges[x], &ey = adj.edges[y];
        return ex.a != ey.a ? ex.a < ey.a : ex.b < ey.b;
    });
    std::vector<int> rank(order.size());
    for (size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
    std::vector<MeshEdge> sorted(adj.edges.size());
    for (size_t i = 0; i < order.size(); ++i) sorted[i] = adj.edges[order[i]];
    adj.edges.swap(sorted);
    for (auto& fe : face_edges)
        for (int& e : fe) e = rank[e];

    for (int f = 0; f < nf; ++f) {
        for (int k = 0; k < 3; ++k) {
            const MeshEdge& e = adj.edges[face_edges[f][k]];
            adj.face_neighbors[f][k] = e.f0 == f ? e.f1 : e.f0;
        }
    }
    for (const MeshEdge& e : adj.edges) {
        adj.vertex_ring[e.a].push_back(e.b);
        adj.vertex_ring[e.b].push_back(e.a);
        if (e.f1 == -1) {
            adj.boundary_vertex[e.a] = 1;
            adj.boundary_vertex[e.b] = 1;
        }
    }
    for (auto& ring : adj.vertex_ring) std::sort(ring.begin(), ring.end());
    return adj;
}

std::vector<std::string> validate_mesh(const Mesh& mesh) {
    std::vector<std::string> issues;
    const int nv = mesh.vertex_count();
    if (!mesh.albedo.empty() && mesh.albedo.size() != mesh.vertices.size())
        issues.push_back("albedo count does not match vertex count");

    std::unordered_map<int64_t, int> undirected;
    std::unordered_map<int64_t, int> directed;
    std::vector<char> used(nv, 0);
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& face = mesh.faces[f];
        bool in_range = true;
        for (int v : face) {
            if (v < 0 || v >= nv) {
                issues.push_back("face " + std::to_string(f) + " references vertex " +
                                 std::to_string(v) + " out of range");
                in_range = false;
            }
        }
        if (!in_range) continue;
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
            issues.push_back("face " + std::to_string(f) + " repeats a vertex");
            continue;
        }
        for (int v : face) used[v] = 1;
        for (int k = 0; k < 3; ++k) {
            int a = face[k], b = face[(k + 1) % 3];
            int count = ++undirected[edge_key(a, b, nv)];
            if (count == 3)
                issues.push_back("edge " + std::to_string(std::min(a, b)) + "-" +
                                 std::to_string(std::max(a, b)) +
                                 " is shared by more than two faces");
            int dir = ++directed[static_cast<int64_t>(a) * nv + b];
            if (dir == 2)
                issues.push_back("edge " + std::to_string(a) + "->" + std::to_string(b) +
                                 " is traversed twice in the same direction (inconsistent "
                                 "winding)");
        }
    }
    for (int v = 0; v < nv; ++v)
        if (!used[v])
            issues.push_back("vertex " + std::to_string(v) + " is not used by any face");
    return issues;
}

BoundingBox bounding_box(const Mesh& mesh) {
    BoundingBox box;
    if (mesh.vertices.empty()) return box;
    box.min = box.max = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
        box.min = box.min.cwiseMin(v);
        box.max = box.max.cwiseMax(v);
    }
    return box;
}

}  // namespace polarmesh
