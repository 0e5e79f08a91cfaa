#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

namespace polarmesh {

// Triangle mesh with optional per-vertex RGB albedo in [0, 1].
struct Mesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Eigen::Vector3d> albedo;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    bool has_albedo() const { return !vertices.empty() && albedo.size() == vertices.size(); }
};

// Cross-product norm below which a face is treated as zero-area.
inline constexpr double kDegenerateFaceEpsilon = 1e-20;

// Unnormalized face normal (cross product of the edge vectors); its norm is
// twice the face area.
Eigen::Vector3d face_area_normal(const Mesh& mesh, int face);

// Unit face normals. Zero-area faces get a zero vector and set the optional
// per-face flag.
std::vector<Eigen::Vector3d> face_unit_normals(const Mesh& mesh,
                                               std::vector<char>* degenerate = nullptr);

// Normalized average of the unit normals of the incident non-degenerate
// faces. A vertex whose average vanishes (or that has no usable face) gets
// +z and raises *had_degenerate.
std::vector<Eigen::Vector3d> vertex_normals(const Mesh& mesh,
                                            bool* had_degenerate = nullptr);

// Undirected edge with its incident faces; a < b and f1 == -1 on a boundary.
struct MeshEdge {
    int a = -1, b = -1;
    int f0 = -1, f1 = -1;
};

struct MeshAdjacency {
    std::vector<std::vector<int>> vertex_faces;   // ascending face ids
    std::vector<std::vector<int>> vertex_ring;    // ascending one-ring vertex ids
    std::vector<MeshEdge> edges;                  // sorted by (a, b)
    std::vector<std::array<int, 3>> face_neighbors;  // across edge (v[k], v[k+1]); -1 boundary
    std::vector<char> boundary_vertex;
};

// Throws std::runtime_error on a non-manifold edge (more than two incident
// faces); run validate_mesh first for a full diagnosis.
MeshAdjacency build_adjacency(const Mesh& mesh);

// Structural problems, one message per finding; empty means the mesh is an
// orientable edge-manifold with well-formed indices.
std::vector<std::string> validate_mesh(const Mesh& mesh);

struct BoundingBox {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();
    Eigen::Vector3d extent() const { return max - min; }
    double diagonal() const { return extent().norm(); }
};

BoundingBox bounding_box(const Mesh& mesh);

}  // namespace polarmesh
