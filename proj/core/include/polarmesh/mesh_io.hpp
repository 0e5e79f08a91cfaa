#pragma once

#include <string>

#include "polarmesh/mesh.hpp"

namespace polarmesh {

// Dispatches on the file extension (.ply or .obj).
Mesh load_mesh(const std::string& path);

// PLY, ascii or binary_little_endian. Vertex positions may be float or
// double; uchar red/green/blue vertex properties become per-vertex albedo
// in [0, 1]; unrecognized properties are skipped. Polygonal faces are
// fan-triangulated.
Mesh load_ply(const std::string& path);

// Wavefront OBJ subset: v (with optional vertex-color extension) and f
// records; polygons are fan-triangulated, negative indices resolved.
Mesh load_obj(const std::string& path);

// Writes double positions plus uchar red/green/blue when albedo is present.
// Binary output is byte-reproducible for identical input.
void save_ply(const Mesh& mesh, const std::string& path, bool binary = true);

}  // namespace polarmesh
