#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polarmesh/camera.hpp"
#include "polarmesh/image.hpp"
#include "polarmesh/mesh.hpp"
#include "polarmesh/shading.hpp"

namespace polarmesh {

// A complete ground-truth scene: shaded mesh, calibrated cameras, and the
// per-view lighting the renderer uses.
struct SyntheticScene {
    Mesh gt_mesh;  // carries ground-truth albedo
    std::vector<Camera> cameras;
    std::vector<Illumination> illuminations;
    uint64_t seed = 0;
};

struct SceneOptions {
    int view_count = 14;   // ring cameras plus two polar views
    int image_size = 256;  // square images
    uint64_t seed = 0;
    // Camera distance as a multiple of the largest vertex radius about the
    // mesh center, and focal length as a multiple of the image size.
    double distance_scale = 3.0;
    double focal_scale = 1.2;
};

// Icosahedron subdivided `subdivisions` times with vertices projected onto a
// sphere. Vertex counts: 12, 42, 162, 642, ...
Mesh make_icosphere(int subdivisions, double radius = 1.0);

// Cameras surrounding the mesh: a horizontal ring with alternating elevation
// plus top and bottom views when there is room for them.
std::vector<Camera> surround_cameras(const Mesh& mesh, const SceneOptions& options);

// One shared lighting configuration: ambient base plus a directional
// component and a mild second-order term, scaled so shading stays in (0, 1).
Illumination default_illumination();

// Smooth low-frequency per-vertex colors in [0.1, 0.9].
std::vector<Eigen::Vector3d> procedural_albedo(const Mesh& mesh);

// Assembles the scene around a ground-truth mesh (albedo generated when the
// mesh carries none) and verifies every vertex is visible in at least two
// cameras.
SyntheticScene make_scene(const Mesh& gt_mesh, const SceneOptions& options);

// Rasterizes the scene per view with depth buffering; pixel colors follow the
// same shading model the optimizer uses, on interpolated normals and albedo.
// Background pixels are zero.
std::vector<Image> render_rgb_views(const SyntheticScene& scene);

// Per-view polarization angles from the true surface azimuths, wrapped into
// [0, pi). Masks are 1 on foreground pixels with a well-defined azimuth.
void render_aop_views(const SyntheticScene& scene, std::vector<Image>* aop,
                      std::vector<Image>* masks);

// Independently per valid pixel: with probability ambiguity_fraction add
// pi/2, then add Gaussian angle noise, then wrap back into [0, pi).
Image corrupt_aop(const Image& aop, const Image& mask, double ambiguity_fraction,
                  double sigma_rad, uint64_t seed);

// Displaces vertices along their normals by smoothed Gaussian noise with RMS
// displacement equal to amplitude x bounding-box diagonal. Self-intersections
// are not checked.
Mesh perturb_mesh(const Mesh& gt_mesh, double amplitude, uint64_t seed);

// Standard per-view file name, e.g. ("rgb", 3, ".ppm") -> "rgb_003.ppm".
std::string view_filename(const std::string& prefix, int view_id, const std::string& ext);

// Writes the standard scene layout under `dir`: cameras.txt, illumination.txt,
// gt_mesh.ply, init_mesh.ply, and per view rgb_###.ppm, aop_###.pfm,
// mask_###.pgm named by view id.
void write_scene_files(const std::string& dir, const SyntheticScene& scene,
                       const std::vector<Image>& rgb, const std::vector<Image>& aop,
                       const std::vector<Image>& masks, const Mesh& init_mesh);

}  // namespace polarmesh
