#include "polarmesh/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "polarmesh/parallel.hpp"
#include "polarmesh/mesh_io.hpp"
#include "polarmesh/polarization.hpp"
#include "polarmesh/rng.hpp"
#include "polarmesh/visibility.hpp"

namespace polarmesh {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

Mesh make_icosphere(int subdivisions, double radius) {
    if (subdivisions < 0) throw std::invalid_argument("subdivision count must be >= 0");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh mesh;
    mesh.vertices = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    mesh.faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };
    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        auto edge_vertex = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            int id = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> faces;
        faces.reserve(mesh.faces.size() * 4);
        for (const auto& f : mesh.faces) {
            int ab = edge_vertex(f[0], f[1]);
            int bc = edge_vertex(f[1], f[2]);
            int ca = edge_vertex(f[2], f[0]);
            faces.push_back({f[0], ab, ca});
            faces.push_back({f[1], bc, ab});
            faces.push_back({f[2], ca, bc});
            faces.push_back({ab, bc, ca});
        }
        mesh.faces = std::move(faces);
    }
    for (auto& v : mesh.vertices) v = radius * v.normalized();
    return mesh;
}

std::vector<Camera> surround_cameras(const Mesh& mesh, const SceneOptions& options) {
    if (options.view_count < 1) throw std::invalid_argument("need at least one view");
    if (options.image_size < 8) throw std::invalid_argument("image size too small");
    const BoundingBox box = bounding_box(mesh);
    const Eigen::Vector3d center = 0.5 * (box.min + box.max);
    double radius = 0.0;
    for (const auto& v : mesh.vertices)
        radius = std::max(radius, (v - center).norm());
    if (radius <= 0.0) throw std::invalid_argument("mesh has no spatial extent");
    const double distance = options.distance_scale * radius;
    const double focal = options.focal_scale * options.image_size;
    const double principal = 0.5 * (options.image_size - 1);

    const int polar = options.view_count >= 8 ? 2 : 0;
    const int ring = options.view_count - polar;
    const double elevation = 20.0 * kPi / 180.0;

    std::vector<Camera> cameras;
    cameras.reserve(options.view_count);
    for (int i = 0; i < ring; ++i) {
        const double azimuth = 2.0 * kPi * i / ring;
        const double tilt = (i % 2 == 0) ? elevation : -elevation;
        Eigen::Vector3d eye =
            center + distance * Eigen::Vector3d(std::cos(azimuth) * std::cos(tilt),
                                                std::sin(azimuth) * std::cos(tilt),
                                                std::sin(tilt));
        Camera cam = Camera::look_at(eye, center, Eigen::Vector3d(0, 0, 1), focal, focal,
                                     principal, principal, options.image_size,
                                     options.image_size);
        cam.view_id = i;
        cameras.push_back(cam);
    }
    for (int p = 0; p < polar; ++p) {
        Eigen::Vector3d eye = center + distance * Eigen::Vector3d(0, 0, p == 0 ? 1 : -1);
        Camera cam = Camera::look_at(eye, center, Eigen::Vector3d(0, 1, 0), focal, focal,
                                     principal, principal, options.image_size,
                                     options.image_size);
        cam.view_id = ring + p;
        cameras.push_back(cam);
    }
    return cameras;
}

Illumination default_illumination() {
    Illumination ill;
    const Eigen::Vector3d dir = Eigen::Vector3d(0.5, 0.3, 0.8).normalized();
    const double directional = 0.4;
    ill.sh.setZero();
    ill.sh[0] = 0.55;
    ill.sh[1] = directional * dir.y();
    ill.sh[2] = directional * dir.z();
    ill.sh[3] = directional * dir.x();
    ill.sh[6] = 0.05;
    ill.color = Eigen::Vector3d(1.0, 0.97, 0.94);
    return ill;
}

std::vector<Eigen::Vector3d> procedural_albedo(const Mesh& mesh) {
    const BoundingBox box = bounding_box(mesh);
    const double scale = box.diagonal() > 0 ? 2.0 / box.diagonal() : 1.0;
    const Eigen::Vector3d center = 0.5 * (box.min + box.max);
    std::vector<Eigen::Vector3d> albedo(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Eigen::Vector3d p = scale * (mesh.vertices[i] - center);
        Eigen::Vector3d a(
            0.5 + 0.35 * std::sin(2.1 * p.x() + 0.4) * std::cos(1.7 * p.y()),
            0.5 + 0.35 * std::sin(1.3 * p.y() + 1.1) * std::cos(1.9 * p.z()),
            0.5 + 0.35 * std::sin(1.7 * p.z() + 2.0) * std::cos(1.3 * p.x()));
        albedo[i] = a.cwiseMax(0.1).cwiseMin(0.9);
    }
    return albedo;
}

SyntheticScene make_scene(const Mesh& gt_mesh, const SceneOptions& options) {
    SyntheticScene scene;
    scene.gt_mesh = gt_mesh;
    if (!scene.gt_mesh.has_albedo())
        scene.gt_mesh.albedo = procedural_albedo(scene.gt_mesh);
    scene.cameras = surround_cameras(scene.gt_mesh, options);
    scene.illuminations.assign(scene.cameras.size(), default_illumination());
    scene.seed = options.seed;

    const auto visibility = compute_visibility(scene.gt_mesh, scene.cameras);
    for (size_t v = 0; v < visibility.size(); ++v)
        if (visibility[v].size() < 2)
            throw std::runtime_error("vertex " + std::to_string(v) +
                                     " is visible in fewer than two cameras; adjust the "
                                     "camera placement or mesh");
    return scene;
}

namespace {

// Per-pixel rasterization record: owning face and perspective-corrected
// barycentric weights.
struct FragmentBuffer {
    int width = 0, height = 0;
    std::vector<int> face;        // -1 where background
    std::vector<double> weights;  // 3 per pixel
    std::vector<double> depth;
};

FragmentBuffer rasterize_fragments(const Mesh& mesh, const Camera& camera) {
    FragmentBuffer buf;
    buf.width = camera.width;
    buf.height = camera.height;
    buf.face.assign(static_cast<size_t>(camera.width) * camera.height, -1);
    buf.weights.assign(buf.face.size() * 3, 0.0);
    buf.depth.assign(buf.face.size(), std::numeric_limits<double>::infinity());
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
                double iz = l0 * iza + l1 * izb + l2 * izc;
                double z = 1.0 / iz;
                size_t idx = static_cast<size_t>(y) * camera.width + x;
                if (z >= buf.depth[idx]) continue;
                buf.depth[idx] = z;
                buf.face[idx] = static_cast<int>(f);
                // Perspective-correct interpolation weights.
                buf.weights[3 * idx + 0] = l0 * iza / iz;
                buf.weights[3 * idx + 1] = l1 * izb / iz;
                buf.weights[3 * idx + 2] = l2 * izc / iz;
            }
        }
    }
    return buf;
}

Eigen::Vector3d interpolate_normal(const Mesh& mesh,
                                   const std::vector<Eigen::Vector3d>& normals,
                                   const FragmentBuffer& buf, size_t idx) {
    const auto& face = mesh.faces[buf.face[idx]];
    Eigen::Vector3d n = buf.weights[3 * idx + 0] * normals[face[0]] +
                        buf.weights[3 * idx + 1] * normals[face[1]] +
                        buf.weights[3 * idx + 2] * normals[face[2]];
    double len = n.norm();
    if (len < 1e-12) {
        Eigen::Vector3d fallback = face_area_normal(mesh, buf.face[idx]);
        double flen = fallback.norm();
        return flen > 0 ? (fallback / flen).eval() : Eigen::Vector3d(0, 0, 1);
    }
    return n / len;
}

}  // namespace

std::vector<Image> render_rgb_views(const SyntheticScene& scene) {
    const Mesh& mesh = scene.gt_mesh;
    if (!mesh.has_albedo()) throw std::invalid_argument("scene mesh has no albedo");
    const std::vector<Eigen::Vector3d> normals = vertex_normals(mesh);
    std::vector<Image> images(scene.cameras.size());
    parallel_for(scene.cameras.size(), [&](size_t begin, size_t end) {
        for (size_t c = begin; c < end; ++c) {
            const Camera& cam = scene.cameras[c];
            const Illumination& ill = scene.illuminations[c];
            Image img(cam.width, cam.height, 3, 0.0);
            FragmentBuffer buf = rasterize_fragments(mesh, cam);
            for (size_t idx = 0; idx < buf.face.size(); ++idx) {
                if (buf.face[idx] < 0) continue;
                const auto& face = mesh.faces[buf.face[idx]];
                Eigen::Vector3d n = interpolate_normal(mesh, normals, buf, idx);
                Eigen::Vector3d albedo = buf.weights[3 * idx + 0] * mesh.albedo[face[0]] +
                                         buf.weights[3 * idx + 1] * mesh.albedo[face[1]] +
                                         buf.weights[3 * idx + 2] * mesh.albedo[face[2]];
                Eigen::Vector3d rgb = render_vertex(albedo, n, ill);
                int x = static_cast<int>(idx) % cam.width;
                int y = static_cast<int>(idx) / cam.width;
                for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = rgb[ch];
            }
            images[c] = std::move(img);
        }
    });
    return images;
}

void render_aop_views(const SyntheticScene& scene, std::vector<Image>* aop,
                      std::vector<Image>* masks) {
    const Mesh& mesh = scene.gt_mesh;
    const std::vector<Eigen::Vector3d> normals = vertex_normals(mesh);
    aop->assign(scene.cameras.size(), Image());
    masks->assign(scene.cameras.size(), Image());
    parallel_for(scene.cameras.size(), [&](size_t begin, size_t end) {
        for (size_t c = begin; c < end; ++c) {
            const Camera& cam = scene.cameras[c];
            Image angle(cam.width, cam.height, 1, 0.0);
            Image mask(cam.width, cam.height, 1, 0.0);
            FragmentBuffer buf = rasterize_fragments(mesh, cam);
            for (size_t idx = 0; idx < buf.face.size(); ++idx) {
                if (buf.face[idx] < 0) continue;
                Eigen::Vector3d n = interpolate_normal(mesh, normals, buf, idx);
                auto azimuth = cam.projected_azimuth(n);
                if (!azimuth) continue;  // view-axis-parallel normal
                int x = static_cast<int>(idx) % cam.width;
                int y = static_cast<int>(idx) / cam.width;
                angle.at(x, y, 0) = wrap_angle_pi(*azimuth);
                mask.at(x, y, 0) = 1.0;
            }
            (*aop)[c] = std::move(angle);
            (*masks)[c] = std::move(mask);
        }
    });
}

Image corrupt_aop(const Image& aop, const Image& mask, double ambiguity_fraction,
                  double sigma_rad, uint64_t seed) {
    if (aop.width != mask.width || aop.height != mask.height)
        throw std::invalid_argument("angle image and mask sizes differ");
    if (ambiguity_fraction < 0.0 || ambiguity_fraction > 1.0)
        throw std::invalid_argument("ambiguity fraction must be in [0, 1]");
    if (sigma_rad < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
    Image out = aop;
    Rng rng(seed);
    for (int y = 0; y < aop.height; ++y) {
        for (int x = 0; x < aop.width; ++x) {
            if (mask.at(x, y, 0) <= 0.5) continue;
            double angle = out.at(x, y, 0);
            if (rng.bernoulli(ambiguity_fraction)) angle += kPi / 2.0;
            if (sigma_rad > 0.0) angle += rng.normal(0.0, sigma_rad);
            out.at(x, y, 0) = wrap_angle_pi(angle);
        }
    }
    return out;
}

Mesh perturb_mesh(const Mesh& gt_mesh, double amplitude, uint64_t seed) {
    if (amplitude < 0.0) throw std::invalid_argument("amplitude must be >= 0");
    Mesh mesh = gt_mesh;
    if (amplitude == 0.0 || mesh.vertex_count() == 0) return mesh;

    const std::vector<Eigen::Vector3d> normals = vertex_normals(mesh);
    const MeshAdjacency adjacency = build_adjacency(mesh);
    const int nv = mesh.vertex_count();

    std::vector<double> noise(nv);
    Rng rng(seed);
    for (double& n : noise) n = rng.normal();
    // A few averaging passes shape the noise into smooth low-frequency bumps.
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<double> smoothed(nv);
        for (int v = 0; v < nv; ++v) {
            double sum = noise[v];
            for (int u : adjacency.vertex_ring[v]) sum += noise[u];
            smoothed[v] = sum / (1.0 + adjacency.vertex_ring[v].size());
        }
        noise = std::move(smoothed);
    }

    double rms = 0.0;
    for (double n : noise) rms += n * n;
    rms = std::sqrt(rms / nv);
    if (rms <= 0.0) return mesh;
    const double target = amplitude * bounding_box(mesh).diagonal();
    const double factor = target / rms;
    for (int v = 0; v < nv; ++v) mesh.vertices[v] += factor * noise[v] * normals[v];
    return mesh;
}

std::string view_filename(const std::string& prefix, int view_id, const std::string& ext) {
    std::ostringstream name;
    name << prefix << '_' << std::setw(3) << std::setfill('0') << view_id << ext;
    return name.str();
}

void write_scene_files(const std::string& dir, const SyntheticScene& scene,
                       const std::vector<Image>& rgb, const std::vector<Image>& aop,
                       const std::vector<Image>& masks, const Mesh& init_mesh) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path base(dir);
    save_cameras(scene.cameras, (base / "cameras.txt").string());
    save_illuminations(scene.illuminations, (base / "illumination.txt").string());
    save_ply(scene.gt_mesh, (base / "gt_mesh.ply").string());
    save_ply(init_mesh, (base / "init_mesh.ply").string());
    for (size_t c = 0; c < scene.cameras.size(); ++c) {
        const int id = scene.cameras[c].view_id;
        if (c < rgb.size())
            save_ppm((base / view_filename("rgb", id, ".ppm")).string(), rgb[c]);
        if (c < aop.size())
            save_pfm((base / view_filename("aop", id, ".pfm")).string(), aop[c]);
        if (c < masks.size())
            save_pgm((base / view_filename("mask", id, ".pgm")).string(), masks[c], 8);
    }
}

}  // namespace polarmesh
