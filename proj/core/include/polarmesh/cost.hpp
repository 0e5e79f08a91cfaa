#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "polarmesh/camera.hpp"
#include "polarmesh/image.hpp"
#include "polarmesh/mesh.hpp"
#include "polarmesh/shading.hpp"

namespace polarmesh {

// One setting of the coarse-to-fine weight plan: data-term weights and the
// geometric-smoothness exponent.
struct Stage {
    double tau1 = 0.05;
    double tau2 = 1.0;
    double tau3 = 1.0;
    double q = 2.2;
};

struct SolverConfig {
    int max_iterations = 50;
    double function_tolerance = 1e-6;  // relative per-step cost change
    double initial_lambda = 1e-4;      // Levenberg-Marquardt damping
};

// Full refinement configuration; defaults follow the three-stage plan with
// the azimuth constraint strengthened stage by stage.
struct RefinementConfig {
    std::vector<Stage> schedule = {{0.05, 1.0, 1.0, 2.2},
                                   {0.1, 1.0, 1.0, 2.8},
                                   {0.3, 1.0, 1.0, 3.4}};
    double k = 0.5;  // concavity of the azimuth penalty
    SolverConfig solver;
    double albedo_min = 0.0, albedo_max = 1.0;
    double color_scale_min = 0.0, color_scale_max = 10.0;
    double delta_chroma = 0.05;     // albedo-smoothness chromaticity scale
    double delta_intensity = 0.2;   // albedo-smoothness intensity scale
    double pixel_budget = 16.0;     // subdivision target, pixels per face
    int max_subdivision_rounds = 4;
    bool subdivide = true;
    bool optimize_geometry = true;
    bool optimize_albedo = true;
    bool optimize_illumination = true;

    // Flat "key = value" text; stage-dependent keys (tau1, tau2, tau3, q)
    // take space-separated lists, a single value broadcasts to all stages.
    static RefinementConfig parse(const std::string& text);
    static RefinementConfig load(const std::string& path);
    std::string serialize() const;
    void save(const std::string& path) const;
    void validate() const;  // throws std::invalid_argument on bad values
};

// Per-(vertex, camera) image sample taken where the vertex projected when
// the observation list was built. The solver resamples observed values at
// current projections during optimization; these stage-start samples seed
// albedo/lighting initialization, smoothness weights, and the fallback for
// failed projections.
struct Observation {
    int vertex = -1;
    int camera = -1;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double aop = 0.0;        // radians in [0, pi)
    bool aop_valid = false;  // masked-out or missing polarization data
    double weight_norm = 1.0;  // 1 / (number of cameras seeing the vertex)
};

// Samples every (vertex, visible camera) pair: RGB bilinearly, the angle of
// polarization at the nearest pixel (a circular quantity must not be
// blended across the wrap). A sample is aop-valid when the mask image for
// the view is missing or > 0.5 at that pixel. Results are sorted by
// (vertex, camera).
std::vector<Observation> build_observations(const Mesh& mesh,
                                            const std::vector<Camera>& cameras,
                                            const std::vector<Image>& rgb_images,
                                            const std::vector<Image>& aop_images,
                                            const std::vector<Image>& aop_masks,
                                            const std::vector<std::vector<int>>& visibility);

// Circular distance from azimuth alpha to the nearest of the four azimuth
// candidates of an AoP measurement phi: {phi - pi/2, phi, phi + pi/2,
// phi + pi}, all modulo 2*pi. Always in [0, pi/4].
double azimuth_distance(double alpha, double phi);

// Same, plus the derivative of the active branch with respect to alpha
// (+1 or -1; ties resolved toward the earliest candidate).
struct AzimuthDistance {
    double eta = 0.0;
    double deta_dalpha = 0.0;
    double branch_margin = 0.0;  // gap to the runner-up candidate distance
};
AzimuthDistance azimuth_distance_branch(double alpha, double phi);

// Concave azimuth penalty g(theta) = (e^{-k theta} - e^{-k}) / (1 - e^{-k})
// for theta = 1 - 4 eta / pi in [0, 1]; g(1) = 0, g(0) = 1.
double polarimetric_penalty(double theta, double k);
double polarimetric_penalty_derivative(double theta, double k);

// Residual blocks. Squared and summed, each reproduces its energy term.
Eigen::Vector3d photometric_residual(const Observation& obs, const Eigen::Vector3d& albedo,
                                     const Eigen::Vector3d& normal,
                                     const Illumination& illum);

// Zero when the sample has no valid AoP or the azimuth is undefined.
double polarimetric_residual(const Observation& obs, const Camera& camera,
                             const Eigen::Vector3d& normal, double k);

// Residual of one face against the plain average of its edge-neighbors'
// unit normals; nullopt when the face is degenerate or has no usable
// neighbor.
std::optional<double> geometric_smoothness_residual(const Mesh& mesh,
                                                    const MeshAdjacency& adjacency,
                                                    int face, double q);

Eigen::Vector3d photometric_smoothness_residual(const Eigen::Vector3d& albedo_i,
                                                const Eigen::Vector3d& albedo_j,
                                                double weight);

// Pair weight from mean observed colors: exp(-(d_chroma^2 / delta_c^2 +
// d_intensity^2 / delta_i^2)).
double photometric_smoothness_weight(const Eigen::Vector3d& mean_rgb_i,
                                     const Eigen::Vector3d& mean_rgb_j,
                                     double delta_chroma, double delta_intensity);

// Ordered adjacent-vertex pairs with weights frozen from the observations;
// pairs without a common visible camera default to full smoothing (w = 1).
void build_smoothness_pairs(const Mesh& mesh, const MeshAdjacency& adjacency,
                            const std::vector<Observation>& observations,
                            double delta_chroma, double delta_intensity,
                            std::vector<std::pair<int, int>>* pairs,
                            std::vector<double>* weights);

// Unweighted term sums plus bookkeeping counts.
struct CostBreakdown {
    double photometric = 0.0;
    double polarimetric = 0.0;
    double geometric_smoothness = 0.0;
    double photometric_smoothness = 0.0;
    size_t photometric_count = 0;
    size_t polarimetric_count = 0;
    size_t geometric_count = 0;
    size_t pair_count = 0;

    double total(const Stage& stage) const {
        return photometric + stage.tau1 * polarimetric + stage.tau2 * geometric_smoothness +
               stage.tau3 * photometric_smoothness;
    }
};

// Direct assembly of all four terms at the current state.
CostBreakdown total_cost(const Mesh& mesh, const std::vector<Camera>& cameras,
                         const std::vector<Illumination>& illums,
                         const std::vector<Observation>& observations,
                         const std::vector<std::pair<int, int>>& psm_pairs,
                         const std::vector<double>& psm_weights, const Stage& stage,
                         double k);

// Clamp bound for arccos arguments; keeps the arccos derivative finite.
inline constexpr double kArccosClamp = 1.0 - 1e-12;

}  // namespace polarmesh
