#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "polarmesh/cost.hpp"

namespace polarmesh {

// Packed parameter vector: [vertex positions | albedo | per-view lighting],
// with inactive blocks omitted. Lighting packs 9 basis weights then 3 color
// scales per view.
struct ParameterLayout {
    int vertex_count = 0;
    int view_count = 0;
    bool geometry = true;
    bool albedo = true;
    bool illumination = true;

    int albedo_offset() const { return geometry ? 3 * vertex_count : 0; }
    int illumination_offset() const {
        return albedo_offset() + (albedo ? 3 * vertex_count : 0);
    }
    int size() const { return illumination_offset() + (illumination ? 12 * view_count : 0); }
    // First packed index of a block, or -1 when the block is inactive.
    int vertex_param(int i) const { return geometry ? 3 * i : -1; }
    int albedo_param(int i) const { return albedo ? albedo_offset() + 3 * i : -1; }
    int illum_param(int view) const {
        return illumination ? illumination_offset() + 12 * view : -1;
    }
};

Eigen::VectorXd pack_parameters(const Mesh& mesh, const std::vector<Illumination>& illums,
                                const ParameterLayout& layout);
void apply_parameters(const Eigen::VectorXd& x, const ParameterLayout& layout, Mesh* mesh,
                      std::vector<Illumination>* illums);
// Clamps albedo and color scales into their configured ranges in place.
void project_to_bounds(Eigen::VectorXd* x, const ParameterLayout& layout,
                       const RefinementConfig& config);

struct ProblemState {
    Mesh mesh;
    std::vector<Illumination> illuminations;
    int stage_index = 0;
    std::vector<double> cost_history;  // accepted costs, stages concatenated
};

// Per-view image data for one refinement run. aop and aop_mask may be empty
// (or hold empty images) for views without polarization data.
struct RefineInputs {
    std::vector<Camera> cameras;
    std::vector<Image> rgb;
    std::vector<Image> aop;
    std::vector<Image> aop_mask;
};

// Everything frozen for the duration of one stage: visibility sets and the
// observation list derived from them, smoothness pairs and weights, row
// layout, and the stage weights themselves. The mesh may move; its topology
// may not. Observed image values are NOT frozen: photometric rows resample
// the RGB image bilinearly and polarimetric rows resample the AoP image at
// each vertex's current projection, so vertex motion is driven toward
// multi-view photometric consistency. The stage-start samples stored in each
// Observation seed initialization and smoothness weights only.
struct StageProblem {
    const std::vector<Camera>* cameras = nullptr;
    const std::vector<Image>* rgb = nullptr;       // live photometric lookups
    const std::vector<Image>* aop = nullptr;       // live polarimetric lookups
    const std::vector<Image>* aop_mask = nullptr;  // validity for live AoP
    MeshAdjacency adjacency;
    std::vector<Observation> observations;
    std::vector<int> polarimetric_slot;  // per observation; -1 without valid AoP
    int polarimetric_rows = 0;
    std::vector<int> smooth_faces;  // faces with at least one edge neighbor
    std::vector<std::pair<int, int>> psm_pairs;
    std::vector<double> psm_weights;
    Stage stage;
    double k = 0.5;
    ParameterLayout layout;

    int photometric_base() const { return 0; }
    int polarimetric_base() const { return 3 * static_cast<int>(observations.size()); }
    int geometric_base() const { return polarimetric_base() + polarimetric_rows; }
    int pair_base() const { return geometric_base() + static_cast<int>(smooth_faces.size()); }
    int rows() const { return pair_base() + 3 * static_cast<int>(psm_pairs.size()); }
};

StageProblem build_stage_problem(const Mesh& mesh, const RefineInputs& inputs,
                                 const RefinementConfig& config, int stage_index,
                                 const ParameterLayout& layout);

struct Evaluation {
    Eigen::VectorXd residuals;  // scaled so squaredNorm() is the stage cost
    Eigen::SparseMatrix<double> jacobian;
    CostBreakdown breakdown;          // unweighted term sums
    std::vector<char> near_singular;  // rows unusable for derivative checks
    double cost() const { return residuals.squaredNorm(); }
};

// Residuals (and optionally the sparse Jacobian) at the current state.
// Throws std::runtime_error naming the offending block on non-finite values.
Evaluation evaluate(const StageProblem& problem, const Mesh& mesh,
                    const std::vector<Illumination>& illums, bool with_jacobian);

struct StageLog {
    int stage_index = 0;
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    CostBreakdown breakdown;  // at the accepted final state
    bool converged = false;
    bool diverged = false;  // damping overflow; best state so far returned
};

struct RefineResult {
    ProblemState state;
    std::vector<StageLog> stages;
    int subdivision_rounds = 0;
    bool subdivision_budget_met = true;
    std::vector<std::string> diagnostics;
};

// Called after every accepted solver step: stage index, accepted steps so
// far in the stage, cost after the step, and the damping value that
// produced it.
using ProgressFn = std::function<void(int stage, int iteration, double cost, double lambda)>;

// Full staged refinement. Albedo is initialized from the observations when
// the mesh carries none; lighting likewise when initial_illuminations is
// empty. Visibility and the observation list are recomputed at stage
// boundaries and their structure frozen within each stage, while observed
// image values are resampled at current projections every evaluation;
// accepted steps never increase the stage cost.
RefineResult refine(const Mesh& initial_mesh, const RefineInputs& inputs,
                    const RefinementConfig& config,
                    const std::vector<Illumination>& initial_illuminations = {},
                    const ProgressFn& progress = {});

// Neutral initial lighting: per-view mean observed intensity as the constant
// basis weight, directional weights zero, unit color scales.
std::vector<Illumination> init_illuminations(const std::vector<Observation>& observations,
                                             int view_count);

// Per-vertex mean of observed color divided by the view's constant lighting
// weight, clamped to the albedo bounds; unobserved vertices get mid gray.
std::vector<Eigen::Vector3d> init_albedo(const Mesh& mesh,
                                         const std::vector<Observation>& observations,
                                         const std::vector<Illumination>& illums,
                                         double albedo_min, double albedo_max);

struct GradientCheckReport {
    int parameters_checked = 0;
    int rows_excluded = 0;
    double max_relative_error = 0.0;
    int worst_row = -1;
    int worst_parameter = -1;
};

// Central finite differences against the analytic Jacobian on randomly
// sampled parameters; rows flagged near-singular at the expansion point are
// excluded.
GradientCheckReport check_gradients(const StageProblem& problem, const Mesh& mesh,
                                    const std::vector<Illumination>& illums, int samples,
                                    uint64_t seed);

// Machine-readable TSV: per stage, one row per cost term plus totals and
// iteration counts.
void write_cost_log(const RefineResult& result, const std::string& path);

}  // namespace polarmesh
