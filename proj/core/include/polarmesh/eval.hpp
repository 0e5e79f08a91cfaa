#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "polarmesh/mesh.hpp"

namespace polarmesh {

// Exact nearest-neighbor index over a fixed point set. Queries always return
// the true nearest point (no approximation).
class KdTree {
public:
    explicit KdTree(std::vector<Eigen::Vector3d> points);

    // Index into the original point order and squared distance.
    std::pair<int, double> nearest(const Eigen::Vector3d& query) const;

    size_t size() const { return points_.size(); }

private:
    struct Node {
        int axis = -1;  // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf point range
    };

    int build(int begin, int end);
    void search(int node, const Eigen::Vector3d& query, int* best_index,
                double* best_sq) const;

    std::vector<Eigen::Vector3d> points_;  // reordered during construction
    std::vector<int> order_;               // reordered index -> original index
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Distance from every query point to its nearest point in the index, in
// query order.
std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& queries,
                                      const KdTree& index);

// Mean over estimated points of the distance to the nearest ground-truth
// point, and its symmetric counterpart. Both throw when a set is empty.
double accuracy(const std::vector<Eigen::Vector3d>& estimated,
                const std::vector<Eigen::Vector3d>& ground_truth);
double completeness(const std::vector<Eigen::Vector3d>& estimated,
                    const std::vector<Eigen::Vector3d>& ground_truth);

struct DistanceStats {
    double mean = 0.0;
    double median = 0.0;  // average of the central order statistics
    double p90 = 0.0;
    size_t count = 0;

    static DistanceStats from(std::vector<double> distances);
};

// Area-uniform random points on the mesh surface.
std::vector<Eigen::Vector3d> sample_surface(const Mesh& mesh, int count, uint64_t seed);

struct EvalReport {
    DistanceStats accuracy;      // estimated vertices -> ground-truth samples
    DistanceStats completeness;  // ground-truth samples -> estimated vertices
    double diagonal = 0.0;       // ground-truth bounding-box diagonal
    size_t estimated_count = 0;
    size_t ground_truth_count = 0;
};

// Compares a mesh against a ground-truth mesh: estimated points are the mesh
// vertices, ground truth is an area-uniform surface sampling.
EvalReport evaluate_mesh(const Mesh& estimated, const Mesh& ground_truth, int samples,
                         uint64_t seed);

// TSV with columns metric/mean/median/p90/count; raw rows plus rows
// normalized by the ground-truth diagonal.
void write_report(const EvalReport& report, const std::string& path);

}  // namespace polarmesh
