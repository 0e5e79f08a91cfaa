#include "polarmesh/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "polarmesh/parallel.hpp"
#include "polarmesh/rng.hpp"

namespace polarmesh {

namespace {

constexpr int kLeafSize = 16;

}  // namespace

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("cannot index an empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[i]);
        hi = hi.cwiseMax(points_[i]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    // Keep points and their original indices in the same order.
    std::vector<int> perm(end - begin);
    std::iota(perm.begin(), perm.end(), begin);
    std::nth_element(perm.begin(), perm.begin() + (mid - begin), perm.end(),
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    std::vector<Eigen::Vector3d> pts(end - begin);
    std::vector<int> ord(end - begin);
    for (int i = 0; i < end - begin; ++i) {
        pts[i] = points_[perm[i]];
        ord[i] = order_[perm[i]];
    }
    std::copy(pts.begin(), pts.end(), points_.begin() + begin);
    std::copy(ord.begin(), ord.end(), order_.begin() + begin);

    const double split = points_[mid][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void KdTree::search(int node, const Eigen::Vector3d& query, int* best_index,
                    double* best_sq) const {
    const Node& n = nodes_[node];
    if (n.axis < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            const double d = (points_[i] - query).squaredNorm();
            if (d < *best_sq) {
                *best_sq = d;
                *best_index = order_[i];
            }
        }
        return;
    }
    const double delta = query[n.axis] - n.split;
    const int near = delta < 0 ? n.left : n.right;
    const int far = delta < 0 ? n.right : n.left;
    search(near, query, best_index, best_sq);
    if (delta * delta < *best_sq) search(far, query, best_index, best_sq);
}

std::pair<int, double> KdTree::nearest(const Eigen::Vector3d& query) const {
    int best_index = -1;
    double best_sq = std::numeric_limits<double>::infinity();
    search(root_, query, &best_index, &best_sq);
    return {best_index, best_sq};
}

std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& queries,
                                      const KdTree& index) {
    std::vector<double> distances(queries.size());
    parallel_for(queries.size(), [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i)
            distances[i] = std::sqrt(index.nearest(queries[i]).second);
    });
    return distances;
}

double accuracy(const std::vector<Eigen::Vector3d>& estimated,
                const std::vector<Eigen::Vector3d>& ground_truth) {
    if (estimated.empty() || ground_truth.empty())
        throw std::invalid_argument("point sets must be non-empty");
    const KdTree index(ground_truth);
    const std::vector<double> d = nearest_distances(estimated, index);
    double sum = 0.0;
    for (double v : d) sum += v;
    return sum / d.size();
}

double completeness(const std::vector<Eigen::Vector3d>& estimated,
                    const std::vector<Eigen::Vector3d>& ground_truth) {
    return accuracy(ground_truth, estimated);
}

DistanceStats DistanceStats::from(std::vector<double> distances) {
    DistanceStats stats;
    stats.count = distances.size();
    if (distances.empty()) return stats;
    double sum = 0.0;
    for (double v : distances) sum += v;
    stats.mean = sum / distances.size();
    std::sort(distances.begin(), distances.end());
    const size_t n = distances.size();
    stats.median = n % 2 == 1 ? distances[n / 2]
                              : 0.5 * (distances[n / 2 - 1] + distances[n / 2]);
    stats.p90 = distances[static_cast<size_t>(0.9 * (n - 1))];
    return stats;
}

std::vector<Eigen::Vector3d> sample_surface(const Mesh& mesh, int count, uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("sample count must be positive");
    if (mesh.face_count() == 0) throw std::invalid_argument("mesh has no faces");
    std::vector<double> cumulative(mesh.faces.size());
    double total = 0.0;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        total += 0.5 * face_area_normal(mesh, static_cast<int>(f)).norm();
        cumulative[f] = total;
    }
    if (total <= 0.0) throw std::invalid_argument("mesh has zero surface area");

    std::vector<Eigen::Vector3d> samples(count);
    Rng rng(seed);
    for (int s = 0; s < count; ++s) {
        const double u = rng.uniform() * total;
        const size_t f = std::min<size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin(),
            mesh.faces.size() - 1);
        const auto& face = mesh.faces[f];
        // Square-root warp gives an area-uniform barycentric sample.
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        samples[s] = (1.0 - r1) * mesh.vertices[face[0]] +
                     r1 * (1.0 - r2) * mesh.vertices[face[1]] +
                     r1 * r2 * mesh.vertices[face[2]];
    }
    return samples;
}

EvalReport evaluate_mesh(const Mesh& estimated, const Mesh& ground_truth, int samples,
                         uint64_t seed) {
    if (estimated.vertex_count() == 0)
        throw std::invalid_argument("estimated mesh has no vertices");
    EvalReport report;
    const std::vector<Eigen::Vector3d> gt_points = sample_surface(ground_truth, samples, seed);
    const KdTree gt_index(gt_points);
    const KdTree est_index(estimated.vertices);
    report.accuracy = DistanceStats::from(nearest_distances(estimated.vertices, gt_index));
    report.completeness = DistanceStats::from(nearest_distances(gt_points, est_index));
    report.diagonal = bounding_box(ground_truth).diagonal();
    report.estimated_count = estimated.vertices.size();
    report.ground_truth_count = gt_points.size();
    return report;
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << std::setprecision(17);
    out << "metric\tmean\tmedian\tp90\tcount\n";
    auto row = [&](const char* name, const DistanceStats& s, double scale) {
        out << name << '\t' << s.mean * scale << '\t' << s.median * scale << '\t'
            << s.p90 * scale << '\t' << s.count << '\n';
    };
    row("accuracy", report.accuracy, 1.0);
    row("completeness", report.completeness, 1.0);
    const double inv = report.diagonal > 0 ? 1.0 / report.diagonal : 0.0;
    row("accuracy_norm", report.accuracy, inv);
    row("completeness_norm", report.completeness, inv);
    if (!out) throw std::runtime_error("failed writing report: " + path);
}

}  // namespace polarmesh
