#include "polarmesh/cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "polarmesh/polarization.hpp"

namespace polarmesh {

namespace {
constexpr double kPi = std::numbers::pi;
}

AzimuthDistance azimuth_distance_branch(double alpha, double phi) {
    static constexpr double offsets[4] = {-kPi / 2, 0.0, kPi / 2, kPi};
    AzimuthDistance best;
    best.eta = std::numeric_limits<double>::infinity();
    double runner_up = std::numeric_limits<double>::infinity();
    for (double offset : offsets) {
        double d = wrap_angle_two_pi(alpha - (phi + offset));
        double dist = std::min(d, 2 * kPi - d);
        double deriv = d <= 2 * kPi - d ? 1.0 : -1.0;
        if (dist < best.eta) {
            runner_up = best.eta;
            best.eta = dist;
            best.deta_dalpha = deriv;
        } else if (dist < runner_up) {
            runner_up = dist;
        }
    }
    best.branch_margin = runner_up - best.eta;
    return best;
}

double azimuth_distance(double alpha, double phi) {
    return azimuth_distance_branch(alpha, phi).eta;
}

double polarimetric_penalty(double theta, double k) {
    if (k <= 0) throw std::invalid_argument("polarimetric penalty requires k > 0");
    return (std::exp(-k * theta) - std::exp(-k)) / (1.0 - std::exp(-k));
}

double polarimetric_penalty_derivative(double theta, double k) {
    if (k <= 0) throw std::invalid_argument("polarimetric penalty requires k > 0");
    return -k * std::exp(-k * theta) / (1.0 - std::exp(-k));
}

std::vector<Observation> build_observations(const Mesh& mesh,
                                            const std::vector<Camera>& cameras,
                                            const std::vector<Image>& rgb_images,
                                            const std::vector<Image>& aop_images,
                                            const std::vector<Image>& aop_masks,
                                            const std::vector<std::vector<int>>& visibility) {
    std::vector<Observation> observations;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const auto& cams = visibility[i];
        if (cams.empty()) continue;
        double weight_norm = 1.0 / static_cast<double>(cams.size());
        for (int c : cams) {
            auto proj = cameras[c].project(mesh.vertices[i]);
            if (!proj) continue;  // visibility guarantees this in practice
            Observation obs;
            obs.vertex = i;
            obs.camera = c;
            obs.weight_norm = weight_norm;
            const Image& rgb = rgb_images[c];
            if (rgb.channels != 3)
                throw std::runtime_error("observed image must have 3 channels");
            for (int ch = 0; ch < 3; ++ch)
                obs.rgb[ch] = sample_bilinear(rgb, proj->pixel.x(), proj->pixel.y(), ch);
            if (c < static_cast<int>(aop_images.size()) && !aop_images[c].empty()) {
                obs.aop = wrap_angle_pi(
                    sample_nearest(aop_images[c], proj->pixel.x(), proj->pixel.y(), 0));
                obs.aop_valid = true;
                if (c < static_cast<int>(aop_masks.size()) && !aop_masks[c].empty())
                    obs.aop_valid = sample_nearest(aop_masks[c], proj->pixel.x(),
                                                   proj->pixel.y(), 0) > 0.5;
            }
            observations.push_back(obs);
        }
    }
    return observations;
}

Eigen::Vector3d photometric_residual(const Observation& obs, const Eigen::Vector3d& albedo,
                                     const Eigen::Vector3d& normal,
                                     const Illumination& illum) {
    return std::sqrt(obs.weight_norm) * (obs.rgb - render_vertex(albedo, normal, illum));
}

double polarimetric_residual(const Observation& obs, const Camera& camera,
                             const Eigen::Vector3d& normal, double k) {
    if (!obs.aop_valid) return 0.0;
    std::optional<double> alpha = camera.projected_azimuth(normal);
    if (!alpha) return 0.0;
    double eta = azimuth_distance(*alpha, obs.aop);
    double theta = 1.0 - 4.0 * eta / kPi;
    return std::sqrt(obs.weight_norm) * polarimetric_penalty(theta, k);
}

std::optional<double> geometric_smoothness_residual(const Mesh& mesh,
                                                    const MeshAdjacency& adjacency,
                                                    int face, double q) {
    std::vector<char> degenerate;
    std::vector<Eigen::Vector3d> normals = face_unit_normals(mesh, &degenerate);
    if (degenerate[face]) return std::nullopt;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    int count = 0;
    for (int g : adjacency.face_neighbors[face]) {
        if (g < 0 || degenerate[g]) continue;
        mean += normals[g];
        ++count;
    }
    if (count == 0) return std::nullopt;
    mean /= count;
    double d = std::clamp(normals[face].dot(mean), -kArccosClamp, kArccosClamp);
    return std::pow(std::acos(d) / kPi, q / 2.0);
}

Eigen::Vector3d photometric_smoothness_residual(const Eigen::Vector3d& albedo_i,
                                                const Eigen::Vector3d& albedo_j,
                                                double weight) {
    return std::sqrt(weight) * (albedo_i - albedo_j);
}

double photometric_smoothness_weight(const Eigen::Vector3d& mean_rgb_i,
                                     const Eigen::Vector3d& mean_rgb_j,
                                     double delta_chroma, double delta_intensity) {
    auto chroma = [](const Eigen::Vector3d& rgb) {
        double sum = rgb.sum();
        if (sum < 1e-9) return Eigen::Vector3d::Constant(1.0 / 3.0).eval();
        return (rgb / sum).eval();
    };
    double d_chroma = (chroma(mean_rgb_i) - chroma(mean_rgb_j)).norm();
    double d_int = std::abs(mean_rgb_i.mean() - mean_rgb_j.mean());
    return std::exp(-(d_chroma * d_chroma / (delta_chroma * delta_chroma) +
                      d_int * d_int / (delta_intensity * delta_intensity)));
}

void build_smoothness_pairs(const Mesh& mesh, const MeshAdjacency& adjacency,
                            const std::vector<Observation>& observations,
                            double delta_chroma, double delta_intensity,
                            std::vector<std::pair<int, int>>* pairs,
                            std::vector<double>* weights) {
    const int nv = mesh.vertex_count();
    // Observation span per vertex (observations are sorted by vertex).
    std::vector<int> begin(nv + 1, 0);
    for (const Observation& obs : observations) ++begin[obs.vertex + 1];
    for (int i = 0; i < nv; ++i) begin[i + 1] += begin[i];

    pairs->clear();
    weights->clear();
    for (int i = 0; i < nv; ++i) {
        for (int j : adjacency.vertex_ring[i]) {
            // Mean colors over the cameras both endpoints see.
            Eigen::Vector3d sum_i = Eigen::Vector3d::Zero(), sum_j = Eigen::Vector3d::Zero();
            int common = 0;
            int a = begin[i], b = begin[j];
            while (a < begin[i + 1] && b < begin[j + 1]) {
                int ca = observations[a].camera, cb = observations[b].camera;
                if (ca == cb) {
                    sum_i += observations[a].rgb;
                    sum_j += observations[b].rgb;
                    ++common;
                    ++a;
                    ++b;
                } else if (ca < cb) {
                    ++a;
                } else {
                    ++b;
                }
            }
            double w = 1.0;
            if (common > 0)
                w = photometric_smoothness_weight(sum_i / common, sum_j / common,
                                                  delta_chroma, delta_intensity);
            pairs->emplace_back(i, j);
            weights->push_back(w);
        }
    }
}

CostBreakdown total_cost(const Mesh& mesh, const std::vector<Camera>& cameras,
                         const std::vector<Illumination>& illums,
                         const std::vector<Observation>& observations,
                         const std::vector<std::pair<int, int>>& psm_pairs,
                         const std::vector<double>& psm_weights, const Stage& stage,
                         double k) {
    if (!mesh.has_albedo()) throw std::runtime_error("total_cost requires per-vertex albedo");
    CostBreakdown sum;
    const std::vector<Eigen::Vector3d> normals = vertex_normals(mesh);
    for (const Observation& obs : observations) {
        Eigen::Vector3d pho = photometric_residual(obs, mesh.albedo[obs.vertex],
                                                   normals[obs.vertex], illums[obs.camera]);
        sum.photometric += pho.squaredNorm();
        ++sum.photometric_count;
        if (obs.aop_valid) {
            double pol =
                polarimetric_residual(obs, cameras[obs.camera], normals[obs.vertex], k);
            sum.polarimetric += pol * pol;
            ++sum.polarimetric_count;
        }
    }
    const MeshAdjacency adjacency = build_adjacency(mesh);
    for (int f = 0; f < mesh.face_count(); ++f) {
        auto gsm = geometric_smoothness_residual(mesh, adjacency, f, stage.q);
        if (!gsm) continue;
        sum.geometric_smoothness += *gsm * *gsm;
        ++sum.geometric_count;
    }
    for (size_t p = 0; p < psm_pairs.size(); ++p) {
        Eigen::Vector3d psm =
            photometric_smoothness_residual(mesh.albedo[psm_pairs[p].first],
                                            mesh.albedo[psm_pairs[p].second], psm_weights[p]);
        sum.photometric_smoothness += psm.squaredNorm();
        ++sum.pair_count;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Configuration text format.

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& value, const std::string& key) {
    std::istringstream ss(value);
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    if (out.empty() || !ss.eof())
        throw std::invalid_argument("configuration key '" + key + "' expects numbers");
    return out;
}

double parse_double(const std::string& value, const std::string& key) {
    auto list = parse_list(value, key);
    if (list.size() != 1)
        throw std::invalid_argument("configuration key '" + key + "' expects one number");
    return list[0];
}

int parse_int(const std::string& value, const std::string& key) {
    double v = parse_double(value, key);
    if (v != std::floor(v))
        throw std::invalid_argument("configuration key '" + key + "' expects an integer");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("configuration key '" + key + "' expects true or false");
}

void broadcast(std::vector<double>& list, size_t stages, const std::string& key) {
    if (list.size() == 1) list.assign(stages, list[0]);
    if (list.size() != stages)
        throw std::invalid_argument("configuration key '" + key + "' has " +
                                    std::to_string(list.size()) + " values for " +
                                    std::to_string(stages) + " stages");
}

}  // namespace

RefinementConfig RefinementConfig::parse(const std::string& text) {
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("configuration line " + std::to_string(line_no) +
                                        " is not 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (!entries.emplace(key, value).second)
            throw std::invalid_argument("duplicate configuration key '" + key + "'");
    }

    RefinementConfig cfg;
    auto take = [&](const char* key) -> std::optional<std::string> {
        auto it = entries.find(key);
        if (it == entries.end()) return std::nullopt;
        std::string v = it->second;
        entries.erase(it);
        return v;
    };

    size_t stages = cfg.schedule.size();
    if (auto v = take("stages")) {
        int n = parse_int(*v, "stages");
        if (n < 1) throw std::invalid_argument("stages must be >= 1");
        stages = static_cast<size_t>(n);
        Stage last = cfg.schedule.back();
        cfg.schedule.resize(stages, last);
    }
    auto stage_list = [&](const char* key, double Stage::* field) {
        if (auto v = take(key)) {
            auto list = parse_list(*v, key);
            broadcast(list, stages, key);
            for (size_t s = 0; s < stages; ++s) cfg.schedule[s].*field = list[s];
        }
    };
    stage_list("tau1", &Stage::tau1);
    stage_list("tau2", &Stage::tau2);
    stage_list("tau3", &Stage::tau3);
    stage_list("q", &Stage::q);

    if (auto v = take("k")) cfg.k = parse_double(*v, "k");
    if (auto v = take("max_iterations")) cfg.solver.max_iterations = parse_int(*v, "max_iterations");
    if (auto v = take("function_tolerance"))
        cfg.solver.function_tolerance = parse_double(*v, "function_tolerance");
    if (auto v = take("initial_lambda"))
        cfg.solver.initial_lambda = parse_double(*v, "initial_lambda");
    if (auto v = take("albedo_min")) cfg.albedo_min = parse_double(*v, "albedo_min");
    if (auto v = take("albedo_max")) cfg.albedo_max = parse_double(*v, "albedo_max");
    if (auto v = take("color_scale_min"))
        cfg.color_scale_min = parse_double(*v, "color_scale_min");
    if (auto v = take("color_scale_max"))
        cfg.color_scale_max = parse_double(*v, "color_scale_max");
    if (auto v = take("delta_chroma")) cfg.delta_chroma = parse_double(*v, "delta_chroma");
    if (auto v = take("delta_intensity"))
        cfg.delta_intensity = parse_double(*v, "delta_intensity");
    if (auto v = take("pixel_budget")) cfg.pixel_budget = parse_double(*v, "pixel_budget");
    if (auto v = take("max_subdivision_rounds"))
        cfg.max_subdivision_rounds = parse_int(*v, "max_subdivision_rounds");
    if (auto v = take("subdivide")) cfg.subdivide = parse_bool(*v, "subdivide");
    if (auto v = take("optimize_geometry"))
        cfg.optimize_geometry = parse_bool(*v, "optimize_geometry");
    if (auto v = take("optimize_albedo"))
        cfg.optimize_albedo = parse_bool(*v, "optimize_albedo");
    if (auto v = take("optimize_illumination"))
        cfg.optimize_illumination = parse_bool(*v, "optimize_illumination");

    if (!entries.empty())
        throw std::invalid_argument("unknown configuration key '" + entries.begin()->first +
                                    "'");
    cfg.validate();
    return cfg;
}

RefinementConfig RefinementConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open configuration file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

std::string RefinementConfig::serialize() const {
    std::ostringstream out;
    out << std::setprecision(17);
    auto list = [&](const char* key, double Stage::* field) {
        out << key << " =";
        for (const Stage& s : schedule) out << ' ' << s.*field;
        out << '\n';
    };
    out << "stages = " << schedule.size() << '\n';
    list("tau1", &Stage::tau1);
    list("tau2", &Stage::tau2);
    list("tau3", &Stage::tau3);
    list("q", &Stage::q);
    out << "k = " << k << '\n';
    out << "max_iterations = " << solver.max_iterations << '\n';
    out << "function_tolerance = " << solver.function_tolerance << '\n';
    out << "initial_lambda = " << solver.initial_lambda << '\n';
    out << "albedo_min = " << albedo_min << '\n';
    out << "albedo_max = " << albedo_max << '\n';
    out << "color_scale_min = " << color_scale_min << '\n';
    out << "color_scale_max = " << color_scale_max << '\n';
    out << "delta_chroma = " << delta_chroma << '\n';
    out << "delta_intensity = " << delta_intensity << '\n';
    out << "pixel_budget = " << pixel_budget << '\n';
    out << "max_subdivision_rounds = " << max_subdivision_rounds << '\n';
    out << "subdivide = " << (subdivide ? "true" : "false") << '\n';
    out << "optimize_geometry = " << (optimize_geometry ? "true" : "false") << '\n';
    out << "optimize_albedo = " << (optimize_albedo ? "true" : "false") << '\n';
    out << "optimize_illumination = " << (optimize_illumination ? "true" : "false") << '\n';
    return out.str();
}

void RefinementConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write configuration file: " + path);
    out << serialize();
    if (!out) throw std::runtime_error("failed writing configuration file: " + path);
}

void RefinementConfig::validate() const {
    if (schedule.empty()) throw std::invalid_argument("schedule must have at least one stage");
    for (const Stage& s : schedule) {
        if (s.tau1 < 0 || s.tau2 < 0 || s.tau3 < 0)
            throw std::invalid_argument("term weights must be nonnegative");
        if (s.q <= 0) throw std::invalid_argument("q must be positive");
    }
    if (k <= 0) throw std::invalid_argument("k must be positive");
    if (solver.max_iterations < 1)
        throw std::invalid_argument("max_iterations must be >= 1");
    if (solver.function_tolerance <= 0)
        throw std::invalid_argument("function_tolerance must be positive");
    if (solver.initial_lambda <= 0)
        throw std::invalid_argument("initial_lambda must be positive");
    if (albedo_min > albedo_max || color_scale_min > color_scale_max)
        throw std::invalid_argument("bounds must satisfy min <= max");
    if (delta_chroma <= 0 || delta_intensity <= 0)
        throw std::invalid_argument("smoothness scales must be positive");
    if (pixel_budget < 1) throw std::invalid_argument("pixel_budget must be >= 1");
    if (max_subdivision_rounds < 0)
        throw std::invalid_argument("max_subdivision_rounds must be >= 0");
}

}  // namespace polarmesh
