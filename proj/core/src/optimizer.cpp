#include "polarmesh/optimizer.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "polarmesh/parallel.hpp"
#include "polarmesh/polarization.hpp"
#include "polarmesh/rng.hpp"
#include "polarmesh/subdivision.hpp"
#include "polarmesh/visibility.hpp"

namespace polarmesh {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(),  //
        v.z(), 0, -v.x(),   //
        -v.y(), v.x(), 0;
    return m;
}

// Normals of the current geometry together with their derivatives. The
// Jacobian parts are filled only when requested.
struct DifferentialCache {
    std::vector<Eigen::Vector3d> face_unit;
    std::vector<double> face_norm;
    std::vector<char> face_degenerate;
    std::vector<Eigen::Vector3d> vertex_normal;
    std::vector<char> vertex_degenerate;
    // d(unit face normal) / d(corner position), one 3x3 block per corner.
    std::vector<std::array<Eigen::Matrix3d, 3>> face_jac;
    // d(vertex normal) / d(position of vertex j) over the closed one-ring.
    std::vector<std::vector<std::pair<int, Eigen::Matrix3d>>> vertex_jac;
};

DifferentialCache build_cache(const Mesh& mesh, const MeshAdjacency& adjacency,
                              bool with_jacobian) {
    const int nf = mesh.face_count();
    const int nv = mesh.vertex_count();
    DifferentialCache cache;
    cache.face_unit.resize(nf);
    cache.face_norm.resize(nf);
    cache.face_degenerate.assign(nf, 0);
    parallel_for(nf, [&](size_t begin, size_t end) {
        for (size_t f = begin; f < end; ++f) {
            Eigen::Vector3d c = face_area_normal(mesh, static_cast<int>(f));
            double len = c.norm();
            cache.face_norm[f] = len;
            if (len <= kDegenerateFaceEpsilon) {
                cache.face_degenerate[f] = 1;
                cache.face_unit[f].setZero();
            } else {
                cache.face_unit[f] = c / len;
            }
        }
    });

    cache.vertex_normal.resize(nv);
    cache.vertex_degenerate.assign(nv, 0);
    std::vector<double> sum_norm(nv, 0.0);
    parallel_for(nv, [&](size_t begin, size_t end) {
        for (size_t v = begin; v < end; ++v) {
            Eigen::Vector3d sum = Eigen::Vector3d::Zero();
            for (int f : adjacency.vertex_faces[v])
                if (!cache.face_degenerate[f]) sum += cache.face_unit[f];
            double len = sum.norm();
            if (len < 1e-12) {
                cache.vertex_normal[v] = Eigen::Vector3d(0, 0, 1);
                cache.vertex_degenerate[v] = 1;
            } else {
                cache.vertex_normal[v] = sum / len;
                sum_norm[v] = len;
            }
        }
    });

    if (!with_jacobian) return cache;

    cache.face_jac.resize(nf);
    parallel_for(nf, [&](size_t begin, size_t end) {
        for (size_t f = begin; f < end; ++f) {
            if (cache.face_degenerate[f]) {
                for (auto& m : cache.face_jac[f]) m.setZero();
                continue;
            }
            const auto& face = mesh.faces[f];
            const Eigen::Vector3d& p0 = mesh.vertices[face[0]];
            const Eigen::Vector3d& p1 = mesh.vertices[face[1]];
            const Eigen::Vector3d& p2 = mesh.vertices[face[2]];
            const Eigen::Vector3d& n = cache.face_unit[f];
            Eigen::Matrix3d p =
                (Eigen::Matrix3d::Identity() - n * n.transpose()) / cache.face_norm[f];
            cache.face_jac[f][0] = p * skew(p2 - p1);
            cache.face_jac[f][1] = p * skew(p0 - p2);
            cache.face_jac[f][2] = p * skew(p1 - p0);
        }
    });

    cache.vertex_jac.resize(nv);
    parallel_for(nv, [&](size_t begin, size_t end) {
        for (size_t v = begin; v < end; ++v) {
            if (cache.vertex_degenerate[v]) continue;
            auto& entries = cache.vertex_jac[v];
            auto accumulate = [&entries](int j, const Eigen::Matrix3d& m) {
                for (auto& e : entries) {
                    if (e.first == j) {
                        e.second += m;
                        return;
                    }
                }
                entries.emplace_back(j, m);
            };
            for (int f : adjacency.vertex_faces[v]) {
                if (cache.face_degenerate[f]) continue;
                for (int k = 0; k < 3; ++k)
                    accumulate(mesh.faces[f][k], cache.face_jac[f][k]);
            }
            const Eigen::Vector3d& n = cache.vertex_normal[v];
            Eigen::Matrix3d p =
                (Eigen::Matrix3d::Identity() - n * n.transpose()) / sum_norm[v];
            for (auto& e : entries) e.second = p * e.second;
            std::sort(entries.begin(), entries.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
        }
    });
    return cache;
}

using JacobianRow = std::vector<std::pair<int, double>>;

void push_vector_entry(JacobianRow& row, int col0, const Eigen::RowVector3d& v) {
    row.emplace_back(col0, v[0]);
    row.emplace_back(col0 + 1, v[1]);
    row.emplace_back(col0 + 2, v[2]);
}

}  // namespace

Eigen::VectorXd pack_parameters(const Mesh& mesh, const std::vector<Illumination>& illums,
                                const ParameterLayout& layout) {
    if (layout.vertex_count != mesh.vertex_count() ||
        layout.view_count != static_cast<int>(illums.size()))
        throw std::invalid_argument("parameter layout does not match the state");
    if (layout.albedo && !mesh.has_albedo())
        throw std::invalid_argument("albedo block active but the mesh carries no albedo");
    Eigen::VectorXd x(layout.size());
    if (layout.geometry)
        for (int i = 0; i < layout.vertex_count; ++i)
            x.segment<3>(layout.vertex_param(i)) = mesh.vertices[i];
    if (layout.albedo)
        for (int i = 0; i < layout.vertex_count; ++i)
            x.segment<3>(layout.albedo_param(i)) = mesh.albedo[i];
    if (layout.illumination)
        for (int v = 0; v < layout.view_count; ++v) {
            x.segment<9>(layout.illum_param(v)) = illums[v].sh;
            x.segment<3>(layout.illum_param(v) + 9) = illums[v].color;
        }
    return x;
}

void apply_parameters(const Eigen::VectorXd& x, const ParameterLayout& layout, Mesh* mesh,
                      std::vector<Illumination>* illums) {
    if (x.size() != layout.size())
        throw std::invalid_argument("parameter vector does not match the layout");
    if (layout.geometry)
        for (int i = 0; i < layout.vertex_count; ++i)
            mesh->vertices[i] = x.segment<3>(layout.vertex_param(i));
    if (layout.albedo)
        for (int i = 0; i < layout.vertex_count; ++i)
            mesh->albedo[i] = x.segment<3>(layout.albedo_param(i));
    if (layout.illumination)
        for (int v = 0; v < layout.view_count; ++v) {
            (*illums)[v].sh = x.segment<9>(layout.illum_param(v));
            (*illums)[v].color = x.segment<3>(layout.illum_param(v) + 9);
        }
}

void project_to_bounds(Eigen::VectorXd* x, const ParameterLayout& layout,
                       const RefinementConfig& config) {
    if (layout.albedo)
        for (int i = 0; i < 3 * layout.vertex_count; ++i) {
            double& v = (*x)[layout.albedo_offset() + i];
            v = std::clamp(v, config.albedo_min, config.albedo_max);
        }
    if (layout.illumination)
        for (int v = 0; v < layout.view_count; ++v)
            for (int ch = 0; ch < 3; ++ch) {
                double& s = (*x)[layout.illum_param(v) + 9 + ch];
                s = std::clamp(s, config.color_scale_min, config.color_scale_max);
            }
}

StageProblem build_stage_problem(const Mesh& mesh, const RefineInputs& inputs,
                                 const RefinementConfig& config, int stage_index,
                                 const ParameterLayout& layout) {
    StageProblem problem;
    problem.cameras = &inputs.cameras;
    problem.rgb = &inputs.rgb;
    problem.aop = &inputs.aop;
    problem.aop_mask = &inputs.aop_mask;
    problem.adjacency = build_adjacency(mesh);
    const auto visibility = compute_visibility(mesh, inputs.cameras);
    problem.observations = build_observations(mesh, inputs.cameras, inputs.rgb, inputs.aop,
                                              inputs.aop_mask, visibility);
    problem.polarimetric_slot.resize(problem.observations.size());
    for (size_t o = 0; o < problem.observations.size(); ++o)
        problem.polarimetric_slot[o] =
            problem.observations[o].aop_valid ? problem.polarimetric_rows++ : -1;
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& nb = problem.adjacency.face_neighbors[f];
        if (nb[0] >= 0 || nb[1] >= 0 || nb[2] >= 0) problem.smooth_faces.push_back(f);
    }
    build_smoothness_pairs(mesh, problem.adjacency, problem.observations, config.delta_chroma,
                           config.delta_intensity, &problem.psm_pairs, &problem.psm_weights);
    problem.stage = config.schedule.at(static_cast<size_t>(stage_index));
    problem.k = config.k;
    problem.layout = layout;
    return problem;
}

Evaluation evaluate(const StageProblem& problem, const Mesh& mesh,
                    const std::vector<Illumination>& illums, bool with_jacobian) {
    const ParameterLayout& layout = problem.layout;
    const bool geo_jac = with_jacobian && layout.geometry;
    const DifferentialCache cache = build_cache(mesh, problem.adjacency, geo_jac);
    const int rows = problem.rows();

    std::vector<double> raw(rows, 0.0);  // residuals before term weighting
    std::vector<char> flags(rows, 0);
    std::vector<JacobianRow> jrows;
    if (with_jacobian) jrows.resize(rows);

    // Photometric and polarimetric rows, one group per observation. Observed
    // image values are resampled at the vertex's current projection so vertex
    // motion is scored against multi-view photometric consistency; when the
    // problem carries no images or the projection fails, the stage-start
    // sample stands in with zero positional gradient.
    parallel_for(problem.observations.size(), [&](size_t begin, size_t end) {
        for (size_t o = begin; o < end; ++o) {
            const Observation& obs = problem.observations[o];
            const int i = obs.vertex;
            const Camera& cam = (*problem.cameras)[obs.camera];
            const Illumination& ill = illums[obs.camera];
            const Eigen::Vector3d& n = cache.vertex_normal[i];
            const double s = std::sqrt(obs.weight_norm);
            const Eigen::Matrix<double, 9, 1> basis = sh_basis(n);
            const double shade = ill.sh.dot(basis);
            const int row0 = problem.photometric_base() + 3 * static_cast<int>(o);

            const bool have_rgb = problem.rgb != nullptr &&
                                  obs.camera < static_cast<int>(problem.rgb->size()) &&
                                  !(*problem.rgb)[obs.camera].empty();
            const auto proj = cam.project(mesh.vertices[i]);
            Eigen::Vector3d observed = obs.rgb;
            Eigen::Matrix<double, 3, 2> dI_dpix = Eigen::Matrix<double, 3, 2>::Zero();
            Eigen::Matrix<double, 2, 3> dpix_dx = Eigen::Matrix<double, 2, 3>::Zero();
            bool sample_fragile = false;
            bool live_rgb = have_rgb && proj.has_value();
            if (live_rgb) {
                const Image& img = (*problem.rgb)[obs.camera];
                for (int ch = 0; ch < 3; ++ch) {
                    const BilinearSample smp =
                        sample_bilinear_grad(img, proj->pixel.x(), proj->pixel.y(), ch);
                    observed[ch] = smp.value;
                    dI_dpix(ch, 0) = smp.dx;
                    dI_dpix(ch, 1) = smp.dy;
                    sample_fragile = sample_fragile || smp.on_cell_edge;
                }
                if (geo_jac) {
                    const Eigen::Vector3d xc = cam.to_camera(mesh.vertices[i]);
                    const double iz = 1.0 / xc.z();
                    Eigen::Matrix<double, 2, 3> dpix_dxc;
                    dpix_dxc << cam.fx * iz, 0.0, -cam.fx * xc.x() * iz * iz,  //
                        0.0, cam.fy * iz, -cam.fy * xc.y() * iz * iz;
                    dpix_dx = dpix_dxc * cam.R;
                }
            } else if (have_rgb) {
                sample_fragile = true;  // behind the camera: frozen fallback
            }
            for (int ch = 0; ch < 3; ++ch) {
                raw[row0 + ch] =
                    s * (observed[ch] - mesh.albedo[i][ch] * shade * ill.color[ch]);
                if (cache.vertex_degenerate[i] || sample_fragile) flags[row0 + ch] = 1;
            }
            if (with_jacobian) {
                const Eigen::Vector3d grad = sh_basis_jacobian(n).transpose() * ill.sh;
                for (int ch = 0; ch < 3; ++ch) {
                    JacobianRow& jr = jrows[row0 + ch];
                    if (int acol = layout.albedo_param(i); acol >= 0)
                        jr.emplace_back(acol + ch, -s * shade * ill.color[ch]);
                    if (int icol = layout.illum_param(obs.camera); icol >= 0) {
                        const double f = -s * mesh.albedo[i][ch] * ill.color[ch];
                        for (int b = 0; b < 9; ++b) jr.emplace_back(icol + b, f * basis[b]);
                        jr.emplace_back(icol + 9 + ch, -s * mesh.albedo[i][ch] * shade);
                    }
                    if (geo_jac && !cache.vertex_degenerate[i]) {
                        const double f = -s * mesh.albedo[i][ch] * ill.color[ch];
                        for (const auto& [j, dn] : cache.vertex_jac[i])
                            push_vector_entry(jr, layout.vertex_param(j),
                                              f * (grad.transpose() * dn));
                    }
                    // Moving the vertex moves its projection across the
                    // observed image; duplicate entries for the vertex's own
                    // column sum with the normal-chain ones above.
                    if (geo_jac && live_rgb)
                        push_vector_entry(jr, layout.vertex_param(i),
                                          s * (dI_dpix.row(ch) * dpix_dx));
                }
            }

            const int slot = problem.polarimetric_slot[o];
            if (slot < 0) continue;
            const int prow = problem.polarimetric_base() + slot;

            // Live AoP lookup at the current projection. Nearest-pixel
            // sampling is piecewise constant, so the observed angle
            // contributes no positional gradient; half-integer pixel lines
            // are where the lookup jumps, hence the fragility band there.
            double aop_obs = obs.aop;
            if (proj && problem.aop != nullptr &&
                obs.camera < static_cast<int>(problem.aop->size()) &&
                !(*problem.aop)[obs.camera].empty()) {
                const double px = proj->pixel.x(), py = proj->pixel.y();
                bool live_valid = true;
                if (problem.aop_mask != nullptr &&
                    obs.camera < static_cast<int>(problem.aop_mask->size()) &&
                    !(*problem.aop_mask)[obs.camera].empty())
                    live_valid =
                        sample_nearest((*problem.aop_mask)[obs.camera], px, py, 0) > 0.5;
                if (live_valid)
                    aop_obs = wrap_angle_pi(
                        sample_nearest((*problem.aop)[obs.camera], px, py, 0));
                const double rx = px - std::floor(px), ry = py - std::floor(py);
                if (std::abs(rx - 0.5) < 1e-3 || std::abs(ry - 0.5) < 1e-3)
                    flags[prow] = 1;
            }

            const Eigen::Vector3d ncam = cam.R * n;
            const double u = ncam.x(), v = -ncam.y();
            const double plane_sq = u * u + v * v;
            if (plane_sq < kAzimuthEpsilon) {
                flags[prow] = 1;  // azimuth undefined: the sample drops out
                continue;
            }
            const double alpha = wrap_angle_two_pi(std::atan2(v, u));
            const AzimuthDistance branch = azimuth_distance_branch(alpha, aop_obs);
            const double theta = 1.0 - 4.0 * branch.eta / kPi;
            raw[prow] = s * polarimetric_penalty(theta, problem.k);
            if (branch.branch_margin < 1e-5 || plane_sq < 1e-3 ||
                cache.vertex_degenerate[i])
                flags[prow] = 1;
            if (geo_jac && !cache.vertex_degenerate[i]) {
                const double dr_dalpha = s *
                                         polarimetric_penalty_derivative(theta, problem.k) *
                                         (-4.0 / kPi) * branch.deta_dalpha;
                const Eigen::RowVector3d dalpha_dn =
                    (-v * cam.R.row(0) - u * cam.R.row(1)) / plane_sq;
                JacobianRow& jr = jrows[prow];
                for (const auto& [j, dn] : cache.vertex_jac[i])
                    push_vector_entry(jr, layout.vertex_param(j),
                                      dr_dalpha * (dalpha_dn * dn));
            }
        }
    });

    // Geometric smoothness rows, one per face with edge neighbors.
    parallel_for(problem.smooth_faces.size(), [&](size_t begin, size_t end) {
        for (size_t g = begin; g < end; ++g) {
            const int m = problem.smooth_faces[g];
            const int row = problem.geometric_base() + static_cast<int>(g);
            if (cache.face_degenerate[m]) {
                flags[row] = 1;
                continue;
            }
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            int count = 0;
            for (int nb : problem.adjacency.face_neighbors[m]) {
                if (nb < 0 || cache.face_degenerate[nb]) continue;
                mean += cache.face_unit[nb];
                ++count;
            }
            if (count == 0) {
                flags[row] = 1;
                continue;
            }
            mean /= count;
            const double dot_raw = cache.face_unit[m].dot(mean);
            const double dot = std::clamp(dot_raw, -kArccosClamp, kArccosClamp);
            const double angle = std::acos(dot);
            const double q = problem.stage.q;
            raw[row] = std::pow(angle / kPi, q / 2.0);
            const bool clamped = dot_raw <= -kArccosClamp || dot_raw >= kArccosClamp;
            if (clamped || angle < 1e-3) flags[row] = 1;
            if (!geo_jac || clamped) continue;

            const double dr_ddot = (q / 2.0) * std::pow(angle / kPi, q / 2.0 - 1.0) *
                                   (1.0 / kPi) * (-1.0 / std::sqrt(1.0 - dot * dot));
            std::vector<std::pair<int, Eigen::RowVector3d>> acc;
            auto accumulate = [&acc](int j, const Eigen::RowVector3d& v) {
                for (auto& e : acc) {
                    if (e.first == j) {
                        e.second += v;
                        return;
                    }
                }
                acc.emplace_back(j, v);
            };
            for (int k = 0; k < 3; ++k)
                accumulate(mesh.faces[m][k],
                           mean.transpose() * cache.face_jac[m][k]);
            for (int nb : problem.adjacency.face_neighbors[m]) {
                if (nb < 0 || cache.face_degenerate[nb]) continue;
                for (int k = 0; k < 3; ++k)
                    accumulate(mesh.faces[nb][k],
                               (cache.face_unit[m].transpose() * cache.face_jac[nb][k]) /
                                   count);
            }
            std::sort(acc.begin(), acc.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            JacobianRow& jr = jrows[row];
            for (const auto& [j, v] : acc)
                push_vector_entry(jr, layout.vertex_param(j), dr_ddot * v);
        }
    });

    // Albedo smoothness rows, three per ordered neighbor pair.
    parallel_for(problem.psm_pairs.size(), [&](size_t begin, size_t end) {
        for (size_t p = begin; p < end; ++p) {
            const auto [i, j] = problem.psm_pairs[p];
            const double sw = std::sqrt(problem.psm_weights[p]);
            const int row0 = problem.pair_base() + 3 * static_cast<int>(p);
            for (int ch = 0; ch < 3; ++ch) {
                raw[row0 + ch] = sw * (mesh.albedo[i][ch] - mesh.albedo[j][ch]);
                if (with_jacobian && layout.albedo) {
                    jrows[row0 + ch].emplace_back(layout.albedo_param(i) + ch, sw);
                    jrows[row0 + ch].emplace_back(layout.albedo_param(j) + ch, -sw);
                }
            }
        }
    });

    // Serial finalization: term weighting, accounting, finiteness checks.
    Evaluation ev;
    ev.residuals.resize(rows);
    ev.near_singular = std::move(flags);
    ev.breakdown.photometric_count = problem.observations.size();
    ev.breakdown.polarimetric_count = static_cast<size_t>(problem.polarimetric_rows);
    ev.breakdown.geometric_count = problem.smooth_faces.size();
    ev.breakdown.pair_count = problem.psm_pairs.size();
    std::vector<Eigen::Triplet<double>> triplets;
    if (with_jacobian) {
        size_t nnz = 0;
        for (const JacobianRow& jr : jrows) nnz += jr.size();
        triplets.reserve(nnz);
    }
    auto describe = [&](int row) -> std::string {
        if (row < problem.polarimetric_base())
            return "photometric row for observation " + std::to_string(row / 3);
        if (row < problem.geometric_base())
            return "polarimetric row " + std::to_string(row - problem.polarimetric_base());
        if (row < problem.pair_base())
            return "geometric smoothness row for face " +
                   std::to_string(
                       problem.smooth_faces[row - problem.geometric_base()]);
        return "albedo smoothness row " + std::to_string(row - problem.pair_base());
    };
    for (int row = 0; row < rows; ++row) {
        double scale;
        if (row < problem.polarimetric_base()) {
            scale = 1.0;
            ev.breakdown.photometric += raw[row] * raw[row];
        } else if (row < problem.geometric_base()) {
            scale = std::sqrt(problem.stage.tau1);
            ev.breakdown.polarimetric += raw[row] * raw[row];
        } else if (row < problem.pair_base()) {
            scale = std::sqrt(problem.stage.tau2);
            ev.breakdown.geometric_smoothness += raw[row] * raw[row];
        } else {
            scale = std::sqrt(problem.stage.tau3);
            ev.breakdown.photometric_smoothness += raw[row] * raw[row];
        }
        const double r = scale * raw[row];
        if (!std::isfinite(r))
            throw std::runtime_error("non-finite residual in " + describe(row));
        ev.residuals[row] = r;
        if (!with_jacobian) continue;
        for (const auto& [col, value] : jrows[row]) {
            const double v = scale * value;
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite derivative in " + describe(row));
            triplets.emplace_back(row, col, v);
        }
    }
    if (with_jacobian) {
        ev.jacobian.resize(rows, layout.size());
        ev.jacobian.setFromTriplets(triplets.begin(), triplets.end());
    }
    return ev;
}

std::vector<Illumination> init_illuminations(const std::vector<Observation>& observations,
                                             int view_count) {
    std::vector<double> sum(view_count, 0.0);
    std::vector<int> count(view_count, 0);
    double total = 0.0;
    int total_count = 0;
    for (const Observation& obs : observations) {
        double intensity = obs.rgb.mean();
        sum[obs.camera] += intensity;
        ++count[obs.camera];
        total += intensity;
        ++total_count;
    }
    const double fallback = total_count > 0 ? total / total_count : 0.5;
    std::vector<Illumination> illums(view_count);
    for (int v = 0; v < view_count; ++v)
        illums[v] = Illumination::ambient(count[v] > 0 ? sum[v] / count[v] : fallback);
    return illums;
}

std::vector<Eigen::Vector3d> init_albedo(const Mesh& mesh,
                                         const std::vector<Observation>& observations,
                                         const std::vector<Illumination>& illums,
                                         double albedo_min, double albedo_max) {
    std::vector<Eigen::Vector3d> sums(mesh.vertices.size(), Eigen::Vector3d::Zero());
    std::vector<int> counts(mesh.vertices.size(), 0);
    for (const Observation& obs : observations) {
        double l0 = std::max(illums[obs.camera].sh[0], 1e-6);
        sums[obs.vertex] += obs.rgb / l0;
        ++counts[obs.vertex];
    }
    std::vector<Eigen::Vector3d> albedo(mesh.vertices.size());
    for (size_t v = 0; v < albedo.size(); ++v) {
        Eigen::Vector3d a =
            counts[v] > 0 ? (sums[v] / counts[v]).eval() : Eigen::Vector3d::Constant(0.5);
        albedo[v] = a.cwiseMax(albedo_min).cwiseMin(albedo_max);
    }
    return albedo;
}

namespace {

// Solves (JtJ + lambda * diag(damp)) * delta = rhs. The per-view lighting
// columns are structurally dense — every vertex observed in a view couples
// with all 12 of its lighting parameters — and factoring them together with
// the mesh-structured block wrecks fill-reducing orderings (near-quadratic
// fill). The lighting block is therefore eliminated through a small dense
// Schur complement on top of a sparse factorization of the mesh block.
class NormalEquationsSolver {
  public:
    NormalEquationsSolver(const Eigen::SparseMatrix<double>& jtj,
                          const Eigen::VectorXd& damp, int mesh_params)
        : m_(mesh_params), ni_(static_cast<int>(jtj.cols()) - mesh_params) {
        damp_mesh_ = damp.head(m_);
        damp_light_ = damp.tail(ni_);
        mesh_triplets_.reserve(jtj.nonZeros());
        for (int col = 0; col < m_; ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(jtj, col); it; ++it)
                if (it.row() < m_) mesh_triplets_.emplace_back(it.row(), col, it.value());
        cross_ = Eigen::MatrixXd::Zero(m_, ni_);
        light_ = Eigen::MatrixXd::Zero(ni_, ni_);
        for (int col = m_; col < m_ + ni_; ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(jtj, col); it; ++it) {
                if (it.row() < m_)
                    cross_(it.row(), col - m_) = it.value();
                else
                    light_(it.row() - m_, col - m_) = it.value();
            }
    }

    // False when the factorization fails at this damping value.
    bool solve(double lambda, const Eigen::VectorXd& rhs, Eigen::VectorXd* delta) {
        std::vector<Eigen::Triplet<double>> triplets = mesh_triplets_;
        for (int i = 0; i < m_; ++i)
            triplets.emplace_back(i, i, lambda * damp_mesh_[i]);
        Eigen::SparseMatrix<double> a(m_, m_);
        a.setFromTriplets(triplets.begin(), triplets.end());
        if (!pattern_ready_) {
            mesh_solver_.analyzePattern(a);
            pattern_ready_ = true;
        }
        mesh_solver_.factorize(a);
        if (mesh_solver_.info() != Eigen::Success) return false;
        const Eigen::VectorXd rhs_mesh = rhs.head(m_);
        const Eigen::VectorXd base = mesh_solver_.solve(rhs_mesh);
        if (mesh_solver_.info() != Eigen::Success) return false;
        delta->resize(m_ + ni_);
        if (ni_ == 0) {
            if (!base.allFinite()) return false;
            *delta = base;
            return true;
        }
        const Eigen::MatrixXd lifted = mesh_solver_.solve(cross_);
        if (mesh_solver_.info() != Eigen::Success) return false;
        Eigen::MatrixXd schur = light_ - cross_.transpose() * lifted;
        schur.diagonal() += lambda * damp_light_;
        const Eigen::LDLT<Eigen::MatrixXd> light_solver(schur);
        if (light_solver.info() != Eigen::Success) return false;
        const Eigen::VectorXd delta_light =
            light_solver.solve(rhs.tail(ni_) - cross_.transpose() * base);
        const Eigen::VectorXd delta_mesh = base - lifted * delta_light;
        if (!delta_mesh.allFinite() || !delta_light.allFinite()) return false;
        delta->head(m_) = delta_mesh;
        delta->tail(ni_) = delta_light;
        return true;
    }

  private:
    int m_ = 0;
    int ni_ = 0;
    Eigen::VectorXd damp_mesh_, damp_light_;
    std::vector<Eigen::Triplet<double>> mesh_triplets_;
    Eigen::MatrixXd cross_, light_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> mesh_solver_;
    bool pattern_ready_ = false;  // the pattern is constant across lambda
};

// Largest per-iteration vertex displacement, as a fraction of the shortest
// edge incident to the vertex. Along surface-tangential directions the data
// terms are nearly flat, so undamped step components there can grow until a
// single jump folds a triangle; folded faces drop out of the smoothness
// terms and the solver stalls in the crumpled state. Capping each vertex's
// displacement keeps every step too short to fold anything while the
// acceptance test still controls the cost.
constexpr double kMaxVertexStepFraction = 0.25;

// Clips per-vertex displacement in `delta` against the current edge lengths.
// Returns true when any vertex was clipped.
bool clip_vertex_steps(Eigen::VectorXd* delta, const Mesh& mesh,
                       const ParameterLayout& layout) {
    if (!layout.geometry) return false;
    std::vector<double> min_edge(mesh.vertex_count(),
                                 std::numeric_limits<double>::infinity());
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            const double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
            min_edge[a] = std::min(min_edge[a], len);
            min_edge[b] = std::min(min_edge[b], len);
        }
    bool clipped = false;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const double cap = kMaxVertexStepFraction * min_edge[i];
        if (!(cap > 0.0) || !std::isfinite(cap)) continue;  // isolated vertex
        auto seg = delta->segment<3>(layout.vertex_param(i));
        const double norm = seg.norm();
        if (norm > cap) {
            seg *= cap / norm;
            clipped = true;
        }
    }
    return clipped;
}

// One Levenberg-Marquardt stage over a frozen problem. Returns through the
// log; the state is advanced in place and only on accepted steps.
void run_stage(const StageProblem& problem, const RefinementConfig& config,
               ProblemState* state, StageLog* log, std::vector<std::string>* diagnostics,
               const ProgressFn& progress) {
    const ParameterLayout& layout = problem.layout;
    Eigen::VectorXd x = pack_parameters(state->mesh, state->illuminations, layout);
    project_to_bounds(&x, layout, config);
    apply_parameters(x, layout, &state->mesh, &state->illuminations);

    Evaluation ev = evaluate(problem, state->mesh, state->illuminations, true);
    double cost = ev.cost();
    log->initial_cost = cost;
    log->breakdown = ev.breakdown;
    state->cost_history.push_back(cost);
    if (layout.size() == 0 || problem.rows() == 0) {
        log->final_cost = cost;
        log->converged = true;
        return;
    }

    Mesh trial_mesh = state->mesh;
    std::vector<Illumination> trial_illums = state->illuminations;
    double lambda = config.solver.initial_lambda;
    const int n = layout.size();

    for (int iter = 0; iter < config.solver.max_iterations; ++iter) {
        const Eigen::VectorXd gradient = ev.jacobian.transpose() * ev.residuals;
        const Eigen::SparseMatrix<double> jtj = ev.jacobian.transpose() * ev.jacobian;
        const Eigen::VectorXd damp = jtj.diagonal().cwiseMax(1e-8);
        Eigen::SparseMatrix<double> damp_matrix(n, n);
        {
            std::vector<Eigen::Triplet<double>> diag;
            diag.reserve(n);
            for (int kk = 0; kk < n; ++kk) diag.emplace_back(kk, kk, damp[kk]);
            damp_matrix.setFromTriplets(diag.begin(), diag.end());
        }

        bool accepted = false;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
        bool pattern_ready = false;  // the pattern is constant across lambda
        while (!accepted) {
            Eigen::SparseMatrix<double> h = jtj + lambda * damp_matrix;
            if (!pattern_ready) {
                solver.analyzePattern(h);
                pattern_ready = true;
            }
            solver.factorize(h);
            if (solver.info() == Eigen::Success) {
                Eigen::VectorXd delta = solver.solve(-gradient);
                if (solver.info() == Eigen::Success && delta.allFinite()) {
                    const bool step_clipped =
                        clip_vertex_steps(&delta, state->mesh, layout);
                    Eigen::VectorXd x_try = x + delta;
                    project_to_bounds(&x_try, layout, config);
                    apply_parameters(x_try, layout, &trial_mesh, &trial_illums);
                    const double cost_try =
                        evaluate(problem, trial_mesh, trial_illums, false).cost();
                    if (cost_try <= cost) {
                        const double improvement = cost - cost_try;
                        x = std::move(x_try);
                        apply_parameters(x, layout, &state->mesh, &state->illuminations);
                        cost = cost_try;
                        state->cost_history.push_back(cost);
                        ++log->iterations;
                        lambda = std::max(lambda * 0.5, 1e-12);
                        accepted = true;
                        ev = evaluate(problem, state->mesh, state->illuminations, true);
                        if (progress)
                            progress(log->stage_index, log->iterations, cost, lambda);
                        // A clipped step understates the available progress,
                        // so it never counts as convergence evidence.
                        if (!step_clipped &&
                            improvement <=
                                config.solver.function_tolerance *
                                    std::max(cost + improvement, 1e-12))
                            log->converged = true;
                        break;
                    }
                }
            }
            lambda *= 4.0;
            if (lambda > 1e12) {
                log->diverged = true;
                diagnostics->push_back(
                    "stage " + std::to_string(log->stage_index) +
                    ": damping overflow, returning the best state reached so far");
                break;
            }
        }
        if (!accepted || log->converged || log->diverged) break;
    }
    log->final_cost = cost;
    log->breakdown = ev.breakdown;
}

}  // namespace

RefineResult refine(const Mesh& initial_mesh, const RefineInputs& inputs,
                    const RefinementConfig& config,
                    const std::vector<Illumination>& initial_illuminations,
                    const ProgressFn& progress) {
    config.validate();
    const int views = static_cast<int>(inputs.cameras.size());
    if (views == 0) throw std::invalid_argument("refine requires at least one camera");
    if (static_cast<int>(inputs.rgb.size()) != views)
        throw std::invalid_argument("one observed image per camera is required");
    if (!inputs.aop.empty() && static_cast<int>(inputs.aop.size()) != views)
        throw std::invalid_argument("polarization images must match the camera count");
    if (!inputs.aop_mask.empty() && static_cast<int>(inputs.aop_mask.size()) != views)
        throw std::invalid_argument("polarization masks must match the camera count");
    if (!initial_illuminations.empty() &&
        static_cast<int>(initial_illuminations.size()) != views)
        throw std::invalid_argument("initial lighting must match the camera count");

    RefineResult result;
    result.state.mesh = initial_mesh;
    result.state.illuminations = initial_illuminations;
    if (config.subdivide && config.max_subdivision_rounds > 0) {
        SubdivisionResult sub =
            subdivide_to_pixel_budget(initial_mesh, inputs.cameras, config.pixel_budget,
                                      config.max_subdivision_rounds);
        result.state.mesh = std::move(sub.mesh);
        result.subdivision_rounds = sub.rounds;
        result.subdivision_budget_met = sub.budget_met;
        if (!sub.budget_met)
            result.diagnostics.push_back(
                "subdivision hit the round cap before every face met the pixel budget");
    }

    ParameterLayout layout;
    layout.vertex_count = result.state.mesh.vertex_count();
    layout.view_count = views;
    layout.geometry = config.optimize_geometry;
    layout.albedo = config.optimize_albedo;
    layout.illumination = config.optimize_illumination;

    for (size_t s = 0; s < config.schedule.size(); ++s) {
        result.state.stage_index = static_cast<int>(s);
        StageProblem problem =
            build_stage_problem(result.state.mesh, inputs, config, static_cast<int>(s), layout);
        if (s == 0) {
            if (result.state.illuminations.empty())
                result.state.illuminations = init_illuminations(problem.observations, views);
            if (!result.state.mesh.has_albedo())
                result.state.mesh.albedo =
                    init_albedo(result.state.mesh, problem.observations,
                                result.state.illuminations, config.albedo_min,
                                config.albedo_max);
        }
        StageLog log;
        log.stage_index = static_cast<int>(s);
        run_stage(problem, config, &result.state, &log, &result.diagnostics, progress);
        result.stages.push_back(log);
    }
    return result;
}

GradientCheckReport check_gradients(const StageProblem& problem, const Mesh& mesh,
                                    const std::vector<Illumination>& illums, int samples,
                                    uint64_t seed) {
    GradientCheckReport report;
    const ParameterLayout& layout = problem.layout;
    const int n = layout.size();
    if (n == 0 || problem.rows() == 0 || samples <= 0) return report;

    const Eigen::VectorXd x0 = pack_parameters(mesh, illums, layout);
    const Evaluation ev = evaluate(problem, mesh, illums, true);
    for (char f : ev.near_singular) report.rows_excluded += f != 0;

    Mesh tmp_mesh = mesh;
    std::vector<Illumination> tmp_illums = illums;
    auto residuals_at = [&](const Eigen::VectorXd& x) {
        apply_parameters(x, layout, &tmp_mesh, &tmp_illums);
        return evaluate(problem, tmp_mesh, tmp_illums, false).residuals;
    };

    Rng rng(seed);
    Eigen::VectorXd x = x0;
    for (int s = 0; s < samples; ++s) {
        const int j = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
        const double h = 1e-6 * std::max(1.0, std::abs(x0[j]));
        x[j] = x0[j] + h;
        const Eigen::VectorXd plus = residuals_at(x);
        x[j] = x0[j] - h;
        const Eigen::VectorXd minus = residuals_at(x);
        x[j] = x0[j];
        const Eigen::VectorXd fd = (plus - minus) / (2.0 * h);
        const Eigen::VectorXd analytic = ev.jacobian.col(j);
        for (int row = 0; row < problem.rows(); ++row) {
            if (ev.near_singular[row]) continue;
            const double a = analytic[row], f = fd[row];
            // Relative error with an absolute floor so that near-zero
            // entries compare on absolute terms.
            const double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-3});
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_row = row;
                report.worst_parameter = j;
            }
        }
        ++report.parameters_checked;
    }
    return report;
}

void write_cost_log(const RefineResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write cost log: " + path);
    out << std::setprecision(17);
    out << "stage\tkey\tvalue\tcount\n";
    for (const StageLog& log : result.stages) {
        const CostBreakdown& bd = log.breakdown;
        out << log.stage_index << "\tinitial_cost\t" << log.initial_cost << "\t0\n";
        out << log.stage_index << "\tfinal_cost\t" << log.final_cost << "\t0\n";
        out << log.stage_index << "\tphotometric\t" << bd.photometric << "\t"
            << bd.photometric_count << "\n";
        out << log.stage_index << "\tpolarimetric\t" << bd.polarimetric << "\t"
            << bd.polarimetric_count << "\n";
        out << log.stage_index << "\tgeometric_smoothness\t" << bd.geometric_smoothness
            << "\t" << bd.geometric_count << "\n";
        out << log.stage_index << "\tphotometric_smoothness\t" << bd.photometric_smoothness
            << "\t" << bd.pair_count << "\n";
        out << log.stage_index << "\titerations\t" << log.iterations << "\t0\n";
        out << log.stage_index << "\tconverged\t" << (log.converged ? 1 : 0) << "\t0\n";
        out << log.stage_index << "\tdiverged\t" << (log.diverged ? 1 : 0) << "\t0\n";
    }
    if (!out) throw std::runtime_error("failed writing cost log: " + path);
}

}  // namespace polarmesh
