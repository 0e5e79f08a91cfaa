// Command-line front end: scene synthesis, mosaic demosaicking, mesh
// refinement, evaluation, and diagnostics, wired around the core library.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "polarmesh/cost.hpp"
#include "polarmesh/eval.hpp"
#include "polarmesh/image.hpp"
#include "polarmesh/mesh_io.hpp"
#include "polarmesh/mosaic.hpp"
#include "polarmesh/optimizer.hpp"
#include "polarmesh/parallel.hpp"
#include "polarmesh/rng.hpp"
#include "polarmesh/synth.hpp"

namespace fs = std::filesystem;
using namespace polarmesh;

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
}

struct DemosaicArgs {
    std::string input, layout, out_dir;
};

int run_demosaic(const DemosaicArgs& args) {
    PolarizationMosaic mosaic;
    mosaic.raw = load_image(args.input);
    mosaic.layout =
        args.layout.empty() ? MosaicLayout::sony_quad() : MosaicLayout::load(args.layout);
    PolarimetricImage result = demosaic(mosaic);
    fs::create_directories(args.out_dir);
    const fs::path base(args.out_dir);
    save_ppm((base / "rgb.ppm").string(), result.rgb_unpolarized);
    save_pfm((base / "aop.pfm").string(), result.aop);
    save_pfm((base / "dop.pfm").string(), result.dop);
    save_pgm((base / "mask.pgm").string(), result.valid_mask, 8);
    std::cerr << "demosaicked " << mosaic.width() << "x" << mosaic.height() << " mosaic into "
              << args.out_dir << "\n";
    return 0;
}

struct SynthArgs {
    std::string mesh, out_dir;
    int icosphere_level = 3;
    int views = 14;
    int size = 256;
    double ambiguity = 0.0;
    double sigma_deg = 0.0;
    double perturb = 0.02;
    bool manifest = false;
};

int run_synth(const SynthArgs& args, uint64_t seed, int threads) {
    Mesh gt = args.mesh.empty() ? make_icosphere(args.icosphere_level) : load_mesh(args.mesh);
    SceneOptions options;
    options.view_count = args.views;
    options.image_size = args.size;
    options.seed = seed;
    SyntheticScene scene = make_scene(gt, options);

    std::vector<Image> rgb = render_rgb_views(scene);
    std::vector<Image> aop, masks;
    render_aop_views(scene, &aop, &masks);
    if (args.ambiguity > 0.0 || args.sigma_deg > 0.0) {
        Rng master(seed);
        for (size_t c = 0; c < aop.size(); ++c)
            aop[c] = corrupt_aop(aop[c], masks[c], args.ambiguity, args.sigma_deg * kDegree,
                                 master.stream(scene.cameras[c].view_id).next_u64());
    }
    Mesh init = perturb_mesh(scene.gt_mesh, args.perturb, Rng(seed).stream(0x7e27).next_u64());
    write_scene_files(args.out_dir, scene, rgb, aop, masks, init);
    if (args.manifest)
        write_manifest((fs::path(args.out_dir) / "manifest.txt").string(),
                       {{"command", "synth"},
                        {"mesh", args.mesh.empty() ? "<icosphere>" : args.mesh},
                        {"icosphere_level", std::to_string(args.icosphere_level)},
                        {"views", std::to_string(args.views)},
                        {"size", std::to_string(args.size)},
                        {"ambiguity", std::to_string(args.ambiguity)},
                        {"sigma_deg", std::to_string(args.sigma_deg)},
                        {"perturb", std::to_string(args.perturb)},
                        {"seed", std::to_string(seed)},
                        {"threads", std::to_string(threads)}});
    std::cerr << "wrote scene with " << scene.cameras.size() << " views to " << args.out_dir
              << "\n";
    return 0;
}

struct RefineArgs {
    std::string scene, mesh, config, out, log, illum;
    bool no_polarization = false;
    bool manifest = false;
    bool verbose = false;
};

int run_refine(const RefineArgs& args, uint64_t seed, int threads) {
    const fs::path base(args.scene);
    RefineInputs inputs;
    inputs.cameras = load_cameras((base / "cameras.txt").string());
    std::vector<Image> aop, masks;
    bool all_aop = true;
    for (const Camera& cam : inputs.cameras) {
        inputs.rgb.push_back(
            load_image((base / view_filename("rgb", cam.view_id, ".ppm")).string()));
        const fs::path aop_path = base / view_filename("aop", cam.view_id, ".pfm");
        const fs::path mask_path = base / view_filename("mask", cam.view_id, ".pgm");
        if (!args.no_polarization && fs::exists(aop_path)) {
            aop.push_back(load_image(aop_path.string()));
            masks.push_back(fs::exists(mask_path) ? load_image(mask_path.string())
                                                  : Image(aop.back().width,
                                                          aop.back().height, 1, 1.0));
        } else {
            all_aop = false;
        }
    }
    if (!args.no_polarization && all_aop && !aop.empty()) {
        inputs.aop = std::move(aop);
        inputs.aop_mask = std::move(masks);
    } else if (!aop.empty() && !all_aop) {
        throw std::runtime_error(
            "some views lack polarization images; pass --no-polarization to refine "
            "without them");
    }

    const std::string mesh_path =
        args.mesh.empty() ? (base / "init_mesh.ply").string() : args.mesh;
    Mesh initial = load_mesh(mesh_path);
    RefinementConfig config =
        args.config.empty() ? RefinementConfig() : RefinementConfig::load(args.config);

    ProgressFn progress;
    if (args.verbose) {
        auto last = std::make_shared<std::chrono::steady_clock::time_point>(
            std::chrono::steady_clock::now());
        progress = [last](int stage, int iteration, double cost, double lambda) {
            const auto now = std::chrono::steady_clock::now();
            const double dt = std::chrono::duration<double>(now - *last).count();
            *last = now;
            std::cerr << "stage " << stage << " step " << iteration << ": cost " << cost
                      << ", lambda " << lambda << " (" << std::fixed
                      << std::setprecision(2) << dt << "s)\n"
                      << std::defaultfloat;
        };
    }
    RefineResult result = refine(initial, inputs, config, {}, progress);
    if (fs::path(args.out).has_parent_path())
        fs::create_directories(fs::path(args.out).parent_path());
    save_ply(result.state.mesh, args.out);
    if (!args.log.empty()) write_cost_log(result, args.log);
    if (!args.illum.empty()) save_illuminations(result.state.illuminations, args.illum);
    if (args.manifest) {
        std::vector<std::pair<std::string, std::string>> entries = {
            {"command", "refine"},
            {"scene", args.scene},
            {"mesh", mesh_path},
            {"config", args.config.empty() ? "<default>" : args.config},
            {"out", args.out},
            {"log", args.log.empty() ? "<none>" : args.log},
            {"no_polarization", args.no_polarization ? "1" : "0"},
            {"seed", std::to_string(seed)},
            {"threads", std::to_string(threads)}};
        std::istringstream cfg(config.serialize());
        for (std::string line; std::getline(cfg, line);)
            if (!line.empty()) entries.emplace_back("config." + line.substr(0, line.find(' ')),
                                                    line.substr(line.find("= ") + 2));
        write_manifest(args.out + ".manifest.txt", entries);
    }

    for (const StageLog& stage : result.stages)
        std::cerr << "stage " << stage.stage_index << ": " << stage.iterations
                  << " accepted steps, cost " << stage.initial_cost << " -> "
                  << stage.final_cost << (stage.converged ? " (converged)" : "")
                  << (stage.diverged ? " (diverged)" : "") << "\n";
    for (const std::string& note : result.diagnostics) std::cerr << "note: " << note << "\n";
    std::cerr << "wrote " << args.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string est, gt, out;
    int samples = 100000;
};

int run_eval(const EvalArgs& args, uint64_t seed) {
    Mesh est = load_mesh(args.est);
    Mesh gt = load_mesh(args.gt);
    EvalReport report = evaluate_mesh(est, gt, args.samples, seed);
    write_report(report, args.out);
    std::cerr << "accuracy mean " << report.accuracy.mean << ", completeness mean "
              << report.completeness.mean << " (diagonal " << report.diagonal << ")\n";
    return 0;
}

struct PlotCostArgs {
    double phi_deg = 0.0;
    double k = 0.5;
    double step_deg = 1.0;
    std::string out = "-";
};

int run_plot_cost(const PlotCostArgs& args) {
    if (args.step_deg <= 0.0) throw std::runtime_error("step must be positive");
    std::ostringstream table;
    table << "alpha_deg\tcost\n";
    table.precision(17);
    for (double alpha_deg = 0.0; alpha_deg < 360.0; alpha_deg += args.step_deg) {
        const double eta = azimuth_distance(alpha_deg * kDegree, args.phi_deg * kDegree);
        const double theta = 1.0 - 4.0 * eta / std::numbers::pi;
        table << alpha_deg << '\t' << polarimetric_penalty(theta, args.k) << '\n';
    }
    if (args.out == "-") {
        std::cout << table.str();
    } else {
        std::ofstream file(args.out);
        if (!file) throw std::runtime_error("cannot write table: " + args.out);
        file << table.str();
    }
    return 0;
}

struct CheckGradArgs {
    int samples = 100;
    int stage = 0;
    double tolerance = 1e-4;
};

int run_check_grad(const CheckGradArgs& args, uint64_t seed) {
    // Small self-contained scene: coarse sphere, modest images, perturbed
    // geometry so the residuals are generic.
    SceneOptions options;
    options.view_count = 8;
    options.image_size = 96;
    options.seed = seed;
    SyntheticScene scene = make_scene(make_icosphere(1), options);
    RefineInputs inputs;
    inputs.cameras = scene.cameras;
    inputs.rgb = render_rgb_views(scene);
    render_aop_views(scene, &inputs.aop, &inputs.aop_mask);

    Mesh mesh = perturb_mesh(scene.gt_mesh, 0.01, Rng(seed).stream(0x7e27).next_u64());
    RefinementConfig config;
    config.subdivide = false;
    config.validate();
    if (args.stage < 0 || args.stage >= static_cast<int>(config.schedule.size()))
        throw std::runtime_error("stage index out of range");

    ParameterLayout layout;
    layout.vertex_count = mesh.vertex_count();
    layout.view_count = static_cast<int>(inputs.cameras.size());
    StageProblem problem = build_stage_problem(mesh, inputs, config, args.stage, layout);
    std::vector<Illumination> illums =
        init_illuminations(problem.observations, layout.view_count);
    mesh.albedo = init_albedo(mesh, problem.observations, illums, config.albedo_min,
                              config.albedo_max);

    GradientCheckReport report = check_gradients(problem, mesh, illums, args.samples, seed);
    std::cout << "key\tvalue\n";
    std::cout << "parameters_checked\t" << report.parameters_checked << "\n";
    std::cout << "rows_excluded\t" << report.rows_excluded << "\n";
    std::cout << "max_relative_error\t" << report.max_relative_error << "\n";
    std::cout << "worst_row\t" << report.worst_row << "\n";
    std::cout << "worst_parameter\t" << report.worst_parameter << "\n";
    if (report.max_relative_error > args.tolerance) {
        std::cerr << "gradient check failed: " << report.max_relative_error << " > "
                  << args.tolerance << "\n";
        return 1;
    }
    std::cerr << "gradient check passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polarimetric multi-view mesh refinement toolkit"};
    app.require_subcommand(1);
    uint64_t seed = 0;
    int threads = 0;
    app.add_option("--seed", seed, "Seed for all randomness")->capture_default_str();
    app.add_option("--threads", threads, "Worker thread cap, 0 = all cores")
        ->capture_default_str();

    DemosaicArgs demosaic_args;
    CLI::App* demosaic_cmd =
        app.add_subcommand("demosaic", "Recover RGB + polarization from a raw mosaic");
    demosaic_cmd->fallthrough();
    demosaic_cmd->add_option("--input", demosaic_args.input, "Raw 16-bit mosaic (PGM)")
        ->required()
        ->check(CLI::ExistingFile);
    demosaic_cmd->add_option("--layout", demosaic_args.layout,
                             "Mosaic layout descriptor (default: Sony quad arrangement)")
        ->check(CLI::ExistingFile);
    demosaic_cmd->add_option("--out-dir", demosaic_args.out_dir, "Output directory")
        ->required();

    SynthArgs synth_args;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene");
    synth_cmd->fallthrough();
    synth_cmd->add_option("--mesh", synth_args.mesh, "Ground-truth mesh (default: icosphere)")
        ->check(CLI::ExistingFile);
    synth_cmd->add_option("--icosphere-level", synth_args.icosphere_level,
                          "Icosphere subdivision level when no mesh is given")
        ->capture_default_str();
    synth_cmd->add_option("--views", synth_args.views, "Camera count")->capture_default_str();
    synth_cmd->add_option("--size", synth_args.size, "Square image size")
        ->capture_default_str();
    synth_cmd->add_option("--ambiguity", synth_args.ambiguity,
                          "Fraction of pixels shifted by 90 degrees")
        ->capture_default_str();
    synth_cmd->add_option("--sigma-deg", synth_args.sigma_deg,
                          "Gaussian angle noise in degrees")
        ->capture_default_str();
    synth_cmd->add_option("--perturb", synth_args.perturb,
                          "Initial-mesh displacement as a fraction of the diagonal")
        ->capture_default_str();
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
    synth_cmd->add_flag("--manifest", synth_args.manifest, "Write manifest.txt");

    RefineArgs refine_args;
    CLI::App* refine_cmd = app.add_subcommand("refine", "Refine a mesh against a scene");
    refine_cmd->fallthrough();
    refine_cmd->add_option("--scene", refine_args.scene, "Scene directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    refine_cmd->add_option("--mesh", refine_args.mesh,
                           "Initial mesh (default: init_mesh.ply in the scene)")
        ->check(CLI::ExistingFile);
    refine_cmd->add_option("--config", refine_args.config, "Refinement configuration file")
        ->check(CLI::ExistingFile);
    refine_cmd->add_option("--out", refine_args.out, "Refined mesh output (PLY)")->required();
    refine_cmd->add_option("--log", refine_args.log, "Cost log TSV output");
    refine_cmd->add_option("--illum", refine_args.illum, "Estimated illumination output");
    refine_cmd->add_flag("--no-polarization", refine_args.no_polarization,
                         "Ignore polarization images");
    refine_cmd->add_flag("--manifest", refine_args.manifest,
                         "Write <out>.manifest.txt describing the run");
    refine_cmd->add_flag("--verbose", refine_args.verbose,
                         "Print every accepted solver step");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Accuracy/completeness report");
    eval_cmd->fallthrough();
    eval_cmd->add_option("--est", eval_args.est, "Estimated mesh")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--gt", eval_args.gt, "Ground-truth mesh")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--samples", eval_args.samples, "Ground-truth surface samples")
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_args.out, "Report TSV output")->required();

    PlotCostArgs plot_args;
    CLI::App* plot_cmd =
        app.add_subcommand("plot-cost", "Tabulate the azimuth penalty against azimuth");
    plot_cmd->fallthrough();
    plot_cmd->add_option("--phi-deg", plot_args.phi_deg, "Measured angle of polarization")
        ->required();
    plot_cmd->add_option("--k", plot_args.k, "Penalty concavity")->capture_default_str();
    plot_cmd->add_option("--step-deg", plot_args.step_deg, "Azimuth step")
        ->capture_default_str();
    plot_cmd->add_option("--out", plot_args.out, "Output file, - for stdout")
        ->capture_default_str();

    CheckGradArgs grad_args;
    CLI::App* grad_cmd =
        app.add_subcommand("check-grad", "Compare analytic and numeric derivatives");
    grad_cmd->fallthrough();
    grad_cmd->add_option("--samples", grad_args.samples, "Parameters to probe")
        ->capture_default_str();
    grad_cmd->add_option("--stage", grad_args.stage, "Schedule stage to check")
        ->capture_default_str();
    grad_cmd->add_option("--tolerance", grad_args.tolerance, "Maximum relative error")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit cleanly, bad usage is 2
    }

    set_thread_count(threads);
    try {
        if (demosaic_cmd->parsed()) return run_demosaic(demosaic_args);
        if (synth_cmd->parsed()) return run_synth(synth_args, seed, threads);
        if (refine_cmd->parsed()) return run_refine(refine_args, seed, threads);
        if (eval_cmd->parsed()) return run_eval(eval_args, seed);
        if (plot_cmd->parsed()) return run_plot_cost(plot_args);
        if (grad_cmd->parsed()) return run_check_grad(grad_args, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;  // unreachable with require_subcommand, defensive
}
