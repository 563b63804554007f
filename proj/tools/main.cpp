#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tsdfslam/config.hpp"
#include "tsdfslam/dataset_io.hpp"
#include "tsdfslam/errors.hpp"
#include "tsdfslam/evaluation.hpp"
#include "tsdfslam/image_io.hpp"
#include "tsdfslam/mesh.hpp"
#include "tsdfslam/pipeline.hpp"
#include "tsdfslam/synth.hpp"

namespace fs = std::filesystem;
using namespace tsdfslam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTracking = 3;

struct RunOptions {
    std::string sequence_dir;
    std::string output_dir;
    std::string config_path;
    double max_loss_fraction = 0.1;
    bool save_volume = false;
    bool dump_masks = false;
    bool dump_residuals = false;
    bool dump_virtual_depth = false;
    bool verbose = false;
    int mesh_min_weight = 2;
};

void WriteStatsCsv(const std::string& path, const std::vector<FrameStats>& stats) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "frame,timestamp,tracking_lost,converged,registrations,iterations,"
           "valid_residuals,masked_pixels,final_error,runtime_ms\n";
    char buf[256];
    for (const FrameStats& s : stats) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%d,%d,%d,%d,%zu,%zu,%.9g,%.3f\n", s.frame_index,
                      s.timestamp, s.tracking_lost ? 1 : 0, s.converged ? 1 : 0, s.registrations,
                      s.iterations, s.valid_residuals, s.masked_pixels, s.final_error,
                      s.runtime_ms);
        out << buf;
    }
}

Image<std::uint8_t> MaskToGray(const PixelMask& mask) {
    Image<std::uint8_t> gray(mask.width(), mask.height(), 0);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) gray(x, y) = mask(x, y) ? 255 : 0;
    }
    return gray;
}

// Residual dump: 16-bit PNG of the root residual (meters) scaled by 10000,
// i.e. tenths of millimeters of signed-distance error.
Image<std::uint16_t> ResidualToPng(const ResidualImage& residuals) {
    Image<std::uint16_t> png(residuals.squared.width(), residuals.squared.height(), 0);
    for (int y = 0; y < png.height(); ++y) {
        for (int x = 0; x < png.width(); ++x) {
            if (!residuals.valid(x, y)) continue;
            const double value = std::sqrt(static_cast<double>(residuals.squared(x, y))) * 1e4;
            png(x, y) = static_cast<std::uint16_t>(std::min(value, 65535.0));
        }
    }
    return png;
}

int RunSlam(const RunOptions& opt, const PipelineConfig& base_config) {
    const SequenceManifest manifest = LoadSequenceDir(opt.sequence_dir, base_config.max_dt);
    std::cout << "sequence: " << opt.sequence_dir << " (" << manifest.frames.size()
              << " frames)\n";

    const fs::path out_root(opt.output_dir);
    fs::create_directories(out_root);
    if (opt.dump_masks) fs::create_directories(out_root / "masks");
    if (opt.dump_residuals) fs::create_directories(out_root / "residuals");
    if (opt.dump_virtual_depth) fs::create_directories(out_root / "virtual_depth");

    Pipeline pipeline(base_config);
    WriteConfigFile((out_root / "config.txt").string(), pipeline.config());

    if (opt.dump_masks || opt.dump_residuals || opt.dump_virtual_depth) {
        pipeline.set_debug_sink([&](const FrameDebug& debug) {
            char name[64];
            std::snprintf(name, sizeof(name), "%06zu.png", debug.frame_index);
            if (opt.dump_masks && debug.mask) {
                WritePngGray8(MaskToGray(*debug.mask), (out_root / "masks" / name).string());
            }
            if (opt.dump_residuals && debug.residuals) {
                WritePng16(ResidualToPng(*debug.residuals),
                           (out_root / "residuals" / name).string());
            }
            if (opt.dump_virtual_depth && debug.virtual_depth) {
                WritePng16(EncodeDepth(*debug.virtual_depth, 1000.0),
                           (out_root / "virtual_depth" / name).string());
            }
        });
    }

    std::size_t next = 0;
    const FrameSource source = [&]() -> std::optional<Frame> {
        if (next >= manifest.frames.size()) return std::nullopt;
        try {
            return LoadFrame(manifest, next++);
        } catch (const std::exception& e) {
            throw std::runtime_error("frame " + std::to_string(next - 1) + ": " + e.what());
        }
    };

    if (opt.verbose) {
        // Frame lines come from a second sink-independent path: print after
        // each ProcessFrame by pulling frames manually.
        while (true) {
            std::optional<Frame> frame = source();
            if (!frame) break;
            const FrameStats s = pipeline.ProcessFrame(*frame);
            std::printf("frame %5zu  t=%.3f  %s  iters=%d  masked=%zu  err=%.3g  %.0f ms\n",
                        s.frame_index, s.timestamp, s.tracking_lost ? "LOST" : "ok  ",
                        s.iterations, s.masked_pixels, s.final_error, s.runtime_ms);
        }
        pipeline.Finalize();
    } else {
        RunSequence(pipeline, source);
    }

    WriteTrajectory((out_root / "trajectory.txt").string(), pipeline.trajectory());
    WriteStatsCsv((out_root / "stats.csv").string(), pipeline.stats());
    const Mesh mesh = ExtractMesh(pipeline.volume(), opt.mesh_min_weight, base_config.threads);
    WritePly((out_root / "mesh.ply").string(), mesh);
    if (opt.save_volume) pipeline.volume().Save((out_root / "volume.bin").string());

    const std::size_t losses = pipeline.tracking_losses();
    std::cout << "frames: " << pipeline.stats().size() << ", tracking losses: " << losses
              << ", blocks: " << pipeline.volume().num_blocks()
              << ", mesh: " << mesh.vertices.size() << " vertices / " << mesh.faces.size()
              << " faces\n";
    std::cout << "outputs in " << opt.output_dir << "\n";

    const double loss_fraction =
        pipeline.stats().empty()
            ? 0.0
            : static_cast<double>(losses) / static_cast<double>(pipeline.stats().size());
    if (loss_fraction > opt.max_loss_fraction) {
        std::cerr << "tracking lost on " << losses << " of " << pipeline.stats().size()
                  << " frames (more than " << opt.max_loss_fraction * 100 << "%)\n";
        return kExitTracking;
    }
    return kExitOk;
}

std::vector<double> MakeBinEdges(double width, int count) {
    std::vector<double> edges(count);
    for (int i = 0; i < count; ++i) edges[i] = width * (i + 1);
    return edges;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dense RGB-D SLAM on a voxel-hashed signed distance volume with "
                 "dynamic-object masking"};
    app.require_subcommand(1);

    // run
    RunOptions run_opt;
    PipelineConfig config;
    CLI::App* run = app.add_subcommand("run", "Track a sequence and fuse a model");
    run->add_option("sequence", run_opt.sequence_dir, "Dataset directory (rgb.txt/depth.txt)")
        ->required();
    run->add_option("-o,--output", run_opt.output_dir, "Output directory")->required();
    run->add_option("-c,--config", run_opt.config_path, "Configuration file (key = value)");
    auto* voxel_size = run->add_option("--voxel-size", config.volume.voxel_size, "Voxel size [m]");
    auto* truncation = run->add_option("--truncation", config.volume.truncation,
                                       "Signed distance truncation [m]");
    auto* color_weight = run->add_option("--color-weight", config.registration.color_weight,
                                         "Photometric term weight");
    auto* gamma = run->add_option("--gamma", config.mask.gamma, "Residual threshold factor");
    auto* theta = run->add_option("--theta", config.mask.theta, "Region growing depth bound");
    auto* threads = run->add_option("--threads", config.threads, "Worker threads");
    auto* max_depth = run->add_option("--max-depth", config.volume.max_depth,
                                      "Depth measurement cutoff [m]");
    auto* refine_window =
        run->add_option("--refine-window", config.refinement.window, "Depth refinement window");
    auto* no_dynamics = run->add_flag("--no-dynamics", "Disable dynamics masking");
    auto* no_refine = run->add_flag("--no-refine-depth", "Disable depth refinement");
    run->add_option("--max-loss-fraction", run_opt.max_loss_fraction,
                    "Tracking-loss fraction treated as failure");
    run->add_option("--mesh-min-weight", run_opt.mesh_min_weight,
                    "Minimum voxel weight for mesh extraction");
    run->add_flag("--save-volume", run_opt.save_volume, "Write volume.bin snapshot");
    run->add_flag("--dump-masks", run_opt.dump_masks, "Write per-frame dynamics masks");
    run->add_flag("--dump-residuals", run_opt.dump_residuals, "Write per-frame residual images");
    run->add_flag("--dump-virtual-depth", run_opt.dump_virtual_depth,
                  "Write rendered virtual depth (16-bit, millimeters)");
    run->add_flag("-v,--verbose", run_opt.verbose, "Per-frame progress lines");

    // synth
    std::string synth_script, synth_out;
    CLI::App* synth = app.add_subcommand("synth", "Render a synthetic dataset from a scene script");
    synth->add_option("scene", synth_script, "Scene script path")->required();
    synth->add_option("-o,--output", synth_out, "Dataset directory to create")->required();

    // eval-ate
    std::string ate_est, ate_gt, ate_csv, ate_scene;
    double ate_max_dt = 0.02;
    CLI::App* eval_ate = app.add_subcommand("eval-ate", "Absolute trajectory error");
    eval_ate->add_option("estimated", ate_est, "Estimated trajectory")->required();
    eval_ate->add_option("groundtruth", ate_gt, "Ground-truth trajectory")->required();
    eval_ate->add_option("--max-dt", ate_max_dt, "Association tolerance [s]");
    eval_ate->add_option("--csv", ate_csv, "Append a scene,ate_rmse_m row to this file");
    eval_ate->add_option("--scene", ate_scene, "Scene name for the CSV row");

    // eval-rpe
    std::string rpe_est, rpe_gt, rpe_csv;
    double rpe_delta = 1.0, rpe_max_dt = 0.02;
    CLI::App* eval_rpe = app.add_subcommand("eval-rpe", "Relative pose error over time");
    eval_rpe->add_option("estimated", rpe_est, "Estimated trajectory")->required();
    eval_rpe->add_option("groundtruth", rpe_gt, "Ground-truth trajectory")->required();
    eval_rpe->add_option("--delta", rpe_delta, "Interval length [s]");
    eval_rpe->add_option("--max-dt", rpe_max_dt, "Association tolerance [s]");
    eval_rpe->add_option("--csv", rpe_csv, "Write timestamp,rpe_m rows to this file");

    // eval-model
    std::string model_ply, reference_ply, model_csv, align_est, align_gt;
    double bin_width = 0.005;
    int bin_count = 40;
    CLI::App* eval_model =
        app.add_subcommand("eval-model", "Distance distribution of a model against a reference");
    eval_model->add_option("model", model_ply, "Model mesh or cloud (PLY)")->required();
    eval_model->add_option("reference", reference_ply, "Reference cloud (PLY)")->required();
    eval_model->add_option("--bin-width", bin_width, "CDF bin width [m]");
    eval_model->add_option("--bins", bin_count, "Number of CDF bins");
    eval_model->add_option("--csv", model_csv, "Write bin_edge_m,cumulative_percent rows");
    auto* align_est_opt = eval_model->add_option(
        "--align-est", align_est,
        "Estimated trajectory; maps the model into the reference frame before measuring");
    auto* align_gt_opt =
        eval_model->add_option("--align-gt", align_gt, "Ground-truth trajectory for --align-est")
            ->needs(align_est_opt);
    align_est_opt->needs(align_gt_opt);

    // export-mesh
    std::string volume_path, mesh_out;
    int mesh_min_weight = 2;
    CLI::App* export_mesh = app.add_subcommand("export-mesh", "Mesh a saved volume snapshot");
    export_mesh->add_option("volume", volume_path, "volume.bin snapshot")->required();
    export_mesh->add_option("-o,--output", mesh_out, "Mesh file to write (PLY)")->required();
    export_mesh->add_option("--min-weight", mesh_min_weight, "Minimum voxel weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (run->parsed()) {
            PipelineConfig effective;
            if (!run_opt.config_path.empty()) effective = ParseConfigFile(run_opt.config_path);
            // Command line wins over the config file, field by field.
            if (*voxel_size) effective.volume.voxel_size = config.volume.voxel_size;
            if (*truncation) effective.volume.truncation = config.volume.truncation;
            if (*color_weight) {
                effective.registration.color_weight = config.registration.color_weight;
            }
            if (*gamma) effective.mask.gamma = config.mask.gamma;
            if (*theta) effective.mask.theta = config.mask.theta;
            if (*threads) effective.threads = config.threads;
            if (*max_depth) effective.volume.max_depth = config.volume.max_depth;
            if (*refine_window) effective.refinement.window = config.refinement.window;
            if (*no_dynamics) effective.dynamics_enabled = false;
            if (*no_refine) effective.refinement.enabled = false;
            effective.Sync();
            return RunSlam(run_opt, effective);
        }
        if (synth->parsed()) {
            const SceneScript scene = SceneScript::ParseFile(synth_script);
            GenerateSequence(scene, synth_out);
            std::cout << "wrote " << scene.camera.size() << " frames, "
                      << scene.primitives.size() << " primitives to " << synth_out << "\n";
            return kExitOk;
        }
        if (eval_ate->parsed()) {
            const AteResult result =
                AteRmse(ReadTrajectory(ate_est), ReadTrajectory(ate_gt), ate_max_dt);
            std::printf("ATE RMSE: %.6f m over %zu pairs\n", result.rmse, result.pairs);
            if (!ate_csv.empty()) {
                const bool fresh = !fs::exists(ate_csv);
                std::ofstream csv(ate_csv, std::ios::app);
                if (!csv) throw std::runtime_error("cannot open for writing: " + ate_csv);
                if (fresh) csv << "scene,ate_rmse_m\n";
                const std::string scene =
                    ate_scene.empty() ? fs::path(ate_est).stem().string() : ate_scene;
                char buf[256];
                std::snprintf(buf, sizeof(buf), "%s,%.6f\n", scene.c_str(), result.rmse);
                csv << buf;
            }
            return kExitOk;
        }
        if (eval_rpe->parsed()) {
            const std::vector<RpeSample> samples =
                RpeOverTime(ReadTrajectory(rpe_est), ReadTrajectory(rpe_gt), rpe_delta,
                            rpe_max_dt);
            if (samples.empty()) throw std::runtime_error("no pose pairs at the given delta");
            double sum = 0.0, sum_sq = 0.0;
            for (const RpeSample& s : samples) {
                sum += s.translation_error;
                sum_sq += s.translation_error * s.translation_error;
            }
            const double mean = sum / static_cast<double>(samples.size());
            const double rms = std::sqrt(sum_sq / static_cast<double>(samples.size()));
            std::printf("RPE (delta %.3f s): mean %.6f m, rms %.6f m over %zu intervals\n",
                        rpe_delta, mean, rms, samples.size());
            if (!rpe_csv.empty()) {
                std::ofstream csv(rpe_csv);
                if (!csv) throw std::runtime_error("cannot open for writing: " + rpe_csv);
                csv << "timestamp,rpe_m\n";
                char buf[128];
                for (const RpeSample& s : samples) {
                    std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", s.timestamp,
                                  s.translation_error);
                    csv << buf;
                }
            }
            return kExitOk;
        }
        if (eval_model->parsed()) {
            Mesh model = ReadPly(model_ply);
            const Mesh reference = ReadPly(reference_ply);
            if (model.vertices.empty()) throw std::runtime_error("model has no vertices");
            if (!align_est.empty()) {
                const AteResult ate =
                    AteRmse(ReadTrajectory(align_est), ReadTrajectory(align_gt));
                for (Eigen::Vector3f& v : model.vertices) {
                    v = (ate.alignment * v.cast<double>()).cast<float>();
                }
                std::printf("aligned model through %zu trajectory pairs (ATE %.6f m)\n",
                            ate.pairs, ate.rmse);
            }
            const std::vector<double> distances =
                NearestDistances(model.vertices, reference.vertices);
            std::vector<double> sorted = distances;
            std::sort(sorted.begin(), sorted.end());
            const auto pct = [&](double p) {
                return sorted[static_cast<std::size_t>(p * (sorted.size() - 1))];
            };
            std::printf("model distances over %zu vertices: median %.6f m, p95 %.6f m, max %.6f m\n",
                        sorted.size(), pct(0.5), pct(0.95), sorted.back());
            const std::vector<double> edges = MakeBinEdges(bin_width, bin_count);
            const std::vector<double> cdf = DistanceCdf(distances, edges);
            if (!model_csv.empty()) {
                std::ofstream csv(model_csv);
                if (!csv) throw std::runtime_error("cannot open for writing: " + model_csv);
                csv << "bin_edge_m,cumulative_percent\n";
                char buf[128];
                for (std::size_t i = 0; i < edges.size(); ++i) {
                    std::snprintf(buf, sizeof(buf), "%.6f,%.3f\n", edges[i], cdf[i]);
                    csv << buf;
                }
            } else {
                for (std::size_t i = 0; i < edges.size(); i += 8) {
                    std::printf("  <= %.3f m: %.2f%%\n", edges[i], cdf[i]);
                }
            }
            return kExitOk;
        }
        if (export_mesh->parsed()) {
            const TsdfVolume volume = TsdfVolume::Load(volume_path);
            const Mesh mesh = ExtractMesh(volume, mesh_min_weight);
            WritePly(mesh_out, mesh);
            std::cout << "wrote " << mesh.vertices.size() << " vertices / " << mesh.faces.size()
                      << " faces to " << mesh_out << "\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
