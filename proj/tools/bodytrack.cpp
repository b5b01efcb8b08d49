// Command-line front end: sequence simulation, body reconstruction,
// reference-model alignment, per-frame tracking, evaluation, and a
// throughput benchmark.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bodytrack/evaluate.hpp"
#include "bodytrack/io.hpp"
#include "bodytrack/markerpose.hpp"
#include "bodytrack/pipeline.hpp"
#include "bodytrack/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bodytrack;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitAlgorithm = 3;

void reject_unknown_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ParseError("unknown config key '" + where + key + "'");
    }
  }
}

struct Config {
  std::uint64_t seed = 1;
  CameraIntrinsics intrinsics;
  NoiseModel noise;
  ReconstructionParams reconstruction;
  TrackingParams tracking;
  RigidTransform t_manual;
  RigidTransform p_u_ref;
  IcpParams align_icp;

  Config() {
    intrinsics.fx = 520.0;
    intrinsics.fy = 520.0;
    intrinsics.cx = 320.0;
    intrinsics.cy = 240.0;
    intrinsics.width = 640;
    intrinsics.height = 480;
    align_icp.max_iterations = 60;
    align_icp.max_correspondence_distance = 0.10;
  }
};

IcpParams parse_icp(const json& j, const std::string& where,
                    IcpParams defaults) {
  reject_unknown_keys(j, where,
                      {"max_iterations", "max_correspondence_distance",
                       "translation_epsilon", "rotation_epsilon",
                       "gicp_covariance_epsilon", "neighbors_for_covariance"});
  IcpParams p = defaults;
  p.max_iterations = j.value("max_iterations", p.max_iterations);
  p.max_correspondence_distance =
      j.value("max_correspondence_distance", p.max_correspondence_distance);
  p.translation_epsilon = j.value("translation_epsilon", p.translation_epsilon);
  p.rotation_epsilon = j.value("rotation_epsilon", p.rotation_epsilon);
  p.gicp_covariance_epsilon =
      j.value("gicp_covariance_epsilon", p.gicp_covariance_epsilon);
  p.neighbors_for_covariance =
      j.value("neighbors_for_covariance", p.neighbors_for_covariance);
  if (p.max_iterations <= 0 || p.max_correspondence_distance <= 0.0 ||
      p.translation_epsilon <= 0.0 || p.rotation_epsilon <= 0.0 ||
      p.gicp_covariance_epsilon <= 0.0 || p.neighbors_for_covariance <= 0) {
    throw ParseError("icp parameters under '" + where + "' must be positive");
  }
  return p;
}

Config load_config(const fs::path& path) {
  Config config;
  if (path.empty()) return config;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j = json::parse(in);

  reject_unknown_keys(j, "",
                      {"seed", "intrinsics", "noise", "reconstruction",
                       "tracking", "align_icp", "t_manual", "p_u_ref"});
  config.seed = j.value("seed", config.seed);
  if (j.contains("intrinsics")) {
    const json& k = j["intrinsics"];
    reject_unknown_keys(k, "intrinsics.",
                        {"fx", "fy", "cx", "cy", "width", "height"});
    config.intrinsics.fx = k.value("fx", config.intrinsics.fx);
    config.intrinsics.fy = k.value("fy", config.intrinsics.fy);
    config.intrinsics.cx = k.value("cx", config.intrinsics.cx);
    config.intrinsics.cy = k.value("cy", config.intrinsics.cy);
    config.intrinsics.width = k.value("width", config.intrinsics.width);
    config.intrinsics.height = k.value("height", config.intrinsics.height);
    if (!config.intrinsics.valid()) {
      throw ParseError("invalid intrinsics in config");
    }
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    reject_unknown_keys(n, "noise.",
                        {"depth_sigma_mm", "pixel_sigma", "scene_pose_sigma_mm",
                         "scene_pose_sigma_deg", "detection_dropout"});
    config.noise.depth_sigma_mm =
        n.value("depth_sigma_mm", config.noise.depth_sigma_mm);
    config.noise.pixel_sigma = n.value("pixel_sigma", config.noise.pixel_sigma);
    config.noise.scene_pose_sigma_mm =
        n.value("scene_pose_sigma_mm", config.noise.scene_pose_sigma_mm);
    config.noise.scene_pose_sigma_deg =
        n.value("scene_pose_sigma_deg", config.noise.scene_pose_sigma_deg);
    config.noise.detection_dropout =
        n.value("detection_dropout", config.noise.detection_dropout);
    if (config.noise.depth_sigma_mm < 0 || config.noise.pixel_sigma < 0 ||
        config.noise.scene_pose_sigma_mm < 0 ||
        config.noise.scene_pose_sigma_deg < 0 ||
        config.noise.detection_dropout < 0 ||
        config.noise.detection_dropout > 1) {
      throw ParseError("noise sigmas must be >= 0 and dropout within [0,1]");
    }
  }
  if (j.contains("reconstruction")) {
    const json& r = j["reconstruction"];
    reject_unknown_keys(r, "reconstruction.",
                        {"frame_skip", "n_target", "d0", "d_recon", "icp"});
    config.reconstruction.frame_skip =
        r.value("frame_skip", config.reconstruction.frame_skip);
    config.reconstruction.n_target =
        r.value("n_target", config.reconstruction.n_target);
    config.reconstruction.d0 = r.value("d0", config.reconstruction.d0);
    config.reconstruction.d_recon =
        r.value("d_recon", config.reconstruction.d_recon);
    if (r.contains("icp")) {
      config.reconstruction.icp =
          parse_icp(r["icp"], "reconstruction.icp.", config.reconstruction.icp);
    }
    if (config.reconstruction.frame_skip <= 0 ||
        config.reconstruction.n_target <= 0 ||
        config.reconstruction.d0 <= 0.0 ||
        config.reconstruction.d_recon <= 0.0) {
      throw ParseError("reconstruction parameters must be positive");
    }
  }
  if (j.contains("tracking")) {
    const json& t = j["tracking"];
    reject_unknown_keys(t, "tracking.", {"d_star", "d_nei", "icp"});
    config.tracking.d_star = t.value("d_star", config.tracking.d_star);
    config.tracking.d_nei = t.value("d_nei", config.tracking.d_nei);
    if (t.contains("icp")) {
      config.tracking.icp =
          parse_icp(t["icp"], "tracking.icp.", config.tracking.icp);
    }
    if (config.tracking.d_star <= 0.0 || config.tracking.d_nei <= 0.0) {
      throw ParseError("tracking parameters must be positive");
    }
  }
  if (j.contains("align_icp")) {
    config.align_icp = parse_icp(j["align_icp"], "align_icp.",
                                 config.align_icp);
  }
  if (j.contains("t_manual")) {
    config.t_manual = from_pose_text(j["t_manual"].get<std::string>());
  }
  if (j.contains("p_u_ref")) {
    config.p_u_ref = from_pose_text(j["p_u_ref"].get<std::string>());
  }
  return config;
}

void apply_xtion_profile(Config& config) {
  config.tracking.d_star = 0.02;
  config.tracking.d_nei = 0.10;
  config.tracking.icp.max_correspondence_distance = 3.0 * 0.02;
}

std::vector<Frame> load_used_frames(const SequenceReader& reader,
                                    int frame_skip) {
  std::vector<Frame> frames;
  for (int i = 1; i <= reader.frame_count(); ++i) {
    if (i == 1 || i % frame_skip == 0) frames.push_back(reader.frame(i));
  }
  return frames;
}

json eval_to_json(const SequenceEval& eval) {
  json j;
  j["mre_deg"] = eval.mre_deg;
  j["mte_mm"] = eval.mte_mm;
  j["median_re_deg"] = eval.median_re_deg;
  j["median_te_mm"] = eval.median_te_mm;
  j["mean_fps"] = eval.mean_fps;
  j["coverage"] = eval.coverage;
  j["evaluated_frames"] = eval.evaluated_frames;
  j["skipped_frames"] = eval.skipped_frames;
  return j;
}

int cmd_simulate(const Config& config, const fs::path& out, int frames,
                 bool force, const std::string& body_motion,
                 double camera_span, double camera_radius,
                 double camera_height, double motion_amplitude_mm,
                 double motion_amplitude_deg, int motion_segments,
                 int resolution) {
  SequenceSpec spec;
  spec.frame_count = frames;
  spec.intrinsics = config.intrinsics;
  spec.noise = config.noise;
  spec.noise.seed = config.seed;
  spec.model = make_mannequin(resolution);
  spec.camera.center = Eigen::Vector3d::Zero();  // mid-torso
  spec.camera.radius = camera_radius;
  spec.camera.height = camera_height;
  spec.camera.start_angle_deg = -camera_span / 2.0;
  spec.camera.end_angle_deg = camera_span / 2.0;
  if (body_motion == "script") {
    spec.body = random_body_motion(config.seed, motion_amplitude_mm / 1000.0,
                                   motion_amplitude_deg, motion_segments);
  } else if (body_motion != "static") {
    throw ParseError("--body-motion must be 'static' or 'script'");
  }

  SequenceWriter writer(out, spec.intrinsics, spec.model, force);
  generate_sequence(spec, [&](Frame&& frame) { writer.add(frame); });
  writer.finish();
  std::cout << "wrote " << frames << " frames to " << out.string() << "\n";
  return 0;
}

int cmd_reconstruct(const Config& config, const fs::path& seq,
                    const fs::path& out) {
  const SequenceReader reader(seq);
  const auto frames = load_used_frames(reader,
                                       config.reconstruction.frame_skip);
  const ReconstructionResult recon = reconstruct_body(
      frames, reader.marker_map(), reader.intrinsics(), config.reconstruction);

  fs::create_directories(out);
  write_ply(out / "recon_cloud.ply", recon.cloud);
  write_pose_file(out / "t_hat.txt", recon.t_hat);
  std::ofstream poses(out / "recon_poses.csv");
  poses << "frame,tx,ty,tz,qx,qy,qz,qw\n";
  for (const auto& [index, pose] : recon.poses) {
    std::string text = to_pose_text(pose);
    for (auto& c : text) {
      if (c == ' ') c = ',';
    }
    poses << index << "," << text << "\n";
  }
  std::cout << "reconstructed " << recon.cloud.size() << " points from "
            << recon.used_frames.size() << " frames ("
            << recon.success_frames.size() << " with marker poses)\n";
  return 0;
}

int cmd_align(const Config& config, const fs::path& seq,
              const fs::path& recon_dir) {
  const SequenceReader reader(seq);
  const PointCloud recon = read_ply_cloud(recon_dir / "recon_cloud.ply");
  const RigidTransform t_hat = read_pose_file(recon_dir / "t_hat.txt");

  const IcpResult refined = align_reference_model(
      recon, reader.body_mesh(), config.t_manual, config.align_icp);
  write_pose_file(recon_dir / "t_refined.txt", refined.transform);
  const RigidTransform t_marker_to_model =
      compose_marker_to_model(refined.transform, t_hat);
  write_pose_file(recon_dir / "t_marker_to_model.txt", t_marker_to_model);
  std::cout << "alignment " << (refined.converged ? "converged" : "did not converge")
            << " after " << refined.iterations
            << " iterations, objective " << refined.final_objective << "\n";
  return 0;
}

struct TrackRun {
  std::vector<TrackResult> results;
};

TrackRun run_tracking(const Config& config, const SequenceReader& reader,
                      const fs::path& recon_dir, int max_frames) {
  const fs::path t_path = recon_dir / "t_marker_to_model.txt";
  if (!fs::exists(t_path)) {
    throw IoError("missing alignment file " + t_path.string() +
                  " (run the align command first)");
  }
  const RigidTransform t_marker_to_model = read_pose_file(t_path);
  // The tracker composes the transform itself from (t_refined, t_hat); feed
  // it the already-composed product with an identity refinement side.
  ReconstructionResult recon_stub;
  recon_stub.t_hat = t_marker_to_model;
  TrackerState state = init_tracker(
      recon_stub, RigidTransform::identity(), reader.body_mesh(),
      reader.marker_map(), reader.intrinsics(), config.p_u_ref,
      config.tracking);

  TrackRun run;
  const int count = max_frames > 0
                        ? std::min(max_frames, reader.frame_count())
                        : reader.frame_count();
  for (int i = 1; i <= count; ++i) {
    const Frame frame = reader.frame(i);
    run.results.push_back(track_frame(state, frame, config.tracking));
  }
  return run;
}

int cmd_track(const Config& config, const fs::path& seq,
              const fs::path& recon_dir, const fs::path& out,
              int max_frames) {
  const SequenceReader reader(seq);
  const TrackRun run = run_tracking(config, reader, recon_dir, max_frames);
  write_track_results_csv(out, run.results);
  int tracked = 0;
  for (const auto& r : run.results) {
    if (r.patient_pose) ++tracked;
  }
  std::cout << "tracked " << tracked << "/" << run.results.size()
            << " frames -> " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::vector<std::string>& results_paths,
                 const std::vector<std::string>& gt_paths,
                 const fs::path& out) {
  if (results_paths.size() != gt_paths.size() || results_paths.empty()) {
    throw ParseError("--results and --gt must be given the same number of times");
  }
  fs::create_directories(out);
  std::vector<SequenceEval> evals;
  json sequences = json::array();
  for (std::size_t s = 0; s < results_paths.size(); ++s) {
    const auto rows = read_track_results_csv(results_paths[s]);
    const auto gt = read_ground_truth_body_poses(gt_paths[s]);
    if (rows.size() != gt.size()) {
      throw LengthMismatch("results and ground truth differ in frame count for " +
                           results_paths[s]);
    }
    std::vector<std::optional<RigidTransform>> est;
    std::vector<std::int64_t> total_us;
    for (const auto& row : rows) {
      est.push_back(row.world_pose);
      total_us.push_back(row.timings.total_us);
    }
    const Calibration cal = split_half_calibrate(est, gt);
    const SequenceEval eval = evaluate_sequence(est, gt, cal, total_us);
    evals.push_back(eval);

    std::ofstream csv(out / ("sequence_" + std::to_string(s + 1) +
                             "_errors.csv"));
    csv << "eval_frame,rot_err_deg,trans_err_mm\n";
    for (std::size_t i = 0; i < eval.rotational_errors_deg.size(); ++i) {
      csv << i << "," << eval.rotational_errors_deg[i] << ","
          << eval.translational_errors_mm[i] << "\n";
    }
    json record = eval_to_json(eval);
    record["results"] = results_paths[s];
    sequences.push_back(record);
  }

  const SequenceEval pooled = aggregate(evals);
  json summary;
  summary["sequences"] = sequences;
  summary["pooled"] = eval_to_json(pooled);
  std::ofstream(out / "summary.json") << summary.dump(2) << "\n";
  std::cout << "pooled MTE " << pooled.mte_mm << " mm, MRE " << pooled.mre_deg
            << " deg, coverage " << pooled.coverage << " -> "
            << (out / "summary.json").string() << "\n";
  return 0;
}

int cmd_bench(const Config& config, const fs::path& seq,
              const fs::path& recon_dir, const fs::path& out,
              int max_frames) {
  const SequenceReader reader(seq);
  const TrackRun run = run_tracking(config, reader, recon_dir, max_frames);

  std::vector<StageTimings> timings;
  StageTimings mean{};
  int tracked = 0;
  for (const auto& r : run.results) {
    timings.push_back(r.timings);
    if (!r.patient_pose) continue;
    ++tracked;
    mean.marker_us += r.timings.marker_us;
    mean.cloud_us += r.timings.cloud_us;
    mean.visibility_us += r.timings.visibility_us;
    mean.crop_us += r.timings.crop_us;
    mean.icp_us += r.timings.icp_us;
    mean.total_us += r.timings.total_us;
  }
  if (tracked == 0) throw AlignmentFailed("bench: no frame was tracked");
  const double fps = measure_fps(timings);

  json j;
  j["mean_fps"] = fps;
  j["tracked_frames"] = tracked;
  j["stage_means_us"] = {
      {"marker", mean.marker_us / tracked},
      {"cloud", mean.cloud_us / tracked},
      {"visibility", mean.visibility_us / tracked},
      {"crop", mean.crop_us / tracked},
      {"icp", mean.icp_us / tracked},
      {"total", mean.total_us / tracked},
  };
  if (!out.empty()) {
    std::ofstream(out) << j.dump(2) << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rigid-body patient tracking toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  bool xtion_profile = false;
  app.add_option("--config", config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  app.add_flag("--xtion-profile", xtion_profile,
               "use the Xtion parameter profile (d_star 0.02, d_nei 0.10)");

  // simulate
  auto* sim = app.add_subcommand("simulate",
                                 "generate a synthetic RGB-D/marker sequence");
  std::string sim_out;
  int sim_frames = 300;
  bool sim_force = false;
  std::string body_motion = "static";
  double camera_span = 120.0, camera_radius = 1.1, camera_height = 1.3;
  double motion_mm = 40.0, motion_deg = 8.0;
  int motion_segments = 5, resolution = 72;
  sim->add_option("--out", sim_out, "output sequence directory")->required();
  sim->add_option("--frames", sim_frames, "frame count");
  sim->add_flag("--force", sim_force, "overwrite an existing directory");
  sim->add_option("--body-motion", body_motion,
                  "'static' or 'script' (seeded waypoint motion)");
  sim->add_option("--camera-span", camera_span, "orbit sweep in degrees");
  sim->add_option("--camera-radius", camera_radius, "orbit radius in meters");
  sim->add_option("--camera-height", camera_height, "camera height in meters");
  sim->add_option("--motion-amplitude-mm", motion_mm,
                  "body motion translation amplitude");
  sim->add_option("--motion-amplitude-deg", motion_deg,
                  "body motion rotation amplitude");
  sim->add_option("--motion-segments", motion_segments,
                  "piecewise-constant-velocity segments");
  sim->add_option("--resolution", resolution, "mannequin mesh resolution");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct",
                                 "temporary body reconstruction from a sequence");
  std::string rec_seq, rec_out;
  rec->add_option("--seq", rec_seq, "sequence directory")->required();
  rec->add_option("--out", rec_out, "reconstruction output directory")
      ->required();

  // align
  auto* ali = app.add_subcommand("align",
                                 "refine the manual reference-model alignment");
  std::string ali_seq, ali_recon;
  ali->add_option("--seq", ali_seq, "sequence directory")->required();
  ali->add_option("--recon", ali_recon, "reconstruction directory")->required();

  // track
  auto* trk = app.add_subcommand("track", "per-frame patient tracking");
  std::string trk_seq, trk_recon, trk_out;
  int trk_max_frames = 0;
  trk->add_option("--seq", trk_seq, "sequence directory")->required();
  trk->add_option("--recon", trk_recon, "reconstruction directory")->required();
  trk->add_option("--out", trk_out, "results CSV path")->required();
  trk->add_option("--max-frames", trk_max_frames, "track only the first N frames");

  // evaluate
  auto* eva = app.add_subcommand("evaluate",
                                 "split-half evaluation against ground truth");
  std::vector<std::string> eva_results, eva_gt;
  std::string eva_out;
  eva->add_option("--results", eva_results, "track results CSV (repeatable)")
      ->required();
  eva->add_option("--gt", eva_gt, "ground truth CSV (repeatable)")->required();
  eva->add_option("--out", eva_out, "evaluation output directory")->required();

  // bench
  auto* ben = app.add_subcommand("bench", "tracking throughput measurement");
  std::string ben_seq, ben_recon, ben_out;
  int ben_max_frames = 0;
  ben->add_option("--seq", ben_seq, "sequence directory")->required();
  ben->add_option("--recon", ben_recon, "reconstruction directory")->required();
  ben->add_option("--out", ben_out, "benchmark JSON path");
  ben->add_option("--max-frames", ben_max_frames, "track only the first N frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitBadInput;
  }

  try {
    Config config = load_config(config_path);
    if (xtion_profile) apply_xtion_profile(config);

    if (sim->parsed()) {
      return cmd_simulate(config, sim_out, sim_frames, sim_force, body_motion,
                          camera_span, camera_radius, camera_height, motion_mm,
                          motion_deg, motion_segments, resolution);
    }
    if (rec->parsed()) return cmd_reconstruct(config, rec_seq, rec_out);
    if (ali->parsed()) return cmd_align(config, ali_seq, ali_recon);
    if (trk->parsed()) {
      return cmd_track(config, trk_seq, trk_recon, trk_out, trk_max_frames);
    }
    if (eva->parsed()) return cmd_evaluate(eva_results, eva_gt, eva_out);
    if (ben->parsed()) {
      return cmd_bench(config, ben_seq, ben_recon, ben_out, ben_max_frames);
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAlgorithm;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAlgorithm;
  }
  return 0;
}
