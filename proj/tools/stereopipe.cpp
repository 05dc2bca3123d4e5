#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "stereo/config.hpp"
#include "stereo/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace stereo;

namespace {

struct Run {
  std::string config_path;
  std::string out = "out";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  int threads = 0;
  std::vector<std::string> sets;
};

void attach_common(CLI::App* cmd, Run& run) {
  cmd->add_option("--config", run.config_path, "config file (line-oriented key = value)");
  cmd->add_option("--out", run.out, "output directory")->capture_default_str();
  run.seed_opt = cmd->add_option("--seed", run.seed, "override train.seed");
  cmd->add_option("--threads", run.threads, "worker threads (0 = keep default)");
  cmd->add_option("--set", run.sets, "override, e.g. --set network.stages=2")
      ->take_all();
}

// Parse file + overrides, apply thread count, create the output directory,
// and drop the resolved-config echo so any run can be reproduced from it.
PipelineConfig resolve(const Run& run) {
  PipelineConfig cfg =
      run.config_path.empty() ? PipelineConfig{} : load_config(run.config_path);
  for (const std::string& s : run.sets) {
    size_t eq = s.find('=');
    if (eq == std::string::npos) fail_config("--set expects key=value, got: " + s);
    apply_override(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (run.seed_opt && run.seed_opt->count()) cfg.train.seed = run.seed;
  cfg.validate();
  if (run.threads > 0) set_thread_count(run.threads);
  fs::create_directories(run.out);
  std::ofstream echo(fs::path(run.out) / "resolved.cfg", std::ios::binary);
  echo << render_config(cfg);
  return cfg;
}

CameraRig rig_for(const PipelineConfig& cfg) {
  CameraRig rig = default_rig(cfg.data.height, cfg.data.width);
  if (cfg.data.focal > 0) rig.focal = cfg.data.focal;
  rig.baseline = cfg.data.baseline;
  return rig;
}

std::vector<StereoSample> train_set(const PipelineConfig& cfg, const CameraRig& rig) {
  return make_dataset(cfg.train.seed, cfg.data.train_count, cfg.data.height,
                      cfg.data.width, cfg.network.max_disparity, rig,
                      cfg.data.integer_disparity, cfg.data.reflective_fraction);
}

std::vector<StereoSample> eval_set_of(const PipelineConfig& cfg, const CameraRig& rig) {
  return make_dataset(cfg.train.seed + 1, cfg.data.eval_count, cfg.data.height,
                      cfg.data.width, cfg.network.max_disparity, rig,
                      cfg.data.integer_disparity, cfg.data.reflective_fraction);
}

Tensor mask_tensor(const std::vector<std::uint8_t>& m, int H, int W) {
  Tensor t = Tensor::zeros({H, W});
  for (size_t i = 0; i < m.size(); ++i) t.values()[i] = real(m[i]);
  return t;
}

std::string zero_pad(int i, int width = 4) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << i;
  return s.str();
}

int cmd_gen_data(const Run& run) {
  PipelineConfig cfg = resolve(run);
  const CameraRig rig = rig_for(cfg);
  const fs::path out(run.out);
  auto write_split = [&](const std::string& name,
                         const std::vector<StereoSample>& set) {
    std::vector<SampleEntry> entries;
    for (size_t i = 0; i < set.size(); ++i) {
      const StereoSample& s = set[i];
      const int H = s.disp_left.height(), W = s.disp_left.width();
      SampleEntry e;
      const std::string base = name + "_" + zero_pad(int(i));
      e.image_left = base + "_left.ppm";
      e.image_right = base + "_right.ppm";
      e.disp_left = base + "_displ.pfm";
      e.disp_right = base + "_dispr.pfm";
      e.occ_left = base + "_occl.pfm";
      e.occ_right = base + "_occr.pfm";
      e.exclusion = base + "_excl.pfm";
      write_ppm((out / e.image_left).string(), s.image_left);
      write_ppm((out / e.image_right).string(), s.image_right);
      write_pfm((out / e.disp_left).string(), s.disp_left.disp);
      write_pfm((out / e.disp_right).string(), s.disp_right.disp);
      write_pfm((out / e.occ_left).string(), s.occ_left.prob);
      write_pfm((out / e.occ_right).string(), s.occ_right.prob);
      write_pfm((out / e.exclusion).string(), mask_tensor(s.exclusion, H, W));
      entries.push_back(e);
    }
    write_manifest((out / (name + ".txt")).string(), entries);
  };
  write_split("train", train_set(cfg, rig));
  write_split("eval", eval_set_of(cfg, rig));
  std::cerr << "wrote " << cfg.data.train_count << "+" << cfg.data.eval_count
            << " samples to " << run.out << "\n";
  return 0;
}

int cmd_train(const Run& run) {
  PipelineConfig cfg = resolve(run);
  const CameraRig rig = rig_for(cfg);
  TrainConfig tc = cfg.train;
  if (tc.checkpoint_path.empty())
    tc.checkpoint_path = (fs::path(run.out) / "best.ckpt").string();
  DilatedStereoNet net(cfg.network, cfg.train.seed);
  std::ofstream log(fs::path(run.out) / "train_log.txt", std::ios::binary);
  TrainResult res = fit(net, train_set(cfg, rig), eval_set_of(cfg, rig), tc,
                        nullptr, 0, &log);
  net.save((fs::path(run.out) / "final.ckpt").string());
  MetricReport rep = evaluate(net, eval_set_of(cfg, rig));
  std::ofstream csv(fs::path(run.out) / "metrics.csv", std::ios::binary);
  csv << rep.csv();
  std::cout << rep.csv();
  if (res.diverged) {
    std::cerr << "training diverged after " << res.steps << " steps\n";
    return 1;
  }
  std::cerr << "best held-out EPE " << res.best_epe << " px over " << res.steps
            << " steps\n";
  return 0;
}

ModelOutput predict_pair(DilatedStereoNet& net, const std::string& left_path,
                         const std::string& right_path) {
  Tensor left = read_ppm(left_path), right = read_ppm(right_path);
  const int H = left.dim(1), W = left.dim(2);
  return net.forward(reshape(normalize_image(left), {1, 3, H, W}),
                     reshape(normalize_image(right), {1, 3, H, W}), BnMode::kBatchStats);
}

int cmd_predict(const Run& run, const std::string& model, const std::string& left,
                const std::string& right, bool refine_only) {
  resolve(run);
  DilatedStereoNet net = DilatedStereoNet::load(model);
  ModelOutput mo = predict_pair(net, left, right);
  const fs::path out(run.out);
  if (!refine_only) {
    for (size_t k = 0; k < mo.disp_left.size(); ++k)
      write_pfm((out / ("d" + std::to_string(k + 1) + ".pfm")).string(),
                mo.disp_left[k].disp);
  }
  if (net.config().refinement) {
    write_pfm((out / "dref.pfm").string(), mo.refined.disp);
    write_pfm((out / "occ.pfm").string(), mo.occlusion.prob);
    write_pfm((out / "ep.pfm").string(), mo.e_p);
    write_pfm((out / "eg.pfm").string(), mo.e_g);
  } else if (refine_only) {
    fail_config("this checkpoint was trained without the refinement head");
  }
  return 0;
}

// Fuses depth from a fixed room scene viewed from `frames` jittered camera
// positions with known poses; depth comes from the model when given,
// otherwise from ground truth.
int cmd_fuse(const Run& run, const std::string& model) {
  PipelineConfig cfg = resolve(run);
  const int H = cfg.data.height, W = cfg.data.width;
  const int D = cfg.network.max_disparity;
  const CameraRig rig = rig_for(cfg);
  std::array<real, 3> bmin, bmax;
  SceneSpec room = room_scene(rig, H, W, D, &bmin, &bmax);
  room.validate(rig);

  FuseConfig fc = cfg.fuse;
  // Default origin means: fit the grid to the room automatically.
  if (fc.origin == std::array<real, 3>{0, 0, 0}) {
    fc.origin = bmin;
    fc.voxel_size = 0;
    for (int a = 0; a < 3; ++a) {
      const int n = a == 0 ? fc.nx : a == 1 ? fc.ny : fc.nz;
      fc.voxel_size = std::max(fc.voxel_size, (bmax[a] - bmin[a]) / real(n - 1));
    }
  }
  TsdfVolume vol = TsdfVolume::make(fc.origin, fc.voxel_size, fc.nx, fc.ny, fc.nz,
                                    fc.truncation, fc.weight_cap);

  std::unique_ptr<DilatedStereoNet> net;
  if (!model.empty()) net = std::make_unique<DilatedStereoNet>(DilatedStereoNet::load(model));

  Rng rng(cfg.train.seed * 0x9E3779B97f4A7C15ull + 17);
  const real jitter = real(0.03) * (bmax[2] - bmin[2]);
  for (int f = 0; f < fc.frames; ++f) {
    std::array<real, 3> p{rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter),
                          rng.uniform(-jitter, jitter)};
    if (f == 0) p = {0, 0, 0};
    auto [spec, pose] = translate_scene(room, p);
    StereoSample s = generate_scene(spec, rig, H, W);
    DisparityField disp = s.disp_left;
    const OcclusionMap* occ = fc.use_occlusion ? &s.occ_left : nullptr;
    OcclusionMap pred_occ;
    if (net) {
      ModelOutput mo = net->forward(
          reshape(normalize_image(s.image_left), {1, 3, H, W}),
          reshape(normalize_image(s.image_right), {1, 3, H, W}), BnMode::kBatchStats);
      disp = net->config().refinement ? mo.refined : mo.disp_left.back();
      if (fc.use_occlusion && net->config().refinement) {
        pred_occ = mo.occlusion;
        occ = &pred_occ;
      }
    }
    integrate(vol, disparity_to_depth(disp, rig), rig, pose, occ,
              fc.occlusion_threshold);
  }
  TriMesh mesh = extract_mesh(vol);
  if (mesh.vertices.empty()) fail_config("fusion produced an empty mesh");
  write_ply((fs::path(run.out) / "mesh.ply").string(), mesh);
  std::cerr << "fused " << fc.frames << " frames -> " << mesh.vertices.size()
            << " vertices, " << mesh.triangles.size() << " triangles\n";
  return 0;
}

int cmd_eval(const Run& run, const std::string& model, const std::string& mesh_path,
             const std::string& ref_path, const std::string& disp_path,
             const std::string& gt_path) {
  PipelineConfig cfg = resolve(run);
  if (!mesh_path.empty()) {
    if (ref_path.empty()) fail_config("--mesh needs --ref");
    const real rmse = point_to_plane_rmse(read_ply(mesh_path), read_ply(ref_path));
    std::cout << "point_to_plane_rmse," << std::setprecision(10) << rmse << "\n";
    return 0;
  }
  if (!disp_path.empty()) {
    if (gt_path.empty()) fail_config("--disp needs --gt");
    Tensor pred = read_pfm(disp_path), gt = read_pfm(gt_path);
    const int H = gt.dim(0), W = gt.dim(1);
    SamplePrediction p;
    p.stages.push_back(DisparityField::dense(pred, View::kLeft));
    StereoSample s;
    s.disp_left = DisparityField::dense(gt, View::kLeft);
    s.occ_left.prob = Tensor::zeros({H, W});
    s.exclusion.assign(size_t(H) * W, 0);
    s.rig = default_rig(H, W);
    std::cout << compute_metrics({p}, {s}).csv();
    return 0;
  }
  if (model.empty()) fail_config("eval needs --mesh/--ref, --disp/--gt, or --model");
  DilatedStereoNet net = DilatedStereoNet::load(model);
  MetricReport rep = evaluate(net, eval_set_of(cfg, rig_for(cfg)));
  std::ofstream csv(fs::path(run.out) / "metrics.csv", std::ios::binary);
  csv << rep.csv();
  std::cout << rep.csv();
  return 0;
}

int cmd_gradcheck(const Run& run) {
  PipelineConfig cfg = resolve(run);
  auto results = run_gradcheck_suite(cfg.train.seed ? cfg.train.seed : 7);
  bool ok = true;
  std::cout << "op,max_rel_err,pass\n";
  for (const auto& r : results) {
    std::cout << r.name << "," << std::setprecision(6) << r.max_rel_err << ","
              << (r.pass ? "pass" : "FAIL") << "\n";
    ok = ok && r.pass;
  }
  if (!ok) {
    std::cerr << "gradient check failed\n";
    return 1;
  }
  return 0;
}

int cmd_ablate(const Run& run) {
  PipelineConfig cfg = resolve(run);
  const CameraRig rig = rig_for(cfg);
  std::vector<std::pair<std::string, NetworkConfig>> variants;
  NetworkConfig base = cfg.network;
  base.filter_dilations = {1};
  variants.emplace_back("dilation_1", base);
  base.filter_dilations = {1, 2};
  variants.emplace_back("dilation_1_2", base);
  base.filter_dilations = {1, 2, 4};
  variants.emplace_back("dilation_1_2_4", base);
  std::ofstream log(fs::path(run.out) / "ablate_log.txt", std::ios::binary);
  auto rows = ablation_sweep(variants, train_set(cfg, rig), eval_set_of(cfg, rig),
                             cfg.train, &log);
  const std::string csv = ablation_csv(rows);
  std::ofstream out(fs::path(run.out) / "ablation.csv", std::ios::binary);
  out << csv;
  std::cout << csv;
  return 0;
}

int cmd_count_macs(const Run& run) {
  PipelineConfig cfg = resolve(run);
  DilatedStereoNet net(cfg.network, 0);
  const MacCount mc = net.count_macs(cfg.data.height, cfg.data.width);
  const MacCount rf =
      count_macs_equal_rf_filter(cfg.network, cfg.data.height, cfg.data.width);
  std::cout << "resolution," << cfg.data.width << "x" << cfg.data.height << "\n";
  std::cout << "macs_2d," << mc.conv2d << "\n";
  std::cout << "macs_3d," << mc.conv3d << "\n";
  std::cout << "macs_total," << mc.total() << "\n";
  std::cout << "share_3d_pct," << std::setprecision(4)
            << 100.0 * double(mc.conv3d) / double(mc.total()) << "\n";
  std::cout << "equal_rf_filter_macs_3d," << rf.conv3d << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereo depth pipeline: synthetic data, training, prediction, fusion"};
  app.require_subcommand(1);

  Run run[9];
  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic stereo dataset");
  attach_common(gen, run[0]);
  CLI::App* train = app.add_subcommand("train", "train on synthetic data");
  attach_common(train, run[1]);

  CLI::App* predict = app.add_subcommand("predict", "run a checkpoint on one pair");
  attach_common(predict, run[2]);
  std::string p_model, p_left, p_right;
  predict->add_option("--model", p_model, "checkpoint")->required();
  predict->add_option("--left", p_left, "left image (ppm)")->required();
  predict->add_option("--right", p_right, "right image (ppm)")->required();

  CLI::App* refine = app.add_subcommand("refine", "refined disparity + occlusion only");
  attach_common(refine, run[3]);
  std::string r_model, r_left, r_right;
  refine->add_option("--model", r_model, "checkpoint")->required();
  refine->add_option("--left", r_left, "left image (ppm)")->required();
  refine->add_option("--right", r_right, "right image (ppm)")->required();

  CLI::App* fuse = app.add_subcommand(
      "fuse", "TSDF-fuse room-scene depth (ground truth, or --model predictions)");
  attach_common(fuse, run[4]);
  std::string f_model;
  fuse->add_option("--model", f_model, "checkpoint (omit to fuse ground truth)");

  CLI::App* ev = app.add_subcommand("eval", "metrics for a checkpoint, a disparity "
                                            "PFM against ground truth, or mesh RMSE");
  attach_common(ev, run[5]);
  std::string e_model, e_mesh, e_ref, e_disp, e_gt;
  ev->add_option("--model", e_model, "checkpoint to evaluate");
  ev->add_option("--mesh", e_mesh, "mesh to score");
  ev->add_option("--ref", e_ref, "reference mesh");
  ev->add_option("--disp", e_disp, "predicted disparity pfm");
  ev->add_option("--gt", e_gt, "ground-truth disparity pfm");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  attach_common(grad, run[6]);
  CLI::App* abl = app.add_subcommand("ablate", "filter-dilation sweep");
  attach_common(abl, run[7]);
  CLI::App* macs = app.add_subcommand("count-macs", "analytic MAC audit");
  attach_common(macs, run[8]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(run[0]);
    if (train->parsed()) return cmd_train(run[1]);
    if (predict->parsed()) return cmd_predict(run[2], p_model, p_left, p_right, false);
    if (refine->parsed()) return cmd_predict(run[3], r_model, r_left, r_right, true);
    if (fuse->parsed()) return cmd_fuse(run[4], f_model);
    if (ev->parsed()) return cmd_eval(run[5], e_model, e_mesh, e_ref, e_disp, e_gt);
    if (grad->parsed()) return cmd_gradcheck(run[6]);
    if (abl->parsed()) return cmd_ablate(run[7]);
    if (macs->parsed()) return cmd_count_macs(run[8]);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
