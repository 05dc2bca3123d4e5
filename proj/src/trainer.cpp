#include "stereo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace stereo {

void TrainConfig::validate() const {
  if (epochs < 1) fail_config("epochs must be >= 1");
  if (batch_size < 1) fail_config("batch size must be >= 1");
  if (crop_h < 8 || crop_w < 8 || crop_h % 8 != 0 || crop_w % 8 != 0)
    fail_config("crop extents must be positive multiples of 8");
  if (learning_rate < 0) fail_config("learning rate must be >= 0");
  if (eval_every < 1) fail_config("eval cadence must be >= 1");
  weights.validate();
}

CameraRig default_rig(int H, int W) {
  return CameraRig{real(W), real(0.1), real(W - 1) / 2, real(H - 1) / 2};
}

std::vector<StereoSample> make_dataset(std::uint64_t seed, int count, int H, int W,
                                       int max_disparity, const CameraRig& rig,
                                       bool integer_disparity, real reflective_fraction) {
  if (count < 1) fail_config("dataset needs at least one sample");
  std::vector<StereoSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 0x100000001b3ull + static_cast<std::uint64_t>(i);
    out.push_back(generate_scene(
        random_scene_spec(s, rig, H, W, max_disparity, integer_disparity,
                          reflective_fraction),
        rig, H, W));
  }
  return out;
}

namespace {

Tensor crop_hw(const Tensor& t, int y0, int x0, int h, int w) {
  // works for [H,W] and [C,H,W]
  const int nd = t.ndim();
  const int C = nd == 3 ? t.dim(0) : 1;
  const int H = t.dim(nd - 2), W = t.dim(nd - 1);
  std::vector<real> v(static_cast<size_t>(C) * h * w);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        v[(static_cast<size_t>(c) * h + y) * w + x] =
            t.values()[(static_cast<size_t>(c) * H + (y0 + y)) * W + (x0 + x)];
  return Tensor::from(nd == 3 ? std::vector<int>{C, h, w} : std::vector<int>{h, w},
                      std::move(v));
}

std::vector<std::uint8_t> crop_mask(const std::vector<std::uint8_t>& m, int W, int y0,
                                    int x0, int h, int w) {
  std::vector<std::uint8_t> out(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<size_t>(y) * w + x] =
          m[static_cast<size_t>(y0 + y) * W + (x0 + x)];
  return out;
}

}  // namespace

StereoSample crop_sample(const StereoSample& s, int y0, int x0, int h, int w) {
  const int H = s.disp_left.height(), W = s.disp_left.width();
  if (y0 < 0 || x0 < 0 || y0 + h > H || x0 + w > W)
    fail_shape("crop window falls outside the sample");
  StereoSample c;
  c.image_left = crop_hw(s.image_left, y0, x0, h, w);
  c.image_right = crop_hw(s.image_right, y0, x0, h, w);
  c.clean_left = crop_hw(s.clean_left, y0, x0, h, w);
  c.disp_left = DisparityField{crop_hw(s.disp_left.disp, y0, x0, h, w),
                               crop_mask(s.disp_left.valid, W, y0, x0, h, w),
                               View::kLeft};
  c.disp_right = DisparityField{crop_hw(s.disp_right.disp, y0, x0, h, w),
                                crop_mask(s.disp_right.valid, W, y0, x0, h, w),
                                View::kRight};
  c.occ_left = OcclusionMap{crop_hw(s.occ_left.prob, y0, x0, h, w)};
  c.occ_right = OcclusionMap{crop_hw(s.occ_right.prob, y0, x0, h, w)};
  c.exclusion = crop_mask(s.exclusion, W, y0, x0, h, w);
  c.rig = s.rig;
  c.rig.cx -= real(x0);  // keep the principal point on the same scene ray
  c.rig.cy -= real(y0);
  c.pose = s.pose;
  return c;
}

namespace {

Tensor flip_rows(const Tensor& t) {
  const auto& sh = t.shape();
  const int W = sh.back(), H = sh[sh.size() - 2];
  Tensor out = Tensor::zeros(sh);
  const size_t planes = t.values().size() / (static_cast<size_t>(H) * W);
  for (size_t p = 0; p < planes; ++p)
    for (int y = 0; y < H; ++y)
      std::copy_n(t.values().begin() + (p * H + static_cast<size_t>(y)) * W, W,
                  out.values().begin() + (p * H + static_cast<size_t>(H - 1 - y)) * W);
  return out;
}

std::vector<std::uint8_t> flip_rows(const std::vector<std::uint8_t>& m, int H, int W) {
  std::vector<std::uint8_t> out(m.size());
  for (int y = 0; y < H; ++y)
    std::copy_n(m.begin() + static_cast<size_t>(y) * W, W,
                out.begin() + static_cast<size_t>(H - 1 - y) * W);
  return out;
}

// Rectified stereo is symmetric under a vertical mirror of both views:
// disparity and occlusion are unchanged, only the row order flips.
StereoSample flip_sample_vertical(const StereoSample& s) {
  const int H = s.disp_left.height(), W = s.disp_left.width();
  StereoSample f;
  f.image_left = flip_rows(s.image_left);
  f.image_right = flip_rows(s.image_right);
  f.clean_left = flip_rows(s.clean_left);
  f.disp_left = DisparityField{flip_rows(s.disp_left.disp),
                               flip_rows(s.disp_left.valid, H, W), View::kLeft};
  f.disp_right = DisparityField{flip_rows(s.disp_right.disp),
                                flip_rows(s.disp_right.valid, H, W), View::kRight};
  f.occ_left = OcclusionMap{flip_rows(s.occ_left.prob)};
  f.occ_right = OcclusionMap{flip_rows(s.occ_right.prob)};
  f.exclusion = flip_rows(s.exclusion, H, W);
  f.rig = s.rig;
  f.rig.cy = real(H - 1) - s.rig.cy;
  f.pose = s.pose;
  return f;
}

struct StageAccum {
  real abs_sum = 0;
  i64 n = 0, g1 = 0, g2 = 0, g3 = 0;
};

void accumulate_stage(StageAccum& a, const DisparityField& pred,
                      const DisparityField& gt,
                      const std::vector<std::uint8_t>& exclusion) {
  const int H = gt.height(), W = gt.width();
  if (pred.height() != H || pred.width() != W)
    fail_shape("prediction and ground truth extents differ");
  std::vector<real> err;
  err.reserve(static_cast<size_t>(H) * W);
  for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) {
    if (!gt.valid[i] || (!exclusion.empty() && exclusion[i])) continue;
    const real e = std::abs(pred.disp.values()[i] - gt.disp.values()[i]);
    err.push_back(e);
    a.g1 += e > real(1);
    a.g2 += e > real(2);
    a.g3 += e > real(3);
  }
  a.abs_sum += pairwise_sum(err);
  a.n += static_cast<i64>(err.size());
}

StageMetrics finalize_stage(const StageAccum& a) {
  if (a.n == 0) fail_state("metric domain is empty (every pixel masked out)");
  StageMetrics m;
  m.epe = a.abs_sum / real(a.n);
  m.gt1 = real(100) * real(a.g1) / real(a.n);
  m.gt2 = real(100) * real(a.g2) / real(a.n);
  m.gt3 = real(100) * real(a.g3) / real(a.n);
  return m;
}

}  // namespace

MetricReport compute_metrics(const std::vector<SamplePrediction>& preds,
                             const std::vector<StereoSample>& gt) {
  if (preds.empty() || preds.size() != gt.size())
    fail_config("metric pass needs one prediction per sample");
  const size_t K = preds[0].stages.size();
  if (K == 0) fail_config("predictions carry no stages");
  std::vector<StageAccum> acc(K);
  StageAccum ref_acc;
  i64 tp = 0, fp = 0, fn = 0;
  std::vector<real> normal_err;
  MetricReport rep;
  rep.has_refined = preds[0].has_refined;
  rep.has_occlusion = preds[0].has_occlusion;
  for (size_t s = 0; s < preds.size(); ++s) {
    const SamplePrediction& p = preds[s];
    if (p.stages.size() != K || p.has_refined != rep.has_refined ||
        p.has_occlusion != rep.has_occlusion)
      fail_config("predictions disagree on stage count or optional outputs");
    for (size_t k = 0; k < K; ++k)
      accumulate_stage(acc[k], p.stages[k], gt[s].disp_left, gt[s].exclusion);
    const DisparityField& fin = p.has_refined ? p.refined : p.stages.back();
    if (p.has_refined)
      accumulate_stage(ref_acc, p.refined, gt[s].disp_left, gt[s].exclusion);
    if (p.has_occlusion) {
      const auto& pr = p.occlusion.prob.values();
      const auto& gv = gt[s].occ_left.prob.values();
      for (size_t i = 0; i < pr.size(); ++i) {
        const bool pp = pr[i] > real(0.5), gp = gv[i] > real(0.5);
        tp += pp && gp;
        fp += pp && !gp;
        fn += !pp && gp;
      }
    }
    DepthMap dp = disparity_to_depth(fin, gt[s].rig);
    DepthMap dg = disparity_to_depth(gt[s].disp_left, gt[s].rig);
    normal_err.push_back(normal_error_degrees(normals_from_depth(dp, gt[s].rig),
                                              normals_from_depth(dg, gt[s].rig)));
  }
  for (size_t k = 0; k < K; ++k) rep.stage.push_back(finalize_stage(acc[k]));
  if (rep.has_refined) rep.refined = finalize_stage(ref_acc);
  if (rep.has_occlusion) {
    rep.occ_precision = tp + fp == 0 ? real(100) : real(100) * real(tp) / real(tp + fp);
    rep.occ_recall = tp + fn == 0 ? real(100) : real(100) * real(tp) / real(tp + fn);
  }
  rep.normal_error_deg = pairwise_sum(normal_err) / real(normal_err.size());
  rep.pixels = acc.back().n;
  return rep;
}

std::string MetricReport::csv() const {
  std::ostringstream o;
  o.precision(10);
  o << "name,epe_px,gt1_pct,gt2_pct,gt3_pct\n";
  for (size_t k = 0; k < stage.size(); ++k)
    o << "d" << (k + 1) << "," << stage[k].epe << "," << stage[k].gt1 << ","
      << stage[k].gt2 << "," << stage[k].gt3 << "\n";
  if (has_refined)
    o << "refined," << refined.epe << "," << refined.gt1 << "," << refined.gt2 << ","
      << refined.gt3 << "\n";
  if (has_occlusion)
    o << "occlusion_precision_pct," << occ_precision << "\nocclusion_recall_pct,"
      << occ_recall << "\n";
  o << "normal_error_deg," << normal_error_deg << "\npixels," << pixels << "\n";
  return o.str();
}

namespace {

// one sample's forward pass and composed loss
LossReport sample_loss(DilatedStereoNet& net, const StereoSample& s,
                       const LossWeights& w, BnMode mode) {
  const int H = s.disp_left.height(), W = s.disp_left.width();
  Tensor il = reshape(normalize_image(s.image_left), {1, 3, H, W});
  Tensor ir = reshape(normalize_image(s.image_right), {1, 3, H, W});
  ModelOutput out = net.forward(il, ir, mode);
  std::vector<StageLoss> stages;
  for (size_t k = 0; k < out.disp_left.size(); ++k) {
    StageLoss l = stage_loss(out.disp_left[k], s.disp_left, &s.exclusion, w.huber_delta);
    StageLoss r = stage_loss(out.disp_right[k], s.disp_right, nullptr, w.huber_delta);
    StageLoss both;
    both.loss = scale(add(l.loss, r.loss), real(0.5));
    both.valid_pixels = l.valid_pixels + r.valid_pixels;
    stages.push_back(both);
  }
  Tensor lr, lo;
  const bool refined = net.config().refinement;
  if (refined) {
    lr = refinement_loss(out.refined, s.disp_left, &s.exclusion, w.huber_delta);
    lo = occlusion_loss(out.occlusion, s.occ_left);
  }
  return total_loss(stages, refined ? &lr : nullptr, refined ? &lo : nullptr, w);
}

SamplePrediction predict_sample(DilatedStereoNet& net, const StereoSample& s) {
  const int H = s.disp_left.height(), W = s.disp_left.width();
  Tensor il = reshape(normalize_image(s.image_left), {1, 3, H, W});
  Tensor ir = reshape(normalize_image(s.image_right), {1, 3, H, W});
  ModelOutput out = net.forward(il, ir, BnMode::kBatchStats);
  SamplePrediction p;
  for (auto& d : out.disp_left)
    p.stages.push_back(DisparityField::dense(
        Tensor::from(d.disp.shape(), d.disp.values()), View::kLeft));
  if (net.config().refinement) {
    p.refined = DisparityField::dense(
        Tensor::from(out.refined.disp.shape(), out.refined.disp.values()), View::kLeft);
    p.has_refined = true;
    p.occlusion = OcclusionMap{
        Tensor::from(out.occlusion.prob.shape(), out.occlusion.prob.values())};
    p.has_occlusion = true;
  }
  return p;
}

}  // namespace

MetricReport evaluate(DilatedStereoNet& net, const std::vector<StereoSample>& eval_set) {
  if (eval_set.empty()) fail_config("evaluation set is empty");
  std::vector<SamplePrediction> preds;
  preds.reserve(eval_set.size());
  for (const auto& s : eval_set) preds.push_back(predict_sample(net, s));
  return compute_metrics(preds, eval_set);
}

TrainResult fit(DilatedStereoNet& net, const std::vector<StereoSample>& train,
                const std::vector<StereoSample>& eval_set, const TrainConfig& cfg,
                AdamState* opt, int start_epoch, std::ostream* log) {
  cfg.validate();
  if (train.empty()) fail_config("training set is empty");
  AdamState local;
  AdamState& st = opt ? *opt : local;
  auto& params = net.parameters();

  TrainResult res;
  const int n = static_cast<int>(train.size());
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    // per-epoch stream so a resumed run replays the identical schedule
    Rng rng(cfg.seed * 0x9E3779B97f4A7C15ull + static_cast<std::uint64_t>(epoch) + 1);
    st.lr = cfg.learning_rate;
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(rng.uniform_int(0, i))]);

    for (int b = 0; b < n; b += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - b);
      for (auto& p : params) p.zero_grad();
      real loss_acc = 0;
      for (int j = 0; j < bs; ++j) {
        const StereoSample& full = train[static_cast<size_t>(order[static_cast<size_t>(b + j)])];
        const int H = full.disp_left.height(), W = full.disp_left.width();
        const int h = std::min(cfg.crop_h, H), ww = std::min(cfg.crop_w, W);
        const int y0 = static_cast<int>(rng.uniform_int(0, H - h));
        const int x0 = static_cast<int>(rng.uniform_int(0, W - ww));
        StereoSample s = (h == H && ww == W && y0 == 0 && x0 == 0)
                             ? crop_sample(full, 0, 0, H, W)
                             : crop_sample(full, y0, x0, h, ww);
        if (rng.uniform_int(0, 1)) s = flip_sample_vertical(s);
        LossReport rep = sample_loss(net, s, cfg.weights, BnMode::kTrain);
        if (!std::isfinite(rep.total_value)) {
          if (log) *log << "abort step=" << res.steps << " loss=" << rep.total_value
                        << " (non-finite)\n";
          res.diverged = true;
          return res;
        }
        backward(scale(rep.total, real(1) / real(bs)));
        loss_acc += rep.total_value / real(bs);
      }
      adam_step(params, st);
      res.step_loss.push_back(loss_acc);
      res.steps += 1;
      if (log) *log << "step=" << res.steps << " epoch=" << epoch
                    << " loss=" << loss_acc << "\n";
    }

    const bool last = epoch + 1 == cfg.epochs;
    if (!eval_set.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      MetricReport rep = evaluate(net, eval_set);
      const real epe = rep.final_stage().epe;
      res.eval_epe.push_back(epe);
      if (log) *log << "eval epoch=" << epoch << " epe=" << epe << "\n";
      if (epe < res.best_epe) {
        res.best_epe = epe;
        if (!cfg.checkpoint_path.empty()) net.save(cfg.checkpoint_path);
      }
    }
  }
  return res;
}

std::vector<AblationRow> ablation_sweep(
    const std::vector<std::pair<std::string, NetworkConfig>>& variants,
    const std::vector<StereoSample>& train, const std::vector<StereoSample>& eval_set,
    const TrainConfig& cfg, std::ostream* log) {
  if (variants.empty()) fail_config("ablation sweep needs at least one variant");
  std::vector<AblationRow> rows;
  for (const auto& [name, net_cfg] : variants) {
    if (log) *log << "variant " << name << "\n";
    DilatedStereoNet net(net_cfg, cfg.seed);
    TrainConfig c = cfg;
    c.checkpoint_path.clear();  // the sweep compares fresh runs, not checkpoints
    fit(net, train, eval_set, c, nullptr, 0, log);
    rows.push_back({name, evaluate(net, eval_set)});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream o;
  o.precision(10);
  o << "name,epe_px,gt1_pct,gt2_pct,gt3_pct,occ_precision_pct,occ_recall_pct,"
       "normal_error_deg\n";
  for (const auto& r : rows) {
    const StageMetrics& m = r.report.final_stage();
    o << r.name << "," << m.epe << "," << m.gt1 << "," << m.gt2 << "," << m.gt3 << ","
      << r.report.occ_precision << "," << r.report.occ_recall << ","
      << r.report.normal_error_deg << "\n";
  }
  return o.str();
}

}  // namespace stereo
