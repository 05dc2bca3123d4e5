#include "stereo/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace stereo {

void DataConfig::validate() const {
  if (train_count < 1 || eval_count < 1) fail_config("dataset counts must be >= 1");
  if (height < 8 || width < 8 || height % 8 || width % 8)
    fail_config("data extents must be multiples of 8, at least 8");
  if (!(reflective_fraction >= 0 && reflective_fraction <= 1))
    fail_config("reflective_fraction must lie in [0,1]");
  if (focal < 0) fail_config("focal must be >= 0 (0 = default rig)");
  if (!(baseline > 0)) fail_config("baseline must be positive");
}

void FuseConfig::validate() const {
  if (!(voxel_size > 0)) fail_config("voxel_size must be positive");
  if (nx < 2 || ny < 2 || nz < 2) fail_config("voxel grid needs >= 2 per axis");
  if (truncation < 0) fail_config("truncation must be >= 0 (0 = 4 voxels)");
  if (!(weight_cap >= 1)) fail_config("weight_cap must be >= 1");
  if (!(occlusion_threshold > 0 && occlusion_threshold < 1))
    fail_config("occlusion_threshold must lie in (0,1)");
  if (frames < 1) fail_config("frames must be >= 1");
}

void PipelineConfig::validate() const {
  network.validate();
  train.validate();
  data.validate();
  fuse.validate();
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

i64 to_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  i64 out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    fail_config("bad integer for " + key + ": '" + v + "'");
  }
  if (pos != v.size()) fail_config("bad integer for " + key + ": '" + v + "'");
  return out;
}

real to_real(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    fail_config("bad number for " + key + ": '" + v + "'");
  }
  if (pos != v.size()) fail_config("bad number for " + key + ": '" + v + "'");
  return real(out);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail_config("bad boolean for " + key + ": '" + v + "' (use true/false)");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(int(to_int(key, trim(item))));
  if (out.empty()) fail_config("empty list for " + key);
  return out;
}

std::vector<real> to_real_list(const std::string& key, const std::string& v) {
  std::vector<real> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_real(key, trim(item)));
  if (out.empty()) fail_config("empty list for " + key);
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

// One table drives the parser, --set overrides, and the resolved echo, so the
// three can't drift apart.
const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"network.feature_width",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.feature_width = int(to_int(k, v));
       }},
      {"network.repeats",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         auto r = to_int_list(k, v);
         if (r.size() != 3) fail_config(k + " needs exactly 3 entries");
         c.network.repeats = {r[0], r[1], r[2]};
       }},
      {"network.max_disparity",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.max_disparity = int(to_int(k, v));
       }},
      {"network.pool_grids",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.pool_grids = to_int_list(k, v);
       }},
      {"network.pool_rates",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.pool_rates = to_int_list(k, v);
       }},
      {"network.filter_dilations",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.filter_dilations = to_int_list(k, v);
       }},
      {"network.refine_dilations",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.refine_dilations = to_int_list(k, v);
       }},
      {"network.stages",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.stages = int(to_int(k, v));
       }},
      {"network.refinement",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.refinement = to_bool(k, v);
       }},
      {"network.use_photometric",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.use_photometric = to_bool(k, v);
       }},
      {"network.use_geometric",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.use_geometric = to_bool(k, v);
       }},
      {"network.pyramid_pooling",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.pyramid_pooling = to_bool(k, v);
       }},
      {"network.stop_gradient_refinement",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.network.stop_gradient_refinement = to_bool(k, v);
       }},
      {"train.epochs",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.epochs = int(to_int(k, v));
       }},
      {"train.batch_size",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.batch_size = int(to_int(k, v));
       }},
      {"train.learning_rate",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.learning_rate = to_real(k, v);
       }},
      {"train.crop_h",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.crop_h = int(to_int(k, v));
       }},
      {"train.crop_w",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.crop_w = int(to_int(k, v));
       }},
      {"train.seed",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.seed = std::uint64_t(to_int(k, v));
       }},
      {"train.eval_every",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.eval_every = int(to_int(k, v));
       }},
      {"train.checkpoint_path",
       [](PipelineConfig& c, const std::string&, const std::string& v) {
         c.train.checkpoint_path = v;
       }},
      {"train.stage_weights",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.weights.stage = to_real_list(k, v);
       }},
      {"train.lambda_refine",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.weights.lambda_refine = to_real(k, v);
       }},
      {"train.lambda_occlusion",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.weights.lambda_occlusion = to_real(k, v);
       }},
      {"train.huber_delta",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.train.weights.huber_delta = to_real(k, v);
       }},
      {"data.train_count",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.train_count = int(to_int(k, v));
       }},
      {"data.eval_count",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.eval_count = int(to_int(k, v));
       }},
      {"data.height",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.height = int(to_int(k, v));
       }},
      {"data.width",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.width = int(to_int(k, v));
       }},
      {"data.integer_disparity",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.integer_disparity = to_bool(k, v);
       }},
      {"data.reflective_fraction",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.reflective_fraction = to_real(k, v);
       }},
      {"data.focal",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.focal = to_real(k, v);
       }},
      {"data.baseline",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.data.baseline = to_real(k, v);
       }},
      {"fuse.voxel_size",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.voxel_size = to_real(k, v);
       }},
      {"fuse.nx",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.nx = int(to_int(k, v));
       }},
      {"fuse.ny",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.ny = int(to_int(k, v));
       }},
      {"fuse.nz",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.nz = int(to_int(k, v));
       }},
      {"fuse.origin",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         auto o = to_real_list(k, v);
         if (o.size() != 3) fail_config(k + " needs exactly 3 entries");
         c.fuse.origin = {o[0], o[1], o[2]};
       }},
      {"fuse.truncation",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.truncation = to_real(k, v);
       }},
      {"fuse.weight_cap",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.weight_cap = to_real(k, v);
       }},
      {"fuse.use_occlusion",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.use_occlusion = to_bool(k, v);
       }},
      {"fuse.occlusion_threshold",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.occlusion_threshold = to_real(k, v);
       }},
      {"fuse.frames",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.fuse.frames = int(to_int(k, v));
       }},
  };
  return table;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_real(real x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << double(x);
  return ss.str();
}

std::string join_reals(const std::vector<real>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_real(v[i]);
  }
  return out;
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_config("line " + std::to_string(lineno) +
                                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "network" && section != "train" && section != "data" &&
          section != "fuse")
        fail_config("line " + std::to_string(lineno) + ": unknown section [" +
                    section + "]");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail_config("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      fail_config("line " + std::to_string(lineno) + ": key before any [section]");
    std::string key = section + "." + trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    apply_override(cfg, key, value);
  }
  return cfg;
}

PipelineConfig parse_config_text(const std::string& text) {
  std::istringstream ss(text);
  return parse_config(ss);
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_config("cannot open config file: " + path);
  return parse_config(in);
}

void apply_override(PipelineConfig& cfg, const std::string& key,
                    const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) fail_config("unknown config key: " + key);
  it->second(cfg, key, value);
}

std::string render_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  const auto& n = cfg.network;
  out << "[network]\n";
  out << "feature_width = " << n.feature_width << "\n";
  out << "repeats = " << join_ints({n.repeats[0], n.repeats[1], n.repeats[2]}) << "\n";
  out << "max_disparity = " << n.max_disparity << "\n";
  out << "pool_grids = " << join_ints(n.pool_grids) << "\n";
  out << "pool_rates = " << join_ints(n.pool_rates) << "\n";
  out << "filter_dilations = " << join_ints(n.filter_dilations) << "\n";
  out << "refine_dilations = " << join_ints(n.refine_dilations) << "\n";
  out << "stages = " << n.stages << "\n";
  out << "refinement = " << bool_str(n.refinement) << "\n";
  out << "use_photometric = " << bool_str(n.use_photometric) << "\n";
  out << "use_geometric = " << bool_str(n.use_geometric) << "\n";
  out << "pyramid_pooling = " << bool_str(n.pyramid_pooling) << "\n";
  out << "stop_gradient_refinement = " << bool_str(n.stop_gradient_refinement) << "\n";
  const auto& t = cfg.train;
  out << "\n[train]\n";
  out << "epochs = " << t.epochs << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "learning_rate = " << fmt_real(t.learning_rate) << "\n";
  out << "crop_h = " << t.crop_h << "\n";
  out << "crop_w = " << t.crop_w << "\n";
  out << "seed = " << t.seed << "\n";
  out << "eval_every = " << t.eval_every << "\n";
  out << "checkpoint_path = " << t.checkpoint_path << "\n";
  out << "stage_weights = " << join_reals(t.weights.stage) << "\n";
  out << "lambda_refine = " << fmt_real(t.weights.lambda_refine) << "\n";
  out << "lambda_occlusion = " << fmt_real(t.weights.lambda_occlusion) << "\n";
  out << "huber_delta = " << fmt_real(t.weights.huber_delta) << "\n";
  const auto& d = cfg.data;
  out << "\n[data]\n";
  out << "train_count = " << d.train_count << "\n";
  out << "eval_count = " << d.eval_count << "\n";
  out << "height = " << d.height << "\n";
  out << "width = " << d.width << "\n";
  out << "integer_disparity = " << bool_str(d.integer_disparity) << "\n";
  out << "reflective_fraction = " << fmt_real(d.reflective_fraction) << "\n";
  out << "focal = " << fmt_real(d.focal) << "\n";
  out << "baseline = " << fmt_real(d.baseline) << "\n";
  const auto& f = cfg.fuse;
  out << "\n[fuse]\n";
  out << "voxel_size = " << fmt_real(f.voxel_size) << "\n";
  out << "nx = " << f.nx << "\n";
  out << "ny = " << f.ny << "\n";
  out << "nz = " << f.nz << "\n";
  out << "origin = " << join_reals({f.origin[0], f.origin[1], f.origin[2]}) << "\n";
  out << "truncation = " << fmt_real(f.truncation) << "\n";
  out << "weight_cap = " << fmt_real(f.weight_cap) << "\n";
  out << "use_occlusion = " << bool_str(f.use_occlusion) << "\n";
  out << "occlusion_threshold = " << fmt_real(f.occlusion_threshold) << "\n";
  out << "frames = " << f.frames << "\n";
  return out.str();
}

}  // namespace stereo
