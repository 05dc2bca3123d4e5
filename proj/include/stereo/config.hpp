#pragma once

#include <iosfwd>
#include <string>

#include "stereo/trainer.hpp"
#include "stereo/tsdf.hpp"

namespace stereo {

// Synthetic dataset knobs that live outside NetworkConfig/TrainConfig.
struct DataConfig {
  int train_count = 50;
  int eval_count = 10;
  int height = 64, width = 64;
  bool integer_disparity = false;
  real reflective_fraction = real(0.15);
  real focal = 0;     // 0 = default rig for the image size
  real baseline = real(0.1);
  void validate() const;
};

// TSDF fusion knobs; truncation 0 means the usual 4 * voxel_size default.
struct FuseConfig {
  real voxel_size = real(0.01);
  int nx = 64, ny = 64, nz = 64;
  std::array<real, 3> origin{0, 0, 0};
  real truncation = 0;
  real weight_cap = 100;
  bool use_occlusion = false;
  real occlusion_threshold = real(0.5);
  int frames = 20;
  void validate() const;
};

// Everything one experiment needs, parsed from a line-oriented
// `[section]` / `key = value` file so runs diff cleanly in logs.
struct PipelineConfig {
  NetworkConfig network;
  TrainConfig train;
  DataConfig data;
  FuseConfig fuse;
  void validate() const;
};

// Unknown sections or keys, malformed values, and duplicate `=`-less lines
// all raise std::invalid_argument naming the offending line.
PipelineConfig parse_config(std::istream& in);
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

// `--set section.key=value` support; same validation as the file parser.
void apply_override(PipelineConfig& cfg, const std::string& key,
                    const std::string& value);

// Fully resolved echo; parsing it back reproduces `cfg` exactly.
std::string render_config(const PipelineConfig& cfg);

}  // namespace stereo
