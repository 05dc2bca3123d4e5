#pragma once

#include <array>
#include <string>
#include <vector>

#include "stereo/tensor.hpp"

namespace stereo {

// Triangle soup with optional per-vertex normals and error scalars.
struct TriMesh {
  std::vector<std::array<real, 3>> vertices;
  std::vector<std::array<real, 3>> normals;    // empty or one per vertex
  std::vector<real> vertex_error;              // empty or one per vertex
  std::vector<std::array<int, 3>> triangles;
};

// PFM: "Pf" (1 channel) / "PF" (3 channels), width height, scale whose sign
// encodes endianness (negative = little-endian), then float32 scanlines
// bottom-up. Tensors are [H,W] or [3,H,W]. Round trip is lossless at float32.
void write_pfm(const std::string& path, const Tensor& image);
Tensor read_pfm(const std::string& path);

// Binary PPM (P6), maxval 255. Tensor is [3,H,W] with values in [0,1];
// writing clamps, reading maps back to [0,1].
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// ASCII PLY. Normals and the per-vertex "error" property are written when
// present and recovered on read.
void write_ply(const std::string& path, const TriMesh& mesh);
TriMesh read_ply(const std::string& path);

// Line-oriented dataset index: one sample per line, seven whitespace-
// separated relative paths.
struct SampleEntry {
  std::string image_left, image_right;
  std::string disp_left, disp_right;
  std::string occ_left, occ_right;
  std::string exclusion;
};

void write_manifest(const std::string& path, const std::vector<SampleEntry>& entries);
std::vector<SampleEntry> read_manifest(const std::string& path);

}  // namespace stereo
