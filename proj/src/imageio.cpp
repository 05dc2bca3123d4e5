#include "stereo/imageio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stereo {

namespace {

[[noreturn]] void fail_parse(const std::string& path, std::streamoff offset,
                             const std::string& what) {
  fail_config(path + ": parse error at byte " + std::to_string(offset) + ": " + what);
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) fail_config("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) fail_config("cannot open for reading: " + path);
  return f;
}

constexpr bool host_little_endian() {
  return std::endian::native == std::endian::little;
}

// Reads one whitespace-delimited token, skipping PFM-style leading whitespace.
std::string next_token(std::istream& f, const std::string& path) {
  std::string tok;
  if (!(f >> tok)) fail_parse(path, f.tellg(), "unexpected end of header");
  return tok;
}

int parse_int(const std::string& tok, std::istream& f, const std::string& path) {
  try {
    size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail_parse(path, f.tellg(), "expected an integer, got '" + tok + "'");
  }
}

}  // namespace

void write_pfm(const std::string& path, const Tensor& image) {
  int channels, H, W;
  if (image.ndim() == 2) {
    channels = 1;
    H = image.dim(0);
    W = image.dim(1);
  } else if (image.ndim() == 3 && image.dim(0) == 3) {
    channels = 3;
    H = image.dim(1);
    W = image.dim(2);
  } else {
    fail_shape("PFM expects a [H,W] or [3,H,W] tensor, got " + shape_str(image.shape()));
  }
  std::ofstream f = open_out(path, true);
  f << (channels == 1 ? "Pf" : "PF") << "\n" << W << " " << H << "\n";
  f << (host_little_endian() ? "-1.0" : "1.0") << "\n";
  const auto& v = image.values();
  std::vector<float> row(static_cast<size_t>(W) * channels);
  for (int y = H - 1; y >= 0; --y) {  // bottom-up scanlines
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < channels; ++c)
        row[static_cast<size_t>(x) * channels + c] =
            static_cast<float>(v[static_cast<size_t>((c * H + y) * W + x)]);
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) fail_config("write failed: " + path);
}

Tensor read_pfm(const std::string& path) {
  std::ifstream f = open_in(path, true);
  const std::string magic = next_token(f, path);
  int channels;
  if (magic == "Pf")
    channels = 1;
  else if (magic == "PF")
    channels = 3;
  else
    fail_parse(path, 0, "bad magic '" + magic + "'");
  const int W = parse_int(next_token(f, path), f, path);
  const int H = parse_int(next_token(f, path), f, path);
  if (W <= 0 || H <= 0) fail_parse(path, f.tellg(), "non-positive dimensions");
  const std::string scale_tok = next_token(f, path);
  double scale;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    fail_parse(path, f.tellg(), "bad scale '" + scale_tok + "'");
  }
  if (scale == 0) fail_parse(path, f.tellg(), "scale must be nonzero");
  const bool file_le = scale < 0;
  f.get();  // the single whitespace byte that terminates the header

  const size_t n = static_cast<size_t>(W) * H * channels;
  std::vector<float> raw(n);
  const std::streamoff data_at = f.tellg();
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<size_t>(f.gcount()) != n * sizeof(float))
    fail_parse(path, data_at + f.gcount(), "truncated pixel data");
  if (file_le != host_little_endian())
    for (float& x : raw) {
      std::uint32_t u;
      std::memcpy(&u, &x, 4);
      u = ((u & 0xFF) << 24) | ((u & 0xFF00) << 8) | ((u >> 8) & 0xFF00) | (u >> 24);
      std::memcpy(&x, &u, 4);
    }

  std::vector<int> shape = channels == 1 ? std::vector<int>{H, W}
                                         : std::vector<int>{3, H, W};
  Tensor out = Tensor::zeros(shape);
  auto& v = out.values();
  for (int y = 0; y < H; ++y) {
    const int fy = H - 1 - y;  // stored bottom-up
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < channels; ++c)
        v[static_cast<size_t>((c * H + y) * W + x)] = static_cast<real>(
            raw[(static_cast<size_t>(fy) * W + x) * channels + c]);
  }
  return out;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    fail_shape("PPM expects a [3,H,W] tensor, got " + shape_str(image.shape()));
  const int H = image.dim(1), W = image.dim(2);
  std::ofstream f = open_out(path, true);
  f << "P6\n" << W << " " << H << "\n255\n";
  const auto& v = image.values();
  std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const real val = std::clamp(v[static_cast<size_t>((c * H + y) * W + x)],
                                    real(0), real(1));
        row[static_cast<size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(val * 255));
      }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  }
  if (!f) fail_config("write failed: " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f = open_in(path, true);
  if (next_token(f, path) != "P6") fail_parse(path, 0, "bad magic, want P6");
  const int W = parse_int(next_token(f, path), f, path);
  const int H = parse_int(next_token(f, path), f, path);
  const int maxval = parse_int(next_token(f, path), f, path);
  if (W <= 0 || H <= 0) fail_parse(path, f.tellg(), "non-positive dimensions");
  if (maxval != 255) fail_parse(path, f.tellg(), "only maxval 255 supported");
  f.get();
  const size_t n = static_cast<size_t>(W) * H * 3;
  std::vector<unsigned char> raw(n);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(f.gcount()) != n)
    fail_parse(path, f.tellg(), "truncated pixel data");
  Tensor out = Tensor::zeros({3, H, W});
  auto& v = out.values();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        v[static_cast<size_t>((c * H + y) * W + x)] =
            real(raw[(static_cast<size_t>(y) * W + x) * 3 + c]) / real(255);
  return out;
}

void write_ply(const std::string& path, const TriMesh& mesh) {
  const bool with_normals = !mesh.normals.empty();
  const bool with_error = !mesh.vertex_error.empty();
  if (with_normals && mesh.normals.size() != mesh.vertices.size())
    fail_shape("PLY normal count does not match vertex count");
  if (with_error && mesh.vertex_error.size() != mesh.vertices.size())
    fail_shape("PLY error count does not match vertex count");
  std::ofstream f = open_out(path, false);
  f.precision(9);
  f << "ply\nformat ascii 1.0\n";
  f << "element vertex " << mesh.vertices.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  if (with_normals) f << "property float nx\nproperty float ny\nproperty float nz\n";
  if (with_error) f << "property float error\n";
  f << "element face " << mesh.triangles.size() << "\n";
  f << "property list uchar int vertex_indices\nend_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& p = mesh.vertices[i];
    f << p[0] << " " << p[1] << " " << p[2];
    if (with_normals) {
      const auto& n = mesh.normals[i];
      f << " " << n[0] << " " << n[1] << " " << n[2];
    }
    if (with_error) f << " " << mesh.vertex_error[i];
    f << "\n";
  }
  for (const auto& t : mesh.triangles)
    f << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  if (!f) fail_config("write failed: " + path);
}

TriMesh read_ply(const std::string& path) {
  std::ifstream f = open_in(path, false);
  if (next_token(f, path) != "ply") fail_parse(path, 0, "bad magic, want ply");
  std::string line;
  std::getline(f, line);
  size_t n_verts = 0, n_faces = 0;
  std::vector<std::string> vertex_props;
  std::string current_element;
  bool saw_format = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "comment" || kw.empty()) continue;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") fail_parse(path, f.tellg(), "only ascii PLY supported");
      saw_format = true;
    } else if (kw == "element") {
      std::string name;
      size_t count;
      ls >> name >> count;
      current_element = name;
      if (name == "vertex")
        n_verts = count;
      else if (name == "face")
        n_faces = count;
      else
        fail_parse(path, f.tellg(), "unknown element '" + name + "'");
    } else if (kw == "property") {
      if (current_element == "vertex") {
        std::string type, name;
        ls >> type >> name;
        vertex_props.push_back(name);
      }
    } else if (kw == "end_header") {
      break;
    } else {
      fail_parse(path, f.tellg(), "unknown header keyword '" + kw + "'");
    }
  }
  if (!saw_format) fail_parse(path, f.tellg(), "missing format line");

  auto prop_index = [&](const std::string& name) {
    for (size_t i = 0; i < vertex_props.size(); ++i)
      if (vertex_props[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = prop_index("x"), iy = prop_index("y"), iz = prop_index("z");
  const int inx = prop_index("nx"), iny = prop_index("ny"), inz = prop_index("nz");
  const int ie = prop_index("error");
  if (ix < 0 || iy < 0 || iz < 0) fail_parse(path, f.tellg(), "vertex missing x/y/z");

  TriMesh mesh;
  mesh.vertices.resize(n_verts);
  if (inx >= 0) mesh.normals.resize(n_verts);
  if (ie >= 0) mesh.vertex_error.resize(n_verts);
  std::vector<real> fields(vertex_props.size());
  for (size_t i = 0; i < n_verts; ++i) {
    for (size_t k = 0; k < fields.size(); ++k)
      if (!(f >> fields[k])) fail_parse(path, f.tellg(), "truncated vertex list");
    mesh.vertices[i] = {fields[static_cast<size_t>(ix)], fields[static_cast<size_t>(iy)],
                        fields[static_cast<size_t>(iz)]};
    if (inx >= 0)
      mesh.normals[i] = {fields[static_cast<size_t>(inx)],
                         fields[static_cast<size_t>(iny)],
                         fields[static_cast<size_t>(inz)]};
    if (ie >= 0) mesh.vertex_error[i] = fields[static_cast<size_t>(ie)];
  }
  mesh.triangles.resize(n_faces);
  for (size_t i = 0; i < n_faces; ++i) {
    int cnt;
    if (!(f >> cnt)) fail_parse(path, f.tellg(), "truncated face list");
    if (cnt != 3) fail_parse(path, f.tellg(), "only triangles supported");
    for (int k = 0; k < 3; ++k) {
      int idx;
      if (!(f >> idx)) fail_parse(path, f.tellg(), "truncated face list");
      if (idx < 0 || static_cast<size_t>(idx) >= n_verts)
        fail_parse(path, f.tellg(), "face index out of range");
      mesh.triangles[i][static_cast<size_t>(k)] = idx;
    }
  }
  return mesh;
}

void write_manifest(const std::string& path, const std::vector<SampleEntry>& entries) {
  std::ofstream f = open_out(path, false);
  for (const auto& e : entries)
    f << e.image_left << " " << e.image_right << " " << e.disp_left << " "
      << e.disp_right << " " << e.occ_left << " " << e.occ_right << " "
      << e.exclusion << "\n";
  if (!f) fail_config("write failed: " + path);
}

std::vector<SampleEntry> read_manifest(const std::string& path) {
  std::ifstream f = open_in(path, false);
  std::vector<SampleEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SampleEntry e;
    if (!(ls >> e.image_left >> e.image_right >> e.disp_left >> e.disp_right >>
          e.occ_left >> e.occ_right >> e.exclusion))
      fail_config(path + ": manifest line " + std::to_string(lineno) +
                  " needs 7 fields");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace stereo
