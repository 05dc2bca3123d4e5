#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "oracles.hpp"
#include "stereo/imageio.hpp"

using namespace stereo;

namespace {
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/stereo_io_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};
}  // namespace

TEST_CASE("PFM round trip is bit-identical at float32") {
  Rng rng(9);
  TempFile t("rt.pfm");
  Tensor d = oracle::random_tensor({7, 5}, rng, -40, 40);
  // snap to float32 so the round trip can be exact even with real = double
  for (auto& v : d.values()) v = (real)(float)v;
  write_pfm(t.path, d);
  Tensor back = read_pfm(t.path);
  REQUIRE(back.shape() == d.shape());
  for (size_t i = 0; i < d.values().size(); ++i)
    CHECK(back.values()[i] == d.values()[i]);
}

TEST_CASE("PFM three-channel round trip") {
  Rng rng(10);
  TempFile t("rt3.pfm");
  Tensor img = oracle::random_tensor({3, 4, 6}, rng, 0, 1);
  for (auto& v : img.values()) v = (real)(float)v;
  write_pfm(t.path, img);
  Tensor back = read_pfm(t.path);
  REQUIRE(back.shape() == img.shape());
  for (size_t i = 0; i < img.values().size(); ++i)
    CHECK(back.values()[i] == img.values()[i]);
}

TEST_CASE("hand-encoded 2x2 PFM parses to known floats") {
  TempFile t("fixture.pfm");
  {
    std::ofstream f(t.path, std::ios::binary);
    f << "Pf\n2 2\n-1.0\n";
    // bottom-up: first stored row is the image's bottom row (y=1)
    const float bottom[2] = {3.0f, 4.0f};
    const float top[2] = {1.0f, 2.5f};
    f.write(reinterpret_cast<const char*>(bottom), 8);
    f.write(reinterpret_cast<const char*>(top), 8);
  }
  Tensor d = read_pfm(t.path);
  REQUIRE(d.shape() == std::vector<int>{2, 2});
  CHECK(d.values()[0] == real(1.0f));
  CHECK(d.values()[1] == real(2.5f));
  CHECK(d.values()[2] == real(3.0f));
  CHECK(d.values()[3] == real(4.0f));
}

TEST_CASE("big-endian PFM is byte-swapped on read") {
  TempFile t("be.pfm");
  {
    std::ofstream f(t.path, std::ios::binary);
    f << "Pf\n1 1\n1.0\n";  // positive scale = big-endian payload
    const float v = 2.0f;
    unsigned char b[4];
    std::memcpy(b, &v, 4);
    std::swap(b[0], b[3]);
    std::swap(b[1], b[2]);
    f.write(reinterpret_cast<const char*>(b), 4);
  }
  Tensor d = read_pfm(t.path);
  CHECK(d.values()[0] == real(2.0f));
}

TEST_CASE("malformed PFM headers name a byte offset") {
  auto expect_parse_error = [](const std::string& name, const std::string& bytes) {
    TempFile t(name);
    {
      std::ofstream f(t.path, std::ios::binary);
      f << bytes;
    }
    try {
      read_pfm(t.path);
      FAIL("expected a parse error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  };
  expect_parse_error("badmagic.pfm", "Px\n2 2\n-1.0\n");
  expect_parse_error("baddim.pfm", "Pf\nfoo 2\n-1.0\n");
  expect_parse_error("zeroscale.pfm", "Pf\n1 1\n0\n\0\0\0\0");
  expect_parse_error("trunc.pfm", "Pf\n2 2\n-1.0\nxx");
}

TEST_CASE("PPM round trip at 8-bit precision") {
  TempFile t("rt.ppm");
  Tensor img = Tensor::zeros({3, 2, 3});
  for (size_t i = 0; i < img.values().size(); ++i)
    img.values()[i] = real(i) / real(17);  // not 8-bit representable; allow quantization
  write_ppm(t.path, img);
  Tensor back = read_ppm(t.path);
  REQUIRE(back.shape() == img.shape());
  for (size_t i = 0; i < img.values().size(); ++i)
    CHECK(back.values()[i] == doctest::Approx(img.values()[i]).epsilon(0.005));
  // exact at representable levels
  Tensor exact = Tensor::zeros({3, 1, 2});
  exact.values() = {0, real(1), real(128) / 255, real(34) / 255, real(255) / 255, real(7) / 255};
  TempFile t2("exact.ppm");
  write_ppm(t2.path, exact);
  Tensor b2 = read_ppm(t2.path);
  for (size_t i = 0; i < exact.values().size(); ++i)
    CHECK(b2.values()[i] == exact.values()[i]);
}

TEST_CASE("PLY round trip with one triangle, normals, and error property") {
  TempFile t("tri.ply");
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.normals = {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
  m.vertex_error = {real(0.5), real(0.25), real(0.125)};
  m.triangles = {{0, 1, 2}};
  write_ply(t.path, m);
  TriMesh back = read_ply(t.path);
  REQUIRE(back.vertices.size() == 3);
  REQUIRE(back.triangles.size() == 1);
  REQUIRE(back.normals.size() == 3);
  REQUIRE(back.vertex_error.size() == 3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      CHECK(back.vertices[(size_t)i][(size_t)k] ==
            doctest::Approx(m.vertices[(size_t)i][(size_t)k]).epsilon(1e-6));
      CHECK(back.normals[(size_t)i][(size_t)k] ==
            doctest::Approx(m.normals[(size_t)i][(size_t)k]).epsilon(1e-6));
    }
    CHECK(back.vertex_error[(size_t)i] == doctest::Approx(m.vertex_error[(size_t)i]));
    CHECK(back.triangles[0][(size_t)i] == i);
  }
  // plain mesh without optional properties
  TriMesh plain;
  plain.vertices = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  plain.triangles = {{2, 1, 0}};
  TempFile t2("plain.ply");
  write_ply(t2.path, plain);
  TriMesh pb = read_ply(t2.path);
  CHECK(pb.normals.empty());
  CHECK(pb.vertex_error.empty());
  CHECK(pb.triangles[0][0] == 2);
}

TEST_CASE("PLY errors: bad face index and non-triangle faces") {
  TempFile t("bad.ply");
  {
    std::ofstream f(t.path);
    f << "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
         "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
         "end_header\n0 0 0\n3 0 0 5\n";
  }
  CHECK_THROWS_AS(read_ply(t.path), std::invalid_argument);
}

TEST_CASE("manifest round trip and field-count validation") {
  TempFile t("set.txt");
  std::vector<SampleEntry> es(2);
  es[0] = {"a_l.ppm", "a_r.ppm", "a_dl.pfm", "a_dr.pfm", "a_ol.pfm", "a_or.pfm", "a_x.pfm"};
  es[1] = {"b_l.ppm", "b_r.ppm", "b_dl.pfm", "b_dr.pfm", "b_ol.pfm", "b_or.pfm", "b_x.pfm"};
  write_manifest(t.path, es);
  auto back = read_manifest(t.path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image_left == "a_l.ppm");
  CHECK(back[1].exclusion == "b_x.pfm");
  {
    std::ofstream f(t.path);
    f << "only three fields here\n";
  }
  CHECK_THROWS_AS(read_manifest(t.path), std::invalid_argument);
}
