#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "drape/checkpoint.hpp"
#include "drape/rng.hpp"

using namespace drape;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() / ("drape_test_" + tag)) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("checkpoint");

TEST_CASE("save, load and re-save are byte identical") {
  TempDir dir_a("ckpt_a");
  TempDir dir_b("ckpt_b");
  Rng rng(3);

  CheckpointWriter w;
  w.set_meta("format", "1");
  w.set_meta("seed", "42");
  w.set_config("[run]\nseed = 42\n");
  w.add_array("alpha", randn(rng, 3, 4, 1.0));
  w.add_array("beta", randn(rng, 1, 7, 1.0));
  w.add_array("empty", Mat(0, 5));
  w.write(dir_a.path);

  CheckpointReader r(dir_a.path);
  CHECK(r.meta("seed") == "42");
  CHECK(r.config() == "[run]\nseed = 42\n");
  CHECK(r.array_names() == std::vector<std::string>{"alpha", "beta", "empty"});

  r.to_writer().write(dir_b.path);
  CHECK(slurp(dir_a.path / "manifest.txt") == slurp(dir_b.path / "manifest.txt"));
  CHECK(slurp(dir_a.path / "blobs.bin") == slurp(dir_b.path / "blobs.bin"));
}

TEST_CASE("arrays round trip bit exactly") {
  TempDir dir("ckpt_exact");
  Rng rng(5);
  const Mat m = randn(rng, 6, 6, 1e-7);
  CheckpointWriter w;
  w.add_array("m", m);
  w.write(dir.path);
  const Mat back = CheckpointReader(dir.path).array("m");
  CHECK(back == m);
}

TEST_CASE("manifest hash detects tampering") {
  TempDir dir("ckpt_tamper");
  CheckpointWriter w;
  w.set_meta("format", "1");
  w.add_array("m", Mat::Ones(2, 2));
  w.write(dir.path);

  std::string manifest = slurp(dir.path / "manifest.txt");
  const auto pos = manifest.find("2 2");
  manifest.replace(pos, 3, "2 1");
  std::ofstream(dir.path / "manifest.txt", std::ios::binary) << manifest;
  CHECK_THROWS_AS(CheckpointReader{dir.path}, IoError);
}

TEST_CASE("missing arrays and duplicate names are errors") {
  TempDir dir("ckpt_missing");
  CheckpointWriter w;
  w.add_array("m", Mat::Ones(1, 1));
  CHECK_THROWS_AS(w.add_array("m", Mat::Ones(1, 1)), IoError);
  w.write(dir.path);
  CheckpointReader r(dir.path);
  CHECK(r.has_array("m"));
  CHECK_FALSE(r.has_array("nope"));
  CHECK_THROWS_AS(r.array("nope"), IoError);
  CHECK_THROWS_AS(r.meta("nope"), IoError);
}

TEST_SUITE_END();
