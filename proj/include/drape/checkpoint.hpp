#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "drape/errors.hpp"
#include "drape/types.hpp"

namespace drape {

// Plain-text manifest plus one binary blob file of raw little-endian doubles.
// Writing the result of a load reproduces the original bytes exactly.
//
// manifest.txt:
//   drape-checkpoint v1
//   meta <key> <value...>
//   config-begin / verbatim lines / config-end
//   array <name> <rows> <cols> <offset> <bytes>
//   hash fnv1a64 <hex of everything above>
// blobs.bin: column-major doubles, concatenated in manifest order.
class CheckpointWriter {
 public:
  void set_meta(const std::string& key, const std::string& value);
  void set_config(const std::string& config_text);
  void add_array(const std::string& name, const Mat& value);

  void write(const std::filesystem::path& dir) const;

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::string config_;
  std::vector<std::pair<std::string, Mat>> arrays_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& dir);

  std::string meta(const std::string& key) const;
  bool has_meta(const std::string& key) const;
  const std::string& config() const { return config_; }

  bool has_array(const std::string& name) const;
  Mat array(const std::string& name) const;
  std::vector<std::string> array_names() const;

  // re-serialization used by the round-trip contract
  CheckpointWriter to_writer() const;

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::string config_;
  std::vector<std::pair<std::string, Mat>> arrays_;
  std::map<std::string, std::size_t> index_;
};

std::uint64_t fnv1a64(const std::string& data);

}  // namespace drape
