#include "drape/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "drape/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are raw little-endian doubles");

namespace drape {

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void CheckpointWriter::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta_)
    if (k == key) {
      v = value;
      return;
    }
  meta_.emplace_back(key, value);
}

void CheckpointWriter::set_config(const std::string& config_text) { config_ = config_text; }

void CheckpointWriter::add_array(const std::string& name, const Mat& value) {
  for (const auto& [n, v] : arrays_)
    if (n == name) throw IoError("checkpoint: duplicate array name " + name);
  arrays_.emplace_back(name, value);
}

void CheckpointWriter::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);

  std::ostringstream manifest;
  manifest << "drape-checkpoint v1\n";
  for (const auto& [k, v] : meta_) manifest << "meta " << k << " " << v << "\n";
  if (!config_.empty()) {
    manifest << "config-begin\n" << config_;
    if (config_.back() != '\n') manifest << "\n";
    manifest << "config-end\n";
  }
  std::size_t offset = 0;
  for (const auto& [name, m] : arrays_) {
    const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(Scalar);
    manifest << "array " << name << " " << m.rows() << " " << m.cols() << " " << offset << " "
             << bytes << "\n";
    offset += bytes;
  }
  const std::string body = manifest.str();
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(body)));

  {
    std::ofstream out(dir / "manifest.txt", std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write manifest");
    out << body << "hash fnv1a64 " << hash_hex << "\n";
  }
  {
    std::ofstream out(dir / "blobs.bin", std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write blobs");
    for (const auto& [name, m] : arrays_)
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) * sizeof(Scalar)));
  }
}

CheckpointReader::CheckpointReader(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt", std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open manifest in " + dir.string());
  std::string line;
  if (!std::getline(in, line) || line != "drape-checkpoint v1")
    throw IoError("checkpoint: unrecognized manifest header");

  std::string body = line + "\n";
  struct ArraySpec {
    std::string name;
    Index rows = 0, cols = 0;
    std::size_t offset = 0, bytes = 0;
  };
  std::vector<ArraySpec> specs;
  std::string hash_line;
  bool in_config = false;
  while (std::getline(in, line)) {
    if (line.rfind("hash ", 0) == 0) {
      hash_line = line;
      break;
    }
    body += line + "\n";
    if (in_config) {
      if (line == "config-end")
        in_config = false;
      else
        config_ += line + "\n";
      continue;
    }
    if (line == "config-begin") {
      in_config = true;
    } else if (line.rfind("meta ", 0) == 0) {
      std::istringstream ss(line.substr(5));
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      meta_.emplace_back(key, value);
    } else if (line.rfind("array ", 0) == 0) {
      std::istringstream ss(line.substr(6));
      ArraySpec spec;
      ss >> spec.name >> spec.rows >> spec.cols >> spec.offset >> spec.bytes;
      if (!ss) throw IoError("checkpoint: malformed array line: " + line);
      specs.push_back(std::move(spec));
    } else if (!line.empty()) {
      throw IoError("checkpoint: unexpected manifest line: " + line);
    }
  }
  if (hash_line.empty()) throw IoError("checkpoint: missing hash line");
  char expect[17];
  std::snprintf(expect, sizeof expect, "%016llx",
                static_cast<unsigned long long>(fnv1a64(body)));
  if (hash_line != std::string("hash fnv1a64 ") + expect)
    throw IoError("checkpoint: manifest hash mismatch");

  std::ifstream blobs(dir / "blobs.bin", std::ios::binary);
  if (!blobs) throw IoError("checkpoint: cannot open blobs in " + dir.string());
  for (const ArraySpec& spec : specs) {
    if (spec.bytes != static_cast<std::size_t>(spec.rows * spec.cols) * sizeof(Scalar))
      throw IoError("checkpoint: inconsistent array size for " + spec.name);
    Mat m(spec.rows, spec.cols);
    blobs.seekg(static_cast<std::streamoff>(spec.offset));
    blobs.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(spec.bytes));
    if (!blobs) throw IoError("checkpoint: truncated blob for " + spec.name);
    index_[spec.name] = arrays_.size();
    arrays_.emplace_back(spec.name, std::move(m));
  }
}

std::string CheckpointReader::meta(const std::string& key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  throw IoError("checkpoint: missing meta key " + key);
}

bool CheckpointReader::has_meta(const std::string& key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return true;
  return false;
}

bool CheckpointReader::has_array(const std::string& name) const { return index_.count(name) > 0; }

Mat CheckpointReader::array(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw IoError("checkpoint: missing array " + name);
  return arrays_[it->second].second;
}

std::vector<std::string> CheckpointReader::array_names() const {
  std::vector<std::string> names;
  names.reserve(arrays_.size());
  for (const auto& [n, m] : arrays_) names.push_back(n);
  return names;
}

CheckpointWriter CheckpointReader::to_writer() const {
  CheckpointWriter w;
  for (const auto& [k, v] : meta_) w.set_meta(k, v);
  w.set_config(config_);
  for (const auto& [n, m] : arrays_) w.add_array(n, m);
  return w;
}

}  // namespace drape
