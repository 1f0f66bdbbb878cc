#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "texanom/pipeline.hpp"
#include "texanom/train.hpp"

namespace texanom::config {

namespace fs = std::filesystem;

// Values of the TOML subset we accept: strings, numbers, booleans, flat arrays.
using Scalar = std::variant<std::string, double, bool>;
struct Value {
  std::vector<Scalar> items;
  bool is_array = false;
};

// "section.key" -> value. Keys before the first [section] have no prefix.
class Document {
 public:
  static Document parse(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, Value>& values() const { return values_; }

  std::string get_string(const std::string& key) const;
  double get_number(const std::string& key) const;
  std::int64_t get_integer(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::int64_t> get_integer_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

 private:
  std::map<std::string, Value> values_;
};

struct RunConfig {
  fs::path dataset_root;
  std::vector<std::string> validation;
  std::vector<int> widths{32, 64, 128, 256, 512};
  autoencoder::TrainConfig train;
  pipeline::InferenceConfig inference;
  fs::path output_dir = "texanom-run";
  std::uint64_t seed = 0;
  int threads = 1;
  bool deterministic = true;

  autoencoder::ArchitectureSpec architecture() const { return autoencoder::ArchitectureSpec::symmetric(widths); }

  // Relative paths are resolved against base_dir. Unknown keys are rejected.
  static RunConfig parse(const std::string& text, const fs::path& base_dir = {});
  static RunConfig load(const fs::path& path);

  // Canonical document with every field spelled out.
  std::string to_toml() const;
  // FNV-1a of to_toml(), as 16 hex digits.
  std::string hash() const;
  // Copies seed/threads into the nested configs.
  void propagate();
};

}  // namespace texanom::config
