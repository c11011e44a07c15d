#pragma once

// Flat key=value run configuration. Every key has a documented default;
// unknown keys are rejected in files and on the command line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dgcw/metrics.hpp"
#include "dgcw/network.hpp"
#include "dgcw/synth.hpp"
#include "dgcw/training.hpp"

namespace dgcw::cli {

// Usage or configuration problems; the CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KeyInfo {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

// All keys in the order they are written to config.resolved.
const std::vector<KeyInfo>& config_keys();
bool is_known_key(std::string_view key);

class RunConfig {
 public:
  RunConfig();  // all defaults

  // Parses key=value lines; blank lines and lines starting with '#' are
  // skipped. Unknown and repeated keys are errors.
  void load_file(const std::filesystem::path& path);
  void load_text(std::string_view text, std::string_view source = "<text>");
  void set(std::string_view key, std::string value);

  const std::string& get(std::string_view key) const;
  std::string get_string(std::string_view key) const { return get(key); }
  long long get_int(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::size_t> get_size_list(std::string_view key) const;
  std::vector<double> get_double_list(std::string_view key) const;

  // Keys whose value came from a file or an override rather than a default.
  bool is_explicit(std::string_view key) const { return explicit_.count(std::string(key)) > 0; }

  // One key=value line per key, in config_keys() order.
  std::string resolved_text() const;
  void write_resolved(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::set<std::string, std::less<>> explicit_;
};

bool use_f64(const RunConfig& cfg);

SynthSpec synth_spec(const RunConfig& cfg);
NetworkConfig network_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);

// Keys that define the network architecture; eval and variance rebuild the
// network from the copy of these stored with a checkpoint.
bool is_network_key(std::string_view key);

}  // namespace dgcw::cli
