#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace fsra {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scenario parameters for one random-access setup.
//
// SNR is defined on the complex model with unit mean received power, so the
// complex noise variance is 10^(-snr_db/10) and each real-stacked component
// carries half of it. snr_db = inf gives a noise-free scenario.
struct SystemConfig {
  int n_devices = 200;
  int n_slots = 4;
  int n_antennas_complex = 30;
  double activation_prob = 0.05;
  double snr_db = 0.0;
  double channel_error_std = 0.0;
  int iterations = 10;
  double mse_threshold = 2e-4;
  std::uint64_t rng_seed = 1;
  int payload_symbols = 10;

  int n_antennas_real() const { return 2 * n_antennas_complex; }
  double entry_prior() const { return activation_prob / n_slots; }
  double noise_var() const { return std::pow(10.0, -snr_db / 10.0); }
  double noise_var_real() const { return noise_var() / 2.0; }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid config: ") + what);
    };
    require(n_devices >= 1, "n_devices must be positive");
    require(n_slots >= 1, "n_slots must be positive");
    require(n_antennas_complex >= 1, "n_antennas_complex must be positive");
    // 0 is accepted so that all-inactive frames can be simulated.
    require(activation_prob >= 0.0 && activation_prob <= 1.0,
            "activation_prob must lie in [0,1]");
    require(!std::isnan(snr_db) && snr_db != -std::numeric_limits<double>::infinity(),
            "snr_db must be a number or +inf");
    require(std::isfinite(channel_error_std) && channel_error_std >= 0.0,
            "channel_error_std must be >= 0");
    require(iterations >= 1, "iterations must be positive");
    require(mse_threshold > 0.0, "mse_threshold must be > 0");
    require(payload_symbols >= 1, "payload_symbols must be positive");
  }

  bool operator==(const SystemConfig&) const = default;
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("cannot parse value '" + std::string(text) + "' for key '" +
                      std::string(key) + "'");
  }
  return value;
}

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline const std::vector<std::string_view>& config_field_names() {
  static const std::vector<std::string_view> names = {
      "n_devices",     "n_slots",    "n_antennas_complex", "activation_prob",
      "snr_db",        "channel_error_std", "iterations",   "mse_threshold",
      "rng_seed",      "payload_symbols"};
  return names;
}

inline bool is_config_field(std::string_view name) {
  for (auto n : config_field_names())
    if (n == name) return true;
  return false;
}

// Assigns one field from its textual value. Unknown names are rejected.
inline void set_config_field(SystemConfig& cfg, std::string_view key, std::string_view value) {
  using detail::parse_number;
  if (key == "n_devices") cfg.n_devices = parse_number<int>(key, value);
  else if (key == "n_slots") cfg.n_slots = parse_number<int>(key, value);
  else if (key == "n_antennas_complex") cfg.n_antennas_complex = parse_number<int>(key, value);
  else if (key == "activation_prob") cfg.activation_prob = parse_number<double>(key, value);
  else if (key == "snr_db") cfg.snr_db = parse_number<double>(key, value);
  else if (key == "channel_error_std") cfg.channel_error_std = parse_number<double>(key, value);
  else if (key == "iterations") cfg.iterations = parse_number<int>(key, value);
  else if (key == "mse_threshold") cfg.mse_threshold = parse_number<double>(key, value);
  else if (key == "rng_seed") cfg.rng_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "payload_symbols") cfg.payload_symbols = parse_number<int>(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// Numeric sweep values arrive as doubles; integer fields must be integral.
inline void set_config_field(SystemConfig& cfg, std::string_view key, double value) {
  if (key == "n_devices" || key == "n_slots" || key == "n_antennas_complex" ||
      key == "iterations" || key == "payload_symbols" || key == "rng_seed") {
    if (value != std::floor(value) || value < 0)
      throw ConfigError("field '" + std::string(key) + "' needs a non-negative integer value");
  }
  if (key == "rng_seed") {
    cfg.rng_seed = static_cast<std::uint64_t>(value);
    return;
  }
  set_config_field(cfg, key, detail::format_double(value));
}

inline double get_config_field(const SystemConfig& cfg, std::string_view key) {
  if (key == "n_devices") return cfg.n_devices;
  if (key == "n_slots") return cfg.n_slots;
  if (key == "n_antennas_complex") return cfg.n_antennas_complex;
  if (key == "activation_prob") return cfg.activation_prob;
  if (key == "snr_db") return cfg.snr_db;
  if (key == "channel_error_std") return cfg.channel_error_std;
  if (key == "iterations") return cfg.iterations;
  if (key == "mse_threshold") return cfg.mse_threshold;
  if (key == "rng_seed") return static_cast<double>(cfg.rng_seed);
  if (key == "payload_symbols") return cfg.payload_symbols;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// Flat "key = value" text; '#' starts a comment. Missing keys keep defaults.
inline SystemConfig parse_config(std::istream& in) {
  SystemConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string_view view(line);
    while (!view.empty() && std::isspace(static_cast<unsigned char>(view.front()))) view.remove_prefix(1);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    auto key = view.substr(0, eq);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.remove_suffix(1);
    set_config_field(cfg, key, view.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

inline SystemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

inline std::string to_text(const SystemConfig& cfg) {
  std::ostringstream out;
  for (auto name : config_field_names()) {
    out << name << " = ";
    if (name == "rng_seed") out << cfg.rng_seed;
    else out << detail::format_double(get_config_field(cfg, name));
    out << '\n';
  }
  return out.str();
}

}  // namespace fsra
