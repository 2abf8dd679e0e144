#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fsra {

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kWeightFormatVersion = 1;

// Dimensions of the unfolded detector. M is the real-stacked antenna count.
struct WeightShape {
  int n_devices = 0;
  int n_slots = 0;
  int n_antennas = 0;
  int iterations = 0;

  std::size_t sp(int s, int p) const { return static_cast<std::size_t>(s) * n_slots + p; }
  std::size_t spm(int s, int p, int m) const { return sp(s, p) * n_antennas + m; }
  // k indexes the N_s-1 interferers of device s in ascending device order.
  std::size_t interferer(int s, int p, int m, int k) const {
    return spm(s, p, m) * (n_devices - 1) + k;
  }
  // k indexes the M-1 other antennas of antenna m.
  std::size_t other_antenna(int s, int p, int m, int k) const {
    return spm(s, p, m) * (n_antennas - 1) + k;
  }
  // k indexes the N_p-1 other slots of slot p.
  std::size_t other_slot(int s, int p, int k) const { return sp(s, p) * (n_slots - 1) + k; }

  std::size_t nodes() const { return static_cast<std::size_t>(n_devices) * n_slots; }
  std::size_t edges() const { return nodes() * n_antennas; }

  bool operator==(const WeightShape&) const = default;
};

// Weights of one unfolded iteration. Layer D does not exist in the last
// iteration (the output layer reads A_L and C_L directly), so its families are
// empty there.
struct IterationWeights {
  // layer A
  std::vector<double> w_y;       // [s][p][m]
  std::vector<double> w_u;       // [s][p][m][s*]
  std::vector<double> w_v;       // [s][p][m][s*]
  std::vector<double> w_sigma2;  // [s][p][m]
  // layer B
  std::vector<double> w_A2B;  // [s][p][m*]
  std::vector<double> wb_B;   // [s][p]
  // layer C
  std::vector<double> w_pa;   // [s][p]
  std::vector<double> w_B2C;  // [s][p][p*]
  // layer D
  std::vector<double> w_A2D;  // [s][p][m][m*]
  std::vector<double> w_C2D;  // [s][p][m]
  std::vector<double> wb_D;   // [s][p]

  bool operator==(const IterationWeights&) const = default;
};

struct OutputWeights {
  std::vector<double> w_A2dec;  // [s][p][m*]
  std::vector<double> w_C2dec;  // [s][p]
  std::vector<double> wb_dec;   // [s][p]

  bool operator==(const OutputWeights&) const = default;
};

namespace detail {

struct IterationFamily {
  std::string_view name;
  std::vector<double> IterationWeights::*member;
  std::size_t (*size)(const WeightShape&);
  bool layer_d;
};

inline std::size_t family_edges(const WeightShape& w) { return w.edges(); }
inline std::size_t family_nodes(const WeightShape& w) { return w.nodes(); }
inline std::size_t family_interferers(const WeightShape& w) {
  return w.edges() * static_cast<std::size_t>(w.n_devices - 1);
}
inline std::size_t family_other_antennas(const WeightShape& w) {
  return w.edges() * static_cast<std::size_t>(w.n_antennas - 1);
}
inline std::size_t family_other_slots(const WeightShape& w) {
  return w.nodes() * static_cast<std::size_t>(w.n_slots - 1);
}

inline const std::vector<IterationFamily>& iteration_families() {
  static const std::vector<IterationFamily> families = {
      {"w_y", &IterationWeights::w_y, family_edges, false},
      {"w_u", &IterationWeights::w_u, family_interferers, false},
      {"w_v", &IterationWeights::w_v, family_interferers, false},
      {"w_sigma2", &IterationWeights::w_sigma2, family_edges, false},
      {"w_A2B", &IterationWeights::w_A2B, family_edges, false},
      {"wb_B", &IterationWeights::wb_B, family_nodes, false},
      {"w_pa", &IterationWeights::w_pa, family_nodes, false},
      {"w_B2C", &IterationWeights::w_B2C, family_other_slots, false},
      {"w_A2D", &IterationWeights::w_A2D, family_other_antennas, true},
      {"w_C2D", &IterationWeights::w_C2D, family_edges, true},
      {"wb_D", &IterationWeights::wb_D, family_nodes, true},
  };
  return families;
}

struct OutputFamily {
  std::string_view name;
  std::vector<double> OutputWeights::*member;
  std::size_t (*size)(const WeightShape&);
};

inline const std::vector<OutputFamily>& output_families() {
  static const std::vector<OutputFamily> families = {
      {"w_A2dec", &OutputWeights::w_A2dec, family_edges},
      {"w_C2dec", &OutputWeights::w_C2dec, family_nodes},
      {"wb_dec", &OutputWeights::wb_dec, family_nodes},
  };
  return families;
}

}  // namespace detail

class WeightSet {
 public:
  WeightSet() = default;

  // All-ones weights; the weighted detector then reproduces plain MP-AD.
  static WeightSet unit(int n_devices, int n_slots, int n_antennas, int iterations) {
    return filled({n_devices, n_slots, n_antennas, iterations}, 1.0);
  }

  static WeightSet filled(const WeightShape& shape, double value) {
    if (shape.n_devices < 1 || shape.n_slots < 1 || shape.n_antennas < 1 || shape.iterations < 1)
      throw std::invalid_argument("WeightSet: dimensions must be positive");
    WeightSet w;
    w.shape_ = shape;
    w.iterations_.resize(shape.iterations);
    for (int i = 0; i < shape.iterations; ++i) {
      const bool has_d = i + 1 < shape.iterations;
      for (const auto& f : detail::iteration_families())
        (w.iterations_[i].*f.member).assign(f.layer_d && !has_d ? 0 : f.size(shape), value);
    }
    for (const auto& f : detail::output_families())
      (w.output_.*f.member).assign(f.size(shape), value);
    return w;
  }

  const WeightShape& shape() const { return shape_; }
  const IterationWeights& iteration(int i) const { return iterations_.at(i); }
  IterationWeights& iteration(int i) { return iterations_.at(i); }
  const OutputWeights& output() const { return output_; }
  OutputWeights& output() { return output_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& it : iterations_)
      for (const auto& f : detail::iteration_families()) n += (it.*f.member).size();
    for (const auto& f : detail::output_families()) n += (output_.*f.member).size();
    return n;
  }

  // Throws if any family has the wrong length or holds a non-finite value.
  void validate() const {
    if (static_cast<int>(iterations_.size()) != shape_.iterations)
      throw WeightFileError("weight set holds " + std::to_string(iterations_.size()) +
                            " iterations, metadata says " + std::to_string(shape_.iterations));
    auto check = [&](const std::vector<double>& v, std::size_t expected, std::string_view name,
                     const std::string& where) {
      if (v.size() != expected)
        throw WeightFileError(where + " array '" + std::string(name) + "' has " +
                              std::to_string(v.size()) + " values, expected " +
                              std::to_string(expected));
      for (double x : v)
        if (!std::isfinite(x))
          throw WeightFileError(where + " array '" + std::string(name) +
                                "' contains a non-finite weight");
    };
    for (int i = 0; i < shape_.iterations; ++i) {
      const bool has_d = i + 1 < shape_.iterations;
      for (const auto& f : detail::iteration_families())
        check(iterations_[i].*f.member, f.layer_d && !has_d ? 0 : f.size(shape_), f.name,
              "iteration " + std::to_string(i + 1));
    }
    for (const auto& f : detail::output_families())
      check(output_.*f.member, f.size(shape_), f.name, "final");
  }

  bool operator==(const WeightSet&) const = default;

 private:
  WeightShape shape_;
  std::vector<IterationWeights> iterations_;
  OutputWeights output_;
};

inline WeightSet make_unit_weights(int n_devices, int n_slots, int n_antennas, int iterations) {
  return WeightSet::unit(n_devices, n_slots, n_antennas, iterations);
}

// Text format, one token group per line:
//
//   fsra-weights <version>
//   N_s <n>  /  N_p <n>  /  M <n>  /  L <n>
//   iteration <i>                      (i = 1..L)
//   <family> <count> <v0> <v1> ...     (one line per family, fixed order)
//   final
//   <family> <count> <v0> ...
//   end
//
// Values use the shortest round-trip decimal form, so save/load is exact.
inline void save_weights(std::ostream& out, const WeightSet& w) {
  w.validate();
  const auto& sh = w.shape();
  out << "fsra-weights " << kWeightFormatVersion << '\n'
      << "N_s " << sh.n_devices << '\n'
      << "N_p " << sh.n_slots << '\n'
      << "M " << sh.n_antennas << '\n'
      << "L " << sh.iterations << '\n';
  auto write_array = [&](std::string_view name, const std::vector<double>& v) {
    out << name << ' ' << v.size();
    char buf[32];
    for (double x : v) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
      out << ' ' << std::string_view(buf, ptr - buf);
    }
    out << '\n';
  };
  for (int i = 0; i < sh.iterations; ++i) {
    out << "iteration " << i + 1 << '\n';
    for (const auto& f : detail::iteration_families())
      if (!f.layer_d || i + 1 < sh.iterations) write_array(f.name, w.iteration(i).*f.member);
  }
  out << "final\n";
  for (const auto& f : detail::output_families()) write_array(f.name, w.output().*f.member);
  out << "end\n";
}

inline void save_weights(const std::string& path, const WeightSet& w) {
  std::ofstream out(path);
  if (!out) throw WeightFileError("cannot open '" + path + "' for writing");
  save_weights(out, w);
  if (!out) throw WeightFileError("write failed for '" + path + "'");
}

inline WeightSet load_weights(std::istream& in) {
  std::string line;
  auto next_line = [&](const std::string& expecting) -> std::string {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    throw WeightFileError("weight file truncated: missing section '" + expecting + "'");
  };
  auto split_head = [](const std::string& l) {
    auto sp = l.find(' ');
    return std::pair<std::string, std::string>{l.substr(0, sp),
                                               sp == std::string::npos ? "" : l.substr(sp + 1)};
  };
  auto read_int = [&](const std::string& key) {
    auto [k, v] = split_head(next_line(key));
    if (k != key) throw WeightFileError("expected header field '" + key + "', found '" + k + "'");
    int value = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
    if (ec != std::errc{} || ptr != v.data() + v.size())
      throw WeightFileError("malformed value for header field '" + key + "'");
    return value;
  };

  {
    auto [magic, version] = split_head(next_line("fsra-weights"));
    if (magic != "fsra-weights") throw WeightFileError("not a weight file (bad magic)");
    if (version != std::to_string(kWeightFormatVersion))
      throw WeightFileError("unsupported weight format version '" + version + "', expected " +
                            std::to_string(kWeightFormatVersion));
  }
  WeightShape shape;
  shape.n_devices = read_int("N_s");
  shape.n_slots = read_int("N_p");
  shape.n_antennas = read_int("M");
  shape.iterations = read_int("L");
  WeightSet w = WeightSet::filled(shape, 0.0);

  auto read_array = [&](std::string_view name, std::vector<double>& dst, const std::string& where) {
    const std::string section = where + "/" + std::string(name);
    std::string l = next_line(section);
    std::istringstream tokens(l);
    std::string key;
    std::size_t count = 0;
    tokens >> key >> count;
    if (key != name)
      throw WeightFileError("expected array '" + section + "', found '" + key + "'");
    if (count != dst.size())
      throw WeightFileError("array '" + section + "' declares " + std::to_string(count) +
                            " values, shape requires " + std::to_string(dst.size()));
    std::string tok;
    std::size_t got = 0;
    while (tokens >> tok) {
      if (got == count) throw WeightFileError("array '" + section + "' has extra values");
      double x = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw WeightFileError("array '" + section + "' has malformed value '" + tok + "'");
      if (!std::isfinite(x))
        throw WeightFileError("array '" + section + "' contains a non-finite weight");
      dst[got++] = x;
    }
    if (got != count)
      throw WeightFileError("array '" + section + "' truncated: " + std::to_string(got) + " of " +
                            std::to_string(count) + " values");
  };

  for (int i = 0; i < shape.iterations; ++i) {
    const std::string where = "iteration " + std::to_string(i + 1);
    auto l = next_line(where);
    if (l != where) throw WeightFileError("expected '" + where + "', found '" + l + "'");
    for (const auto& f : detail::iteration_families())
      if (!f.layer_d || i + 1 < shape.iterations)
        read_array(f.name, w.iteration(i).*f.member, where);
  }
  if (auto l = next_line("final"); l != "final")
    throw WeightFileError("expected 'final', found '" + l + "'");
  for (const auto& f : detail::output_families()) read_array(f.name, w.output().*f.member, "final");
  if (auto l = next_line("end"); l != "end")
    throw WeightFileError("expected 'end', found '" + l + "'");
  w.validate();
  return w;
}

inline WeightSet load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw WeightFileError("cannot open weight file '" + path + "'");
  return load_weights(in);
}

}  // namespace fsra
