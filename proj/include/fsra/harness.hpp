#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fsra/baselines.hpp"
#include "fsra/config.hpp"
#include "fsra/model.hpp"
#include "fsra/mpad.hpp"
#include "fsra/mud.hpp"
#include "fsra/weights.hpp"

namespace fsra {

inline constexpr const char* kVersion = "0.1.0";

// `oracle` returns the true S; it isolates the data-recovery stage.
enum class DetectorKind { mpad, mpad_weighted, lmmse, mf, oracle };

inline std::string to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::mpad: return "mpad";
    case DetectorKind::mpad_weighted: return "mpad_weighted";
    case DetectorKind::lmmse: return "lmmse";
    case DetectorKind::mf: return "mf";
    case DetectorKind::oracle: return "oracle";
  }
  return "?";
}

inline DetectorKind parse_detector(const std::string& name) {
  for (auto d : {DetectorKind::mpad, DetectorKind::mpad_weighted, DetectorKind::lmmse,
                 DetectorKind::mf, DetectorKind::oracle})
    if (to_string(d) == name) return d;
  throw ConfigError("unknown detector '" + name + "' (mpad, mpad_weighted, lmmse, mf, oracle)");
}

struct SweepSpec {
  SystemConfig base;
  std::string parameter;       // empty: one point at the base config
  std::vector<double> values;
  std::uint64_t frames = 1000;
  DetectorKind detector = DetectorKind::mpad;
  std::shared_ptr<const WeightSet> weights;  // mpad_weighted only
  bool row_constraint = false;               // MP-AD post-hoc row rule
  double threshold = 0.5;                    // baselines
  std::uint64_t calibration_frames = 0;      // >0: fit the baseline threshold per point
  int threads = 1;

  void validate() const {
    base.validate();
    if (frames < 1) throw ConfigError("sweep needs at least one frame per point");
    if (!parameter.empty()) {
      if (!is_config_field(parameter))
        throw ConfigError("sweep parameter '" + parameter + "' is not a config field");
      if (values.empty()) throw ConfigError("sweep over '" + parameter + "' has no values");
    }
    if (detector == DetectorKind::mpad_weighted && !weights)
      throw ConfigError("detector mpad_weighted needs a weight file");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }

  std::vector<SystemConfig> points() const {
    if (parameter.empty()) return {base};
    std::vector<SystemConfig> out;
    for (double v : values) {
      SystemConfig c = base;
      set_config_field(c, parameter, v);
      c.validate();
      out.push_back(c);
    }
    return out;
  }
};

struct PointResult {
  double swept_value = 0.0;
  std::uint64_t frames = 0;
  std::uint64_t elements = 0;
  std::uint64_t element_errors = 0;
  std::uint64_t errors_sq = 0;  // sum over frames of (errors per frame)^2
  std::uint64_t false_alarm_entries = 0;
  std::uint64_t missed_entries = 0;
  std::uint64_t true_packets = 0;
  std::uint64_t activity_failures = 0;  // true packets whose slot column is wrong
  std::optional<ThroughputStats> mud;
  std::optional<double> threshold;
  double seconds = 0.0;

  double eer() const { return elements ? static_cast<double>(element_errors) / elements : 0.0; }

  double eer_stderr() const {
    if (frames < 2) return 0.0;
    const double n = static_cast<double>(frames);
    const double per_frame = static_cast<double>(elements) / n;
    const double mean = element_errors / n;
    const double var = (errors_sq / n - mean * mean) * n / (n - 1);
    return std::sqrt(std::max(var, 0.0) / n) / per_frame;
  }

  void merge(const PointResult& o) {
    frames += o.frames;
    elements += o.elements;
    element_errors += o.element_errors;
    errors_sq += o.errors_sq;
    false_alarm_entries += o.false_alarm_entries;
    missed_entries += o.missed_entries;
    true_packets += o.true_packets;
    activity_failures += o.activity_failures;
    if (o.mud) {
      if (!mud) mud = ThroughputStats{};
      mud->merge(*o.mud);
    }
  }
};

struct RunReport {
  std::string command;
  SweepSpec spec;
  std::vector<PointResult> points;
  std::string version = kVersion;
};

// Adds the element-level and activity-level counts of one frame.
inline void tally_detection(PointResult& r, const IndicatorMatrix& S, const BinaryMatrix& S_hat) {
  std::uint64_t errors = 0;
  for (Eigen::Index s = 0; s < S.rows(); ++s)
    for (Eigen::Index p = 0; p < S.cols(); ++p) {
      if (S(s, p) == S_hat(s, p)) continue;
      ++errors;
      if (S_hat(s, p)) ++r.false_alarm_entries;
      else ++r.missed_entries;
    }
  for (Eigen::Index s = 0; s < S.rows(); ++s) {
    const int p = slot_of(S, s);
    if (p < 0) continue;
    ++r.true_packets;
    if (S.col(p) != S_hat.col(p)) ++r.activity_failures;
  }
  r.frames += 1;
  r.elements += static_cast<std::uint64_t>(S.size());
  r.element_errors += errors;
  r.errors_sq += errors * errors;
}

// Packet outcomes of one frame given the detected S_hat. MUD runs only in
// slots whose detected column is exact; the other packets fail regardless.
inline std::vector<PacketOutcome> frame_packet_outcomes(const Frame& frame,
                                                        const BinaryMatrix& S_hat,
                                                        double eps_rec) {
  std::vector<double> mse(frame.S.rows(), std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index p = 0; p < frame.S.cols(); ++p) {
    if (frame.S.col(p) != S_hat.col(p)) continue;
    const auto rec = recover_slot(frame, S_hat, static_cast<int>(p));
    for (std::size_t k = 0; k < rec.devices.size(); ++k) mse[rec.devices[k]] = rec.mse[k];
  }
  return classify_packets(frame.S, S_hat, mse, eps_rec);
}

namespace detail {

inline SoftScoreMatrix baseline_scores(DetectorKind kind, const Frame& f, const SystemConfig& cfg) {
  if (kind == DetectorKind::lmmse)
    return lmmse_soft(f.rx_fixed.Y, f.rx_fixed.H_csi, cfg.noise_var_real(), cfg.entry_prior());
  return mf_soft(f.rx_fixed.Y, f.rx_fixed.H_csi);
}

template <typename Fn>
void parallel_frames(std::uint64_t frames, int threads, Fn&& per_thread) {
  if (threads <= 1) {
    per_thread(0, 1);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        per_thread(t, threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  (void)frames;
}

}  // namespace detail

// Fits the baseline threshold on validation frames (disjoint substreams).
inline double calibrate_threshold(DetectorKind kind, const SystemConfig& cfg, std::uint64_t point,
                                  std::uint64_t frames,
                                  std::vector<double> grid = ThresholdCalibrator::default_grid()) {
  if (kind != DetectorKind::lmmse && kind != DetectorKind::mf)
    throw std::invalid_argument("calibrate_threshold: only lmmse and mf have a threshold");
  ThresholdCalibrator cal(std::move(grid));
  for (std::uint64_t f = 0; f < frames; ++f) {
    const Frame frame = synthesize_frame(cfg, point, f, Purpose::validation);
    cal.add(detail::baseline_scores(kind, frame, cfg), frame.S);
  }
  return cal.best();
}

// Detection (and optionally MUD) statistics for one configuration.
inline PointResult evaluate_point(const SweepSpec& spec, const SystemConfig& cfg,
                                  std::uint64_t point, bool with_mud) {
  const auto start = std::chrono::steady_clock::now();
  DetectorParams params = DetectorParams::from(cfg);
  params.row_constraint = spec.row_constraint;
  const WeightSet* weights = nullptr;
  if (spec.detector == DetectorKind::mpad_weighted) {
    weights = spec.weights.get();
    const WeightShape expected{cfg.n_devices, cfg.n_slots, cfg.n_antennas_real(), cfg.iterations};
    if (!(weights->shape() == expected))
      throw ConfigError("weight file dimensions do not match the configuration");
  }

  std::optional<double> theta;
  if (spec.detector == DetectorKind::lmmse || spec.detector == DetectorKind::mf)
    theta = spec.calibration_frames > 0
                ? calibrate_threshold(spec.detector, cfg, point, spec.calibration_frames)
                : spec.threshold;

  std::vector<PointResult> partial(spec.threads);
  detail::parallel_frames(spec.frames, spec.threads, [&](int t, int stride) {
    PointResult& r = partial[t];
    if (with_mud) r.mud = ThroughputStats{};
    for (std::uint64_t f = t; f < spec.frames; f += stride) {
      const Frame frame = synthesize_frame(cfg, point, f);
      BinaryMatrix S_hat;
      switch (spec.detector) {
        case DetectorKind::mpad:
        case DetectorKind::mpad_weighted:
          S_hat = detect(frame, cfg, params, weights).S_hat;
          break;
        case DetectorKind::lmmse:
        case DetectorKind::mf:
          S_hat = row_constrained_decision(detail::baseline_scores(spec.detector, frame, cfg), *theta);
          break;
        case DetectorKind::oracle:
          S_hat = frame.S;
          break;
      }
      tally_detection(r, frame.S, S_hat);
      if (with_mud) r.mud->add_frame(frame_packet_outcomes(frame, S_hat, cfg.mse_threshold));
    }
  });

  PointResult total;
  if (with_mud) total.mud = ThroughputStats{};
  for (const auto& r : partial) total.merge(r);
  total.threshold = theta;
  total.swept_value = spec.parameter.empty() ? 0.0 : get_config_field(cfg, spec.parameter);
  total.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return total;
}

inline RunReport run_sweep(const SweepSpec& spec, const std::string& command, bool with_mud) {
  spec.validate();
  RunReport report;
  report.command = command;
  report.spec = spec;
  const auto cfgs = spec.points();
  for (std::size_t k = 0; k < cfgs.size(); ++k)
    report.points.push_back(evaluate_point(spec, cfgs[k], k, with_mud));
  return report;
}

inline RunReport run_eer_sweep(const SweepSpec& spec) { return run_sweep(spec, "eer", false); }

inline RunReport run_throughput_sweep(const SweepSpec& spec) {
  return run_sweep(spec, "throughput", true);
}

// EER against CSI error: the swept parameter is always channel_error_std.
inline RunReport run_robustness_sweep(SweepSpec spec) {
  if (spec.parameter.empty()) {
    spec.parameter = "channel_error_std";
    if (spec.values.empty()) spec.values = {spec.base.channel_error_std};
  }
  if (spec.parameter != "channel_error_std")
    throw ConfigError("robustness sweeps vary channel_error_std, not '" + spec.parameter + "'");
  return run_sweep(spec, "robustness", false);
}

namespace detail {

inline std::string csv_number(double v) { return format_double(v); }

}  // namespace detail

// One row per sweep point. Wall-clock seconds are written only when
// `timing` is set, so that repeated runs produce identical files.
inline void write_csv(std::ostream& out, const RunReport& report, bool timing = false) {
  using detail::csv_number;
  out << "swept_value,eer,throughput,fail_activity,fail_data,false_alarms,frames,seconds,"
         "eer_stderr,throughput_stderr,element_errors,missed_entries,false_alarm_entries,"
         "true_packets,threshold\n";
  for (const auto& p : report.points) {
    out << csv_number(p.swept_value) << ',' << csv_number(p.eer()) << ',';
    if (p.mud) out << csv_number(p.mud->throughput());
    out << ',' << p.activity_failures << ',';
    if (p.mud) out << p.mud->fail_data;
    out << ',';
    // Every falsely detected entry is accepted by the receiver.
    out << p.false_alarm_entries << ',' << p.frames << ',';
    if (timing) out << csv_number(p.seconds);
    out << ',' << csv_number(p.eer_stderr()) << ',';
    if (p.mud) out << csv_number(p.mud->throughput_stderr());
    out << ',' << p.element_errors << ',' << p.missed_entries << ',' << p.false_alarm_entries
        << ',' << p.true_packets << ',';
    if (p.threshold) out << csv_number(*p.threshold);
    out << '\n';
  }
}

inline nlohmann::json manifest(const RunReport& report) {
  nlohmann::json cfg;
  for (auto name : config_field_names()) {
    if (name == "rng_seed") cfg[std::string(name)] = report.spec.base.rng_seed;
    else cfg[std::string(name)] = get_config_field(report.spec.base, name);
  }
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points) {
    nlohmann::json j{{"swept_value", p.swept_value},
                     {"seconds", p.seconds},
                     {"eer", p.eer()},
                     {"frames", p.frames}};
    if (p.threshold) j["threshold"] = *p.threshold;
    points.push_back(j);
  }
  return {{"version", report.version},
          {"command", report.command},
          {"config", cfg},
          {"seed", report.spec.base.rng_seed},
          {"parameter", report.spec.parameter},
          {"values", report.spec.values},
          {"detector", to_string(report.spec.detector)},
          {"frames_per_point", report.spec.frames},
          {"threads", report.spec.threads},
          {"points", points}};
}

// ---------------------------------------------------------------------------
// Training-set export.
//
// Binary, little-endian. Header:
//   char[8]  magic "FSRADS01"
//   u32      format version (1)
//   u32      N_s, u32 N_p, u32 M (real-stacked antennas)
//   u64      number of records
//   u64      master seed
// Each record:
//   u32      payload byte count (excluding this field)
//   f64      noise variance per real component, f64 p_a, f64 p_0
//   f64[M*N_p]   Y, row-major
//   f64[M*N_s]   H_csi, row-major
//   u8[N_s*N_p]  labels in slot-major order s_11..s_Ns1, s_12..s_Ns2, ...
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes little-endian");

inline constexpr char kDatasetMagic[8] = {'F', 'S', 'R', 'A', 'D', 'S', '0', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::uint32_t n_devices = 0;
  std::uint32_t n_slots = 0;
  std::uint32_t n_antennas = 0;
  std::uint64_t n_records = 0;
  std::uint64_t seed = 0;

  std::uint32_t record_bytes() const {
    return static_cast<std::uint32_t>(8 * (3 + n_antennas * n_slots + n_antennas * n_devices) +
                                      n_devices * n_slots);
  }
};

struct DatasetRecord {
  double noise_var_real = 0;
  double activation_prob = 0;
  double entry_prior = 0;
  Eigen::MatrixXd Y;
  Eigen::MatrixXd H_csi;
  std::vector<std::uint8_t> labels;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool read_pod(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

inline void write_row_major(std::ostream& out, const Eigen::MatrixXd& X) {
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) write_pod(out, X(i, j));
}

}  // namespace detail

inline void write_dataset_header(std::ostream& out, const DatasetHeader& h) {
  out.write(kDatasetMagic, sizeof kDatasetMagic);
  detail::write_pod(out, h.version);
  detail::write_pod(out, h.n_devices);
  detail::write_pod(out, h.n_slots);
  detail::write_pod(out, h.n_antennas);
  detail::write_pod(out, h.n_records);
  detail::write_pod(out, h.seed);
}

inline void write_dataset_record(std::ostream& out, const DatasetHeader& h, const Frame& f,
                                 const SystemConfig& cfg) {
  detail::write_pod(out, h.record_bytes());
  detail::write_pod(out, cfg.noise_var_real());
  detail::write_pod(out, cfg.activation_prob);
  detail::write_pod(out, cfg.entry_prior());
  detail::write_row_major(out, f.rx_fixed.Y);
  detail::write_row_major(out, f.rx_fixed.H_csi);
  for (Eigen::Index p = 0; p < f.S.cols(); ++p)
    for (Eigen::Index s = 0; s < f.S.rows(); ++s) detail::write_pod(out, f.S(s, p));
}

// Streams n_samples frames to `out`; nothing is held in memory beyond one frame.
inline void export_dataset(const SystemConfig& cfg, std::uint64_t n_samples, std::ostream& out) {
  cfg.validate();
  DatasetHeader h;
  h.n_devices = cfg.n_devices;
  h.n_slots = cfg.n_slots;
  h.n_antennas = cfg.n_antennas_real();
  h.n_records = n_samples;
  h.seed = cfg.rng_seed;
  write_dataset_header(out, h);
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const Frame f = synthesize_frame(cfg, 0, i);
    write_dataset_record(out, h, f, cfg);
    if (!out) throw std::runtime_error("dataset write failed at record " + std::to_string(i));
  }
}

inline void export_dataset(const SystemConfig& cfg, std::uint64_t n_samples,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  export_dataset(cfg, n_samples, out);
}

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open dataset '" + path + "'");
    char magic[8];
    if (!in_.read(magic, sizeof magic) || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
      throw std::runtime_error("not a dataset file (bad magic)");
    bool ok = detail::read_pod(in_, header_.version) && detail::read_pod(in_, header_.n_devices) &&
              detail::read_pod(in_, header_.n_slots) && detail::read_pod(in_, header_.n_antennas) &&
              detail::read_pod(in_, header_.n_records) && detail::read_pod(in_, header_.seed);
    if (!ok) throw std::runtime_error("dataset header truncated");
    if (header_.version != kDatasetVersion)
      throw std::runtime_error("unsupported dataset version " + std::to_string(header_.version));
  }

  const DatasetHeader& header() const { return header_; }

  // False at end of file; throws on a partial record.
  bool next(DatasetRecord& r) {
    std::uint32_t bytes = 0;
    if (!detail::read_pod(in_, bytes)) return false;
    if (bytes != header_.record_bytes()) throw std::runtime_error("dataset record size mismatch");
    const auto M = header_.n_antennas, Np = header_.n_slots, Ns = header_.n_devices;
    bool ok = detail::read_pod(in_, r.noise_var_real) && detail::read_pod(in_, r.activation_prob) &&
              detail::read_pod(in_, r.entry_prior);
    r.Y.resize(M, Np);
    r.H_csi.resize(M, Ns);
    for (std::uint32_t i = 0; ok && i < M; ++i)
      for (std::uint32_t j = 0; ok && j < Np; ++j) ok = detail::read_pod(in_, r.Y(i, j));
    for (std::uint32_t i = 0; ok && i < M; ++i)
      for (std::uint32_t j = 0; ok && j < Ns; ++j) ok = detail::read_pod(in_, r.H_csi(i, j));
    r.labels.resize(static_cast<std::size_t>(Ns) * Np);
    if (ok) ok = static_cast<bool>(in_.read(reinterpret_cast<char*>(r.labels.data()),
                                            static_cast<std::streamsize>(r.labels.size())));
    if (!ok) throw std::runtime_error("dataset record truncated");
    return true;
  }

 private:
  std::ifstream in_;
  DatasetHeader header_;
};

// ---------------------------------------------------------------------------
// Plotting: a minimal SVG line chart of one CSV column against swept_value.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw std::runtime_error("CSV has no column '" + name + "'");
  }
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(l);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

inline void write_svg_plot(std::ostream& out, const CsvTable& table, const std::string& y_column,
                           bool log_y) {
  const int xc = table.column("swept_value");
  const int yc = table.column(y_column);
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : table.rows) {
    if (static_cast<int>(r.size()) <= std::max(xc, yc) || r[yc].empty()) continue;
    double x = std::stod(r[xc]), y = std::stod(r[yc]);
    if (log_y && !(y > 0)) continue;
    pts.emplace_back(x, log_y ? std::log10(y) : y);
  }
  const double W = 640, Hh = 420, pad = 60;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << y_column << (log_y ? " (log10)" : "") << " vs swept_value</text>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << Hh - pad << "\" x2=\"" << W - pad << "\" y2=\""
      << Hh - pad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << Hh - pad
      << "\" stroke=\"black\"/>\n";
  if (!pts.empty()) {
    double x0 = pts[0].first, x1 = x0, y0 = pts[0].second, y1 = y0;
    for (auto [x, y] : pts) {
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return pad + (x - x0) / (x1 - x0) * (W - 2 * pad); };
    auto py = [&](double y) { return Hh - pad - (y - y0) / (y1 - y0) * (Hh - 2 * pad); };
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    for (auto [x, y] : pts)
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    auto label = [&](double x, double y, const std::string& s, const char* anchor) {
      out << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"11\" text-anchor=\"" << anchor
          << "\" font-family=\"sans-serif\">" << s << "</text>\n";
    };
    label(px(x0), Hh - pad + 16, detail::format_double(x0), "middle");
    label(px(x1), Hh - pad + 16, detail::format_double(x1), "middle");
    label(pad - 6, py(y0) + 4, detail::format_double(y0), "end");
    label(pad - 6, py(y1) + 4, detail::format_double(y1), "end");
  }
  out << "</svg>\n";
}

}  // namespace fsra
