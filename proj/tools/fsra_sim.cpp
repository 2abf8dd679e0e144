// Command-line driver for the fixed-symbol random-access simulator.
//
//   fsra_sim eer        --config c.cfg --sweep n_antennas_complex=20,30,40 --out eer.csv
//   fsra_sim throughput --config c.cfg --sweep n_antennas_complex=30,40 --out trp.csv
//   fsra_sim robustness --config c.cfg --sweep channel_error_std=0,0.1,0.3
//   fsra_sim detect     --config c.cfg --frame 7
//   fsra_sim gen-dataset --config c.cfg --samples 100000 --out train.bin
//   fsra_sim plot       --in eer.csv --column eer --log --out eer.svg

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsra/harness.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> frames;
  std::optional<std::uint64_t> seed;
  std::string weights_path;
  std::string detector = "mpad";
  std::string out;
  std::string sweep;
  int threads = 1;
  double threshold = 0.5;
  std::uint64_t calibration_frames = 0;
  bool timing = false;
  bool row_constraint = false;
};

void add_common(CLI::App* app, CommonOptions& o, bool sweep_flags) {
  app->add_option("--config", o.config_path, "Scenario config file (key = value)");
  app->add_option("--set", o.overrides, "Override one config field, key=value (repeatable)");
  app->add_option("--seed", o.seed, "Master RNG seed (overrides rng_seed)");
  app->add_option("--weights", o.weights_path, "Weight file for the weighted detector");
  app->add_option("--detector", o.detector, "mpad | mpad_weighted | lmmse | mf | oracle");
  app->add_flag("--row-constraint", o.row_constraint, "Row-constrained hard decision for MP-AD");
  if (!sweep_flags) return;
  app->add_option("--frames", o.frames, "Frames per sweep point");
  app->add_option("--out", o.out, "Output CSV (default: stdout)");
  app->add_option("--sweep", o.sweep, "param=v1,v2,... over one config field");
  app->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--threshold", o.threshold, "Baseline decision threshold");
  app->add_option("--calibrate-frames", o.calibration_frames,
                  "Fit the baseline threshold on this many validation frames per point");
  app->add_flag("--timing", o.timing, "Write wall-clock seconds into the CSV");
}

fsra::SystemConfig build_config(const CommonOptions& o) {
  fsra::SystemConfig cfg = o.config_path.empty() ? fsra::SystemConfig{} : fsra::load_config(o.config_path);
  for (const auto& kv : o.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw fsra::ConfigError("--set expects key=value, got '" + kv + "'");
    fsra::set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.rng_seed = *o.seed;
  cfg.validate();
  return cfg;
}

fsra::SweepSpec build_spec(const CommonOptions& o) {
  fsra::SweepSpec spec;
  spec.base = build_config(o);
  if (o.frames) spec.frames = *o.frames;
  spec.detector = fsra::parse_detector(o.detector);
  if (!o.weights_path.empty())
    spec.weights = std::make_shared<fsra::WeightSet>(fsra::load_weights(o.weights_path));
  if (spec.detector == fsra::DetectorKind::mpad_weighted && !spec.weights)
    throw fsra::ConfigError("--detector mpad_weighted needs --weights");
  spec.threads = o.threads;
  spec.threshold = o.threshold;
  spec.calibration_frames = o.calibration_frames;
  spec.row_constraint = o.row_constraint;
  if (!o.sweep.empty()) {
    auto eq = o.sweep.find('=');
    if (eq == std::string::npos) throw fsra::ConfigError("--sweep expects param=v1,v2,...");
    spec.parameter = o.sweep.substr(0, eq);
    std::stringstream values(o.sweep.substr(eq + 1));
    std::string item;
    while (std::getline(values, item, ','))
      spec.values.push_back(fsra::detail::parse_number<double>(spec.parameter, item));
  }
  return spec;
}

void emit(const fsra::RunReport& report, const CommonOptions& o) {
  if (o.out.empty()) {
    fsra::write_csv(std::cout, report, o.timing);
    return;
  }
  std::ofstream csv(o.out);
  if (!csv) throw std::runtime_error("cannot write '" + o.out + "'");
  fsra::write_csv(csv, report, o.timing);
  std::ofstream man(o.out + ".manifest.json");
  man << fsra::manifest(report).dump(2) << '\n';
}

int run_detect(const CommonOptions& o, std::uint64_t frame_index) {
  const auto cfg = build_config(o);
  const auto frame = fsra::synthesize_frame(cfg, 0, frame_index);
  fsra::DetectorParams params = fsra::DetectorParams::from(cfg);
  params.row_constraint = o.row_constraint;
  const auto kind = fsra::parse_detector(o.detector);
  std::optional<fsra::WeightSet> weights;
  if (!o.weights_path.empty()) weights = fsra::load_weights(o.weights_path);
  if (kind == fsra::DetectorKind::mpad_weighted && !weights)
    throw fsra::ConfigError("--detector mpad_weighted needs --weights");

  Eigen::MatrixXd soft;
  fsra::BinaryMatrix S_hat;
  if (kind == fsra::DetectorKind::mpad || kind == fsra::DetectorKind::mpad_weighted) {
    auto r = fsra::detect(frame, cfg, params,
                          kind == fsra::DetectorKind::mpad_weighted ? &*weights : nullptr);
    soft = r.llr;
    S_hat = r.S_hat;
  } else if (kind == fsra::DetectorKind::oracle) {
    soft = frame.S.cast<double>();
    S_hat = frame.S;
  } else {
    soft = fsra::detail::baseline_scores(kind, frame, cfg);
    S_hat = fsra::row_constrained_decision(soft, o.threshold);
  }

  std::cout << "# frame " << frame_index << ", detector " << o.detector << ", seed "
            << cfg.rng_seed << "\n# device  true_slot  detected  scores per slot\n";
  long errors = 0;
  for (Eigen::Index s = 0; s < frame.S.rows(); ++s) {
    std::cout << std::setw(6) << s << "  " << std::setw(9) << fsra::slot_of(frame.S, s) << "  ";
    std::string bits;
    for (Eigen::Index p = 0; p < S_hat.cols(); ++p) {
      bits += S_hat(s, p) ? '1' : '0';
      errors += S_hat(s, p) != frame.S(s, p);
    }
    std::cout << std::setw(8) << bits << " ";
    for (Eigen::Index p = 0; p < soft.cols(); ++p)
      std::cout << ' ' << std::setw(10) << std::setprecision(4) << soft(s, p);
    std::cout << '\n';
  }
  std::cout << "# element errors: " << errors << " of " << frame.S.size() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-symbol aided grant-free random access simulator"};
  app.require_subcommand(1);

  CommonOptions eer_opt, trp_opt, rob_opt, det_opt, ds_opt;
  auto* eer = app.add_subcommand("eer", "Element error rate sweep");
  add_common(eer, eer_opt, true);
  auto* trp = app.add_subcommand("throughput", "Throughput and failure attribution sweep");
  add_common(trp, trp_opt, true);
  auto* rob = app.add_subcommand("robustness", "EER sweep over the CSI error std");
  add_common(rob, rob_opt, true);

  auto* det = app.add_subcommand("detect", "Detect one frame and print S_hat and LLRs");
  add_common(det, det_opt, false);
  std::uint64_t frame_index = 0;
  det->add_option("--frame", frame_index, "Frame index within the seed's stream");
  det->add_option("--threshold", det_opt.threshold, "Baseline decision threshold");

  auto* ds = app.add_subcommand("gen-dataset", "Export training samples");
  add_common(ds, ds_opt, false);
  std::uint64_t samples = 0;
  std::string ds_out;
  ds->add_option("--samples", samples, "Number of records")->required();
  ds->add_option("--out", ds_out, "Dataset file")->required();

  auto* plot = app.add_subcommand("plot", "SVG line chart of a CSV column");
  std::string plot_in, plot_out, plot_column = "eer";
  bool plot_log = false;
  plot->add_option("--in", plot_in, "Input CSV")->required();
  plot->add_option("--out", plot_out, "Output SVG (default: stdout)");
  plot->add_option("--column", plot_column, "Column to plot");
  plot->add_flag("--log", plot_log, "Logarithmic y axis");

  CLI11_PARSE(app, argc, argv);

  try {
    if (eer->parsed()) emit(fsra::run_eer_sweep(build_spec(eer_opt)), eer_opt);
    else if (trp->parsed()) emit(fsra::run_throughput_sweep(build_spec(trp_opt)), trp_opt);
    else if (rob->parsed()) emit(fsra::run_robustness_sweep(build_spec(rob_opt)), rob_opt);
    else if (det->parsed()) return run_detect(det_opt, frame_index);
    else if (ds->parsed()) fsra::export_dataset(build_config(ds_opt), samples, ds_out);
    else if (plot->parsed()) {
      std::ifstream in(plot_in);
      if (!in) throw std::runtime_error("cannot open '" + plot_in + "'");
      const auto table = fsra::read_csv(in);
      if (plot_out.empty()) {
        fsra::write_svg_plot(std::cout, table, plot_column, plot_log);
      } else {
        std::ofstream out(plot_out);
        fsra::write_svg_plot(out, table, plot_column, plot_log);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
