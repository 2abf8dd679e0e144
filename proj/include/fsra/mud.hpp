#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsra/model.hpp"

// Second phase of the access scheme: per-slot MMSE recovery of the Gaussian
// data symbols of the devices found active, and packet accounting.
namespace fsra {

struct MmseRecovery {
  Eigen::MatrixXcd symbols;  // K x T
};

// X = P_r H^H (P_r H H^H + noise_var I)^{-1} Y, evaluated through the
// equivalent K x K system (H^H H + noise_var/P_r I)^{-1} H^H Y.
inline MmseRecovery mmse_recover(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& H,
                                 double noise_var, double rx_power = 1.0) {
  if (H.cols() == 0) return {Eigen::MatrixXcd(0, Y.cols())};
  if (Y.rows() != H.rows()) throw std::invalid_argument("mmse_recover: dimension mismatch");
  Eigen::MatrixXcd gram = H.adjoint() * H;
  gram.diagonal().array() += noise_var / rx_power;
  return {gram.ldlt().solve(H.adjoint() * Y)};
}

struct SlotRecovery {
  int slot = 0;
  std::vector<int> devices;  // detected active, ascending
  Eigen::MatrixXcd symbols;  // devices x payload
  // MSE against the transmitted payload for devices that truly sent in this
  // slot, NaN for false alarms.
  std::vector<double> mse;
};

// MUD for one slot using the receiver's CSI and the detected device set.
inline SlotRecovery recover_slot(const Frame& frame, const BinaryMatrix& S_hat, int slot) {
  SlotRecovery r;
  r.slot = slot;
  for (Eigen::Index s = 0; s < S_hat.rows(); ++s)
    if (S_hat(s, slot)) r.devices.push_back(static_cast<int>(s));
  const Eigen::MatrixXcd csi = frame.channel.csi();
  Eigen::MatrixXcd H_sub(csi.rows(), static_cast<Eigen::Index>(r.devices.size()));
  for (std::size_t k = 0; k < r.devices.size(); ++k) H_sub.col(k) = csi.col(r.devices[k]);
  r.symbols = mmse_recover(frame.rx_data[slot], H_sub, frame.noise_var).symbols;
  r.mse.assign(r.devices.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < r.devices.size(); ++k) {
    const int s = r.devices[k];
    if (!frame.S(s, slot)) continue;
    const auto& x = frame.tx_data[s];
    r.mse[k] = (r.symbols.row(k).transpose() - x).squaredNorm() / static_cast<double>(x.size());
  }
  return r;
}

enum class PacketStatus { success, fail_activity_detection, fail_data_recovery, false_alarm_acceptance };

struct PacketOutcome {
  int device = 0;
  int slot = 0;
  PacketStatus status = PacketStatus::success;
};

// device_mse[s]: MSE of device s's packet as recovered in its true slot
// (NaN when not recovered). A true packet succeeds iff its slot's column of
// S_hat matches S exactly and its MSE is below eps_rec. Every falsely
// detected entry is accepted by the receiver and reported separately.
inline std::vector<PacketOutcome> classify_packets(const IndicatorMatrix& S,
                                                   const BinaryMatrix& S_hat,
                                                   const std::vector<double>& device_mse,
                                                   double eps_rec) {
  if (S.rows() != S_hat.rows() || S.cols() != S_hat.cols() ||
      static_cast<Eigen::Index>(device_mse.size()) != S.rows())
    throw std::invalid_argument("classify_packets: dimension mismatch");
  std::vector<bool> column_ok(S.cols());
  for (Eigen::Index p = 0; p < S.cols(); ++p) column_ok[p] = S.col(p) == S_hat.col(p);

  std::vector<PacketOutcome> out;
  for (Eigen::Index s = 0; s < S.rows(); ++s) {
    const int p = slot_of(S, s);
    if (p < 0) continue;
    PacketStatus status;
    if (!column_ok[p]) status = PacketStatus::fail_activity_detection;
    else if (device_mse[s] < eps_rec) status = PacketStatus::success;
    else status = PacketStatus::fail_data_recovery;
    out.push_back({static_cast<int>(s), p, status});
  }
  for (Eigen::Index s = 0; s < S.rows(); ++s)
    for (Eigen::Index p = 0; p < S.cols(); ++p)
      if (S_hat(s, p) && !S(s, p))
        out.push_back({static_cast<int>(s), static_cast<int>(p), PacketStatus::false_alarm_acceptance});
  return out;
}

// Counts over a set of frames. All counters are integers so that merging
// partial results in any order gives identical totals.
struct ThroughputStats {
  std::uint64_t frames = 0;
  std::uint64_t true_packets = 0;
  std::uint64_t successes = 0;
  std::uint64_t fail_activity = 0;
  std::uint64_t fail_data = 0;
  std::uint64_t false_alarms = 0;
  std::uint64_t successes_sq = 0;  // sum over frames of successes^2

  void add_frame(const std::vector<PacketOutcome>& outcomes) {
    std::uint64_t ok = 0;
    for (const auto& o : outcomes) {
      switch (o.status) {
        case PacketStatus::success: ++ok; ++true_packets; break;
        case PacketStatus::fail_activity_detection: ++fail_activity; ++true_packets; break;
        case PacketStatus::fail_data_recovery: ++fail_data; ++true_packets; break;
        case PacketStatus::false_alarm_acceptance: ++false_alarms; break;
      }
    }
    successes += ok;
    successes_sq += ok * ok;
    ++frames;
  }

  void merge(const ThroughputStats& o) {
    frames += o.frames;
    true_packets += o.true_packets;
    successes += o.successes;
    fail_activity += o.fail_activity;
    fail_data += o.fail_data;
    false_alarms += o.false_alarms;
    successes_sq += o.successes_sq;
  }

  // Mean successful packets per frame.
  double throughput() const { return frames ? static_cast<double>(successes) / frames : 0.0; }

  double throughput_stderr() const {
    if (frames < 2) return 0.0;
    const double n = static_cast<double>(frames);
    const double mean = successes / n;
    const double var = (successes_sq / n - mean * mean) * n / (n - 1);
    return std::sqrt(std::max(var, 0.0) / n);
  }
};

inline ThroughputStats throughput(const std::vector<std::vector<PacketOutcome>>& per_frame) {
  if (per_frame.empty()) throw std::invalid_argument("throughput: need at least one frame");
  ThroughputStats st;
  for (const auto& f : per_frame) st.add_frame(f);
  return st;
}

}  // namespace fsra
