#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsra/config.hpp"
#include "fsra/rng.hpp"

namespace fsra {

// Binary device-slot matrix, N_s x N_p. Generated indicators have at most one
// 1 per row; detector outputs use the same type without that guarantee.
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using IndicatorMatrix = BinaryMatrix;

inline bool is_row_constrained(const BinaryMatrix& S) {
  for (Eigen::Index s = 0; s < S.rows(); ++s) {
    int ones = 0;
    for (Eigen::Index p = 0; p < S.cols(); ++p) ones += S(s, p) != 0;
    if (ones > 1) return false;
  }
  return true;
}

// Slot chosen by device s, or -1 when inactive (first 1 if the row has several).
inline int slot_of(const BinaryMatrix& S, Eigen::Index s) {
  for (Eigen::Index p = 0; p < S.cols(); ++p)
    if (S(s, p)) return static_cast<int>(p);
  return -1;
}

struct ComplexChannel {
  Eigen::MatrixXcd H;      // M* x N_s, true channel
  Eigen::MatrixXcd error;  // M* x N_s, estimation error

  Eigen::MatrixXcd csi() const { return H + error; }
};

// Real/imaginary parts stacked as rows: [Re; Im].
struct StackedReal {
  Eigen::MatrixXd Y;      // M x N_p
  Eigen::MatrixXd H;      // M x N_s, true
  Eigen::MatrixXd H_csi;  // M x N_s, as known at the receiver
};

struct Frame {
  IndicatorMatrix S;
  ComplexChannel channel;
  Eigen::MatrixXcd fixed_noise;  // M* x N_p
  Eigen::MatrixXcd rx_fixed_complex;
  StackedReal rx_fixed;
  std::vector<Eigen::MatrixXcd> rx_data;  // per slot, M* x payload
  std::vector<Eigen::VectorXcd> tx_data;  // per device; empty when inactive
  double noise_var = 0.0;                 // complex noise variance
};

inline void fill_complex_normal(Eigen::MatrixXcd& out, Rng& rng, double variance) {
  if (variance == 0.0) {
    out.setZero();
    return;
  }
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      double re = n(rng);
      double im = n(rng);
      out(i, j) = {re, im};
    }
}

inline IndicatorMatrix make_indicator(const SystemConfig& cfg, Rng& rng) {
  IndicatorMatrix S = IndicatorMatrix::Zero(cfg.n_devices, cfg.n_slots);
  std::bernoulli_distribution active(cfg.activation_prob);
  std::uniform_int_distribution<int> slot(0, cfg.n_slots - 1);
  for (int s = 0; s < cfg.n_devices; ++s)
    if (active(rng)) S(s, slot(rng)) = 1;
  return S;
}

inline ComplexChannel draw_channel(const SystemConfig& cfg, Rng& channel_rng, Rng& error_rng) {
  ComplexChannel ch;
  ch.H.resize(cfg.n_antennas_complex, cfg.n_devices);
  ch.error.resize(cfg.n_antennas_complex, cfg.n_devices);
  fill_complex_normal(ch.H, channel_rng, 1.0);
  fill_complex_normal(ch.error, error_rng, cfg.channel_error_std * cfg.channel_error_std);
  return ch;
}

inline Eigen::MatrixXcd draw_noise(Eigen::Index rows, Eigen::Index cols, double noise_var,
                                   Rng& rng) {
  Eigen::MatrixXcd N(rows, cols);
  fill_complex_normal(N, rng, noise_var);
  return N;
}

// Received fixed-symbol matrix: every active device sends the unit symbol.
inline Eigen::MatrixXcd synthesize_fixed_symbol_rx(const IndicatorMatrix& S,
                                                   const Eigen::MatrixXcd& H, double noise_var,
                                                   Rng& rng) {
  if (H.cols() != S.rows())
    throw std::invalid_argument("synthesize_fixed_symbol_rx: channel has " +
                                std::to_string(H.cols()) + " columns but S has " +
                                std::to_string(S.rows()) + " rows");
  Eigen::MatrixXcd Y = H * S.cast<double>().cast<std::complex<double>>();
  Y += draw_noise(H.rows(), S.cols(), noise_var, rng);
  return Y;
}

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXcd& X) {
  Eigen::MatrixXd out(2 * X.rows(), X.cols());
  out.topRows(X.rows()) = X.real();
  out.bottomRows(X.rows()) = X.imag();
  return out;
}

inline Eigen::MatrixXcd unstack_rows(const Eigen::MatrixXd& X) {
  if (X.rows() % 2 != 0) throw std::invalid_argument("unstack_rows: odd row count");
  const Eigen::Index half = X.rows() / 2;
  Eigen::MatrixXcd out(half, X.cols());
  out.real() = X.topRows(half);
  out.imag() = X.bottomRows(half);
  return out;
}

inline StackedReal stack_real(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& H,
                              const Eigen::MatrixXcd& H_csi) {
  if (Y.rows() != H.rows() || H.rows() != H_csi.rows() || H.cols() != H_csi.cols())
    throw std::invalid_argument("stack_real: inconsistent dimensions");
  return {stack_rows(Y), stack_rows(H), stack_rows(H_csi)};
}

inline Frame synthesize_frame(const SystemConfig& cfg, FrameStreams& streams) {
  Frame f;
  f.noise_var = cfg.noise_var();
  f.S = make_indicator(cfg, streams.activity);
  f.channel = draw_channel(cfg, streams.channel, streams.channel_error);

  const auto cS = f.S.cast<double>().cast<std::complex<double>>();
  f.fixed_noise = draw_noise(cfg.n_antennas_complex, cfg.n_slots, f.noise_var, streams.noise);
  f.rx_fixed_complex = f.channel.H * cS + f.fixed_noise;
  f.rx_fixed = stack_real(f.rx_fixed_complex, f.channel.H, f.channel.csi());

  f.tx_data.resize(cfg.n_devices);
  std::normal_distribution<double> unit(0.0, std::sqrt(0.5));
  for (int s = 0; s < cfg.n_devices; ++s) {
    if (slot_of(f.S, s) < 0) continue;
    auto& x = f.tx_data[s];
    x.resize(cfg.payload_symbols);
    for (int t = 0; t < cfg.payload_symbols; ++t) {
      double re = unit(streams.data);
      double im = unit(streams.data);
      x[t] = {re, im};
    }
  }
  f.rx_data.resize(cfg.n_slots);
  for (int p = 0; p < cfg.n_slots; ++p) {
    auto& Yp = f.rx_data[p];
    Yp = draw_noise(cfg.n_antennas_complex, cfg.payload_symbols, f.noise_var, streams.noise);
    for (int s = 0; s < cfg.n_devices; ++s)
      if (f.S(s, p)) Yp += f.channel.H.col(s) * f.tx_data[s].transpose();
  }
  return f;
}

// Frame number `frame` of sweep point `point`, from the config's master seed.
inline Frame synthesize_frame(const SystemConfig& cfg, std::uint64_t point, std::uint64_t frame,
                              Purpose purpose = Purpose::test) {
  auto streams = FrameStreams::derive(cfg.rng_seed, point, frame, purpose);
  return synthesize_frame(cfg, streams);
}

}  // namespace fsra
