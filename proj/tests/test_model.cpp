#include <cmath>
#include <complex>
#include <limits>

#include <gtest/gtest.h>

#include "fsra/model.hpp"

using namespace fsra;

namespace {

SystemConfig small_config() {
  SystemConfig cfg;
  cfg.n_devices = 12;
  cfg.n_slots = 3;
  cfg.n_antennas_complex = 5;
  cfg.activation_prob = 0.3;
  cfg.snr_db = 10;
  return cfg;
}

// y_mp = sum_i h_mi s_ip, one antenna and one slot at a time.
Eigen::MatrixXcd per_antenna_sum(const IndicatorMatrix& S, const Eigen::MatrixXcd& H) {
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(H.rows(), S.cols());
  for (Eigen::Index m = 0; m < H.rows(); ++m)
    for (Eigen::Index p = 0; p < S.cols(); ++p)
      for (Eigen::Index i = 0; i < S.rows(); ++i)
        if (S(i, p)) Y(m, p) += H(m, i);
  return Y;
}

}  // namespace

TEST(Indicator, DegenerateActivationProbabilities) {
  SystemConfig cfg = small_config();
  Rng rng(3);
  cfg.activation_prob = 0.0;
  EXPECT_EQ(make_indicator(cfg, rng).cast<int>().sum(), 0);
  cfg.activation_prob = 1.0;
  cfg.n_slots = 1;
  EXPECT_EQ(make_indicator(cfg, rng).cast<int>().sum(), cfg.n_devices);
}

TEST(Indicator, RowsHoldAtMostOneOne) {
  SystemConfig cfg = small_config();
  cfg.activation_prob = 0.9;
  Rng rng(5);
  for (int k = 0; k < 200; ++k) EXPECT_TRUE(is_row_constrained(make_indicator(cfg, rng)));
}

TEST(Indicator, EntryFrequencyMatchesPrior) {
  SystemConfig cfg;
  cfg.n_devices = 250000;
  cfg.n_slots = 4;
  cfg.activation_prob = 0.05;
  Rng rng(11);
  const auto S = make_indicator(cfg, rng);
  const double n = static_cast<double>(S.size());
  const double p0 = cfg.entry_prior();
  const double freq = S.cast<double>().sum() / n;
  EXPECT_NEAR(freq, p0, 3.0 * std::sqrt(p0 * (1 - p0) / n));
  // Each slot is equally likely.
  const double per_slot = cfg.activation_prob * cfg.n_devices / cfg.n_slots;
  for (int p = 0; p < cfg.n_slots; ++p)
    EXPECT_NEAR(S.col(p).cast<double>().sum(), per_slot, 4.0 * std::sqrt(per_slot));
}

TEST(Channel, ZeroErrorGivesExactCsi) {
  SystemConfig cfg = small_config();
  Rng a(1), b(2);
  auto ch = draw_channel(cfg, a, b);
  EXPECT_EQ(ch.error.norm(), 0.0);
  EXPECT_EQ(ch.csi(), ch.H);
}

TEST(Channel, MomentsOfChannelAndError) {
  SystemConfig cfg;
  cfg.n_devices = 1000;
  cfg.n_antennas_complex = 100;
  cfg.channel_error_std = 0.3;
  Rng a(21), b(22);
  const auto ch = draw_channel(cfg, a, b);
  const double n = static_cast<double>(ch.H.size());

  // |h|^2 is exponential with mean 1 and variance 1.
  EXPECT_NEAR(ch.H.squaredNorm() / n, 1.0, 3.0 / std::sqrt(n));
  const double ve = cfg.channel_error_std * cfg.channel_error_std;
  EXPECT_NEAR(ch.error.squaredNorm() / n, ve, 3.0 * ve / std::sqrt(n));
  // Circular symmetry: real and imaginary parts each carry half.
  EXPECT_NEAR(ch.H.real().squaredNorm() / n, 0.5, 3.0 * 0.5 * std::sqrt(2.0 / n));

  // Independence of H and H_e: E[h conj(e)] = 0, each part has variance ve/2.
  const std::complex<double> cross = (ch.H.array() * ch.error.conjugate().array()).sum() / n;
  const double sd = std::sqrt(ve / 2.0 / n);
  EXPECT_NEAR(cross.real(), 0.0, 3.0 * sd);
  EXPECT_NEAR(cross.imag(), 0.0, 3.0 * sd);
}

TEST(Received, ZeroInputGivesZero) {
  SystemConfig cfg = small_config();
  Rng rng(1);
  IndicatorMatrix S = IndicatorMatrix::Zero(cfg.n_devices, cfg.n_slots);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Random(cfg.n_antennas_complex, cfg.n_devices);
  EXPECT_EQ(synthesize_fixed_symbol_rx(S, H, 0.0, rng).norm(), 0.0);
}

TEST(Received, SingleDeviceSeesItsChannel) {
  Rng rng(1);
  IndicatorMatrix S(1, 2);
  S << 0, 1;
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Random(6, 1);
  auto Y = synthesize_fixed_symbol_rx(S, H, 0.0, rng);
  EXPECT_EQ(Y.col(0).norm(), 0.0);
  EXPECT_EQ(Y.col(1), H.col(0));
}

TEST(Received, MatchesPerAntennaSum) {
  SystemConfig cfg = small_config();
  cfg.activation_prob = 0.8;
  Rng rng(9), ch_rng(10), err_rng(11);
  for (int k = 0; k < 20; ++k) {
    const auto S = make_indicator(cfg, rng);
    const auto ch = draw_channel(cfg, ch_rng, err_rng);
    const auto Y = synthesize_fixed_symbol_rx(S, ch.H, 0.0, rng);
    EXPECT_EQ(Y, per_antenna_sum(S, ch.H));
  }
}

TEST(Received, DimensionMismatchThrows) {
  Rng rng(1);
  IndicatorMatrix S = IndicatorMatrix::Zero(4, 2);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(3, 5);
  EXPECT_THROW(synthesize_fixed_symbol_rx(S, H, 0.0, rng), std::invalid_argument);
}

TEST(Stacking, RealImagRows) {
  Eigen::MatrixXcd X(1, 1);
  X(0, 0) = {1.0, 2.0};
  Eigen::MatrixXd R = stack_rows(X);
  ASSERT_EQ(R.rows(), 2);
  EXPECT_EQ(R(0, 0), 1.0);
  EXPECT_EQ(R(1, 0), 2.0);

  Eigen::MatrixXcd Z(2, 3);
  Z << std::complex<double>(1, -1), 2, std::complex<double>(0, 3), -4, std::complex<double>(5, 5), 0;
  Eigen::MatrixXd RZ(4, 3);
  RZ << 1, 2, 0, -4, 5, 0, -1, 0, 3, 0, 5, 0;
  EXPECT_EQ(stack_rows(Z), RZ);
  EXPECT_EQ(unstack_rows(stack_rows(Z)), Z);
  EXPECT_THROW(unstack_rows(Eigen::MatrixXd::Zero(3, 1)), std::invalid_argument);
}

TEST(Stacking, CommutesWithBinaryProduct) {
  Rng rng(4);
  SystemConfig cfg = small_config();
  cfg.activation_prob = 0.7;
  for (int k = 0; k < 20; ++k) {
    const auto S = make_indicator(cfg, rng);
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Random(cfg.n_antennas_complex, cfg.n_devices);
    const Eigen::MatrixXd lhs = stack_rows(H) * S.cast<double>();
    const Eigen::MatrixXd rhs = stack_rows(H * S.cast<double>().cast<std::complex<double>>());
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Frame, DeterministicInSeedPointFrame) {
  SystemConfig cfg = small_config();
  cfg.channel_error_std = 0.2;
  const auto a = synthesize_frame(cfg, 2, 17);
  const auto b = synthesize_frame(cfg, 2, 17);
  EXPECT_EQ(a.S, b.S);
  EXPECT_EQ(a.channel.H, b.channel.H);
  EXPECT_EQ(a.channel.error, b.channel.error);
  EXPECT_EQ(a.rx_fixed.Y, b.rx_fixed.Y);
  for (int p = 0; p < cfg.n_slots; ++p) EXPECT_EQ(a.rx_data[p], b.rx_data[p]);

  const auto c = synthesize_frame(cfg, 2, 18);
  const auto d = synthesize_frame(cfg, 3, 17);
  const auto v = synthesize_frame(cfg, 2, 17, Purpose::validation);
  EXPECT_NE(a.channel.H, c.channel.H);
  EXPECT_NE(a.channel.H, d.channel.H);
  EXPECT_NE(a.channel.H, v.channel.H);
  cfg.rng_seed = 2;
  EXPECT_NE(a.channel.H, synthesize_frame(cfg, 2, 17).channel.H);
}

TEST(Frame, NoiseFreeReconstruction) {
  SystemConfig cfg = small_config();
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.channel_error_std = 0.1;
  for (int k = 0; k < 10; ++k) {
    const auto f = synthesize_frame(cfg, 0, k);
    EXPECT_EQ(f.rx_fixed_complex, per_antenna_sum(f.S, f.channel.H));
    EXPECT_EQ(f.rx_fixed.Y, stack_rows(f.rx_fixed_complex));
    EXPECT_EQ(f.rx_fixed.H, stack_rows(f.channel.H));
    EXPECT_EQ(f.rx_fixed.H_csi, stack_rows(f.channel.H + f.channel.error));
  }
}

TEST(Frame, NoiseSplitsEvenlyOverRealAndImag) {
  SystemConfig cfg;
  cfg.n_devices = 1;
  cfg.n_slots = 4;
  cfg.n_antennas_complex = 100;
  cfg.snr_db = -3;
  const double var = cfg.noise_var();
  double re = 0, im = 0, n = 0;
  for (int k = 0; k < 400; ++k) {
    const auto f = synthesize_frame(cfg, 0, k);
    re += f.fixed_noise.real().squaredNorm();
    im += f.fixed_noise.imag().squaredNorm();
    n += static_cast<double>(f.fixed_noise.size());
  }
  // Each component is N(0, var/2): sample variance has sd var/2 * sqrt(2/n).
  const double sd = var / 2.0 * std::sqrt(2.0 / n);
  EXPECT_NEAR(re / n, var / 2.0, 3.0 * sd);
  EXPECT_NEAR(im / n, var / 2.0, 3.0 * sd);
}

TEST(Frame, DataSymbolsHaveUnitPower) {
  SystemConfig cfg;
  cfg.n_devices = 100;
  cfg.n_slots = 2;
  cfg.n_antennas_complex = 1;
  cfg.activation_prob = 1.0;
  cfg.payload_symbols = 100;
  double power = 0, n = 0;
  for (int k = 0; k < 20; ++k) {
    const auto f = synthesize_frame(cfg, 0, k);
    for (int s = 0; s < cfg.n_devices; ++s) {
      ASSERT_EQ(f.tx_data[s].size(), cfg.payload_symbols);
      power += f.tx_data[s].squaredNorm();
      n += cfg.payload_symbols;
    }
  }
  EXPECT_NEAR(power / n, 1.0, 3.0 / std::sqrt(n));
}

TEST(Frame, DataReceptionPerSlot) {
  SystemConfig cfg = small_config();
  cfg.snr_db = std::numeric_limits<double>::infinity();
  const auto f = synthesize_frame(cfg, 0, 4);
  for (int s = 0; s < cfg.n_devices; ++s)
    EXPECT_EQ(f.tx_data[s].size() == 0, slot_of(f.S, s) < 0);
  for (int p = 0; p < cfg.n_slots; ++p) {
    Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(cfg.n_antennas_complex, cfg.payload_symbols);
    for (int s = 0; s < cfg.n_devices; ++s)
      if (f.S(s, p)) expected += f.channel.H.col(s) * f.tx_data[s].transpose();
    EXPECT_LE((f.rx_data[p] - expected).norm(), 1e-12);
  }
}
