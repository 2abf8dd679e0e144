#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fsra/baselines.hpp"
#include "fsra/harness.hpp"

using namespace fsra;

namespace {

Eigen::MatrixXd gaussian(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return g(rng); });
}

double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

}  // namespace

TEST(Lmmse, IdentityChannelNearNoiseless) {
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd S(4, 2);
  S << 1, 0, 0, 0, 0, 1, 1, 0;
  LmmseOptions plain;
  plain.center = false;
  const auto scores = lmmse_soft(S, H, 1e-12, 0.1, plain);
  EXPECT_LE((scores - S).cwiseAbs().maxCoeff(), 1e-9);
  const auto centered = lmmse_soft(S, H, 1e-12, 0.1);
  EXPECT_LE((centered - S).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Lmmse, MeanObservationGivesPrior) {
  const Eigen::MatrixXd H = gaussian(6, 4, 1);
  const double p0 = 0.2;
  const Eigen::MatrixXd Y = (p0 * H.rowwise().sum()).replicate(1, 3);
  const auto scores = lmmse_soft(Y, H, 0.3, p0);
  EXPECT_LE((scores.array() - p0).abs().maxCoeff(), 1e-12);
}

TEST(Lmmse, MatchesDeviceSpaceSolve) {
  // Same estimator through the N_s x N_s information form and a QR solve:
  // p0 + (H^T H / s2 + I / c)^{-1} H^T (Y - p0 H 1) / s2.
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const Eigen::MatrixXd H = gaussian(8, 5, seed);
    const Eigen::MatrixXd Y = gaussian(8, 3, 100 + seed);
    const double p0 = 0.05 + 0.02 * seed, s2 = 0.1 * seed;
    const double c = p0 * (1 - p0);
    Eigen::MatrixXd info = H.transpose() * H / s2;
    info.diagonal().array() += 1.0 / c;
    Eigen::MatrixXd centered = Y;
    centered.colwise() -= p0 * H.rowwise().sum();
    Eigen::MatrixXd expected =
        info.colPivHouseholderQr().solve(H.transpose() * centered / s2).array() + p0;
    EXPECT_LE(max_rel_diff(lmmse_soft(Y, H, s2, p0), expected), 1e-10);
  }
}

TEST(Lmmse, RidgeWhenNoiseless) {
  const Eigen::MatrixXd H = gaussian(3, 6, 2);
  const Eigen::MatrixXd Y = gaussian(3, 2, 3);
  EXPECT_TRUE(lmmse_soft(Y, H, 0.0, 0.1).allFinite());
  EXPECT_THROW(lmmse_soft(Y, gaussian(4, 6, 2), 0.1, 0.1), std::invalid_argument);
}

TEST(MatchedFilter, OrthonormalAndZero) {
  const Eigen::MatrixXd Q = gaussian(6, 6, 4).householderQr().householderQ();
  const Eigen::MatrixXd H = Q.leftCols(3);
  Eigen::MatrixXd S(3, 2);
  S << 1, 0, 0, 1, 0, 0;
  EXPECT_LE((mf_soft(H * S, H) - S).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(mf_soft(Eigen::MatrixXd::Zero(6, 2), H).norm(), 0.0);
}

TEST(MatchedFilter, ProjectionCoefficient) {
  // Score = least-squares fit of y_p by the single column h_s.
  const Eigen::MatrixXd H = gaussian(7, 4, 5);
  const Eigen::MatrixXd Y = gaussian(7, 3, 6);
  const auto scores = mf_soft(Y, H);
  for (int s = 0; s < 4; ++s)
    for (int p = 0; p < 3; ++p) {
      const Eigen::MatrixXd col = H.col(s);
      const double fit = col.colPivHouseholderQr().solve(Y.col(p))(0);
      EXPECT_NEAR(scores(s, p), fit, 1e-12 * std::max(1.0, std::abs(fit)));
    }
}

TEST(MatchedFilter, ZeroColumnRejected) {
  Eigen::MatrixXd H = gaussian(4, 3, 7);
  H.col(1).setZero();
  EXPECT_THROW(mf_soft(gaussian(4, 2, 8), H), std::invalid_argument);
}

TEST(Baselines, CoincideForOrthogonalColumnsWithoutNoise) {
  const Eigen::MatrixXd Q = gaussian(5, 5, 9).householderQr().householderQ();
  const Eigen::MatrixXd H = Q * 2.0;
  const Eigen::MatrixXd Y = gaussian(5, 3, 10);
  EXPECT_LE((lmmse_soft(Y, H, 1e-14, 0.1) - mf_soft(Y, H)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RowDecision, Examples) {
  Eigen::MatrixXd scores(4, 3);
  scores << 0.2, 0.9, 0.1,
            0.6, 0.6, 0.0,
            0.3, 0.2, 0.1,
            -1, -2, -3;
  const auto S = row_constrained_decision(scores, 0.5);
  IndicatorMatrix expected(4, 3);
  expected << 0, 1, 0,
              1, 0, 0,
              0, 0, 0,
              0, 0, 0;
  EXPECT_EQ(S, expected);
  EXPECT_TRUE(is_row_constrained(row_constrained_decision(gaussian(50, 4, 11), -10)));
  EXPECT_EQ(row_constrained_decision(scores, -5).cast<int>().sum(), 4);
}

TEST(Calibration, MatchesBruteForceGridSearch) {
  SystemConfig cfg;
  cfg.n_devices = 40;
  cfg.n_antennas_complex = 10;
  cfg.activation_prob = 0.1;
  const auto grid = ThresholdCalibrator::default_grid();
  ThresholdCalibrator cal(grid);
  std::vector<long> brute(grid.size(), 0);
  for (int k = 0; k < 50; ++k) {
    const auto f = synthesize_frame(cfg, 0, k, Purpose::validation);
    const auto scores = lmmse_soft(f.rx_fixed.Y, f.rx_fixed.H_csi, cfg.noise_var_real(),
                                   cfg.entry_prior());
    cal.add(scores, f.S);
    for (std::size_t g = 0; g < grid.size(); ++g)
      brute[g] += (row_constrained_decision(scores, grid[g]).array() != f.S.array()).count();
  }
  EXPECT_EQ(cal.errors(), brute);
  const auto best = std::min_element(brute.begin(), brute.end()) - brute.begin();
  EXPECT_EQ(cal.best(), grid[best]);
}

TEST(Calibration, NoWorseThanHalf) {
  SystemConfig cfg;
  cfg.n_devices = 40;
  cfg.n_antennas_complex = 10;
  cfg.activation_prob = 0.1;
  const auto grid = ThresholdCalibrator::default_grid();
  const auto half = std::find(grid.begin(), grid.end(), 0.5) - grid.begin();
  ASSERT_LT(half, static_cast<long>(grid.size()));
  for (auto kind : {DetectorKind::lmmse, DetectorKind::mf}) {
    ThresholdCalibrator cal(grid);
    for (int k = 0; k < 10000; ++k) {
      const auto f = synthesize_frame(cfg, 0, k, Purpose::validation);
      cal.add(detail::baseline_scores(kind, f, cfg), f.S);
    }
    const auto best = std::find(grid.begin(), grid.end(), cal.best()) - grid.begin();
    EXPECT_LE(cal.errors()[best], cal.errors()[half]) << to_string(kind);
    EXPECT_EQ(calibrate_threshold(kind, cfg, 0, 10000), cal.best());
  }
}

TEST(Calibration, EmptyGridRejected) {
  EXPECT_THROW(ThresholdCalibrator(std::vector<double>{}), std::invalid_argument);
}
