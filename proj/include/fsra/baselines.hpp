#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsra/model.hpp"

// Linear reference detectors for the activity-detection problem. Both produce
// soft estimates of S; the hard decision imposes the one-slot-per-device rule.
namespace fsra {

using SoftScoreMatrix = Eigen::MatrixXd;

struct LmmseOptions {
  // Center on the Bernoulli prior mean p0. Off gives the plain zero-mean form.
  bool center = true;
  // Diagonal loading used when the noise variance is exactly zero.
  double ridge = 1e-12;
};

// scores = p0 + c H^T (c H H^T + noise_var I)^{-1} (Y - p0 H 1),  c = p0 (1 - p0).
// noise_var is per real-stacked component.
inline SoftScoreMatrix lmmse_soft(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& H,
                                  double noise_var, double entry_prior,
                                  const LmmseOptions& opt = {}) {
  if (Y.rows() != H.rows()) throw std::invalid_argument("lmmse_soft: dimension mismatch");
  const double c = opt.center ? entry_prior * (1.0 - entry_prior) : 1.0;
  const double mean = opt.center ? entry_prior : 0.0;

  Eigen::MatrixXd system = c * (H * H.transpose());
  const double load = noise_var > 0.0 ? noise_var : opt.ridge;
  system.diagonal().array() += load;

  Eigen::MatrixXd centered = Y;
  if (mean != 0.0) centered.colwise() -= mean * H.rowwise().sum();

  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) throw std::runtime_error("lmmse_soft: singular system matrix");
  SoftScoreMatrix scores = c * (H.transpose() * llt.solve(centered));
  scores.array() += mean;
  return scores;
}

// scores[s,p] = h_s^T y_p / ||h_s||^2
inline SoftScoreMatrix mf_soft(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& H) {
  if (Y.rows() != H.rows()) throw std::invalid_argument("mf_soft: dimension mismatch");
  const Eigen::VectorXd norms = H.colwise().squaredNorm().transpose();
  for (Eigen::Index s = 0; s < norms.size(); ++s)
    if (!(norms[s] > 0.0))
      throw std::invalid_argument("mf_soft: channel column " + std::to_string(s) + " has zero norm");
  SoftScoreMatrix scores = H.transpose() * Y;
  scores.array().colwise() /= norms.array();
  return scores;
}

// Per row: 1 at the argmax (lowest index on ties) iff it reaches theta.
inline IndicatorMatrix row_constrained_decision(const SoftScoreMatrix& scores, double theta) {
  IndicatorMatrix S = IndicatorMatrix::Zero(scores.rows(), scores.cols());
  if (scores.cols() == 0) return S;
  for (Eigen::Index s = 0; s < scores.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index p = 1; p < scores.cols(); ++p)
      if (scores(s, p) > scores(s, best)) best = p;
    if (scores(s, best) >= theta) S(s, best) = 1;
  }
  return S;
}

// Accumulates, for every threshold of a grid, the element errors that
// row_constrained_decision would make. Used to calibrate theta on
// validation frames.
class ThresholdCalibrator {
 public:
  explicit ThresholdCalibrator(std::vector<double> grid)
      : grid_(std::move(grid)), errors_(grid_.size(), 0) {
    if (grid_.empty()) throw std::invalid_argument("ThresholdCalibrator: empty grid");
  }

  void add(const SoftScoreMatrix& scores, const IndicatorMatrix& truth) {
    for (Eigen::Index s = 0; s < scores.rows(); ++s) {
      Eigen::Index best = 0;
      for (Eigen::Index p = 1; p < scores.cols(); ++p)
        if (scores(s, p) > scores(s, best)) best = p;
      long ones = 0;
      for (Eigen::Index p = 0; p < truth.cols(); ++p) ones += truth(s, p);
      // Declaring `best` active fixes that entry and leaves the other true ones.
      const long if_on = ones - truth(s, best) + (truth(s, best) ? 0 : 1);
      const long if_off = ones;
      for (std::size_t g = 0; g < grid_.size(); ++g)
        errors_[g] += scores(s, best) >= grid_[g] ? if_on : if_off;
    }
  }

  // Lowest-error threshold; the first grid point wins ties.
  double best() const {
    std::size_t arg = 0;
    for (std::size_t g = 1; g < grid_.size(); ++g)
      if (errors_[g] < errors_[arg]) arg = g;
    return grid_[arg];
  }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<long>& errors() const { return errors_; }

  static std::vector<double> default_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 150; ++i) g.push_back(0.01 * i);
    return g;
  }

 private:
  std::vector<double> grid_;
  std::vector<long> errors_;
};

}  // namespace fsra
