#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsra/config.hpp"
#include "fsra/model.hpp"
#include "fsra/weights.hpp"

// Iterative activity detection on the factor graph with one sum node per
// (antenna, slot), one variable node per entry of S and one check node per
// device. All messages are Bernoulli LLRs log(P(s=1)/P(s=0)).
//
// Every kernel has an optional per-iteration weight block. With all weights
// equal to one the weighted path performs bit-for-bit the same floating-point
// operations as the plain path: leave-one-out sums are always formed as
// (ascending sum of the left part) + (descending sum of the right part).
namespace fsra {

struct DetectorParams {
  int iterations = 10;
  double llr_clip = 50.0;
  double cn_log_clip = 1e-10;
  double min_variance = 1e-12;
  bool record_snapshots = false;
  // Keep only the row maximum of the hard decision. Off by default.
  bool row_constraint = false;

  static DetectorParams from(const SystemConfig& cfg) {
    DetectorParams p;
    p.iterations = cfg.iterations;
    return p;
  }

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("DetectorParams: iterations must be >= 1");
    if (!(llr_clip > 0) || !(cn_log_clip > 0) || !(min_variance > 0))
      throw std::invalid_argument("DetectorParams: clips must be strictly positive");
  }
};

// Per-edge message array indexed (device, slot, antenna), antenna fastest.
class EdgeArray {
 public:
  EdgeArray() = default;
  EdgeArray(int n_devices, int n_slots, int n_antennas, double fill = 0.0)
      : n_devices_(n_devices),
        n_slots_(n_slots),
        n_antennas_(n_antennas),
        data_(static_cast<std::size_t>(n_devices) * n_slots * n_antennas, fill) {}

  double& operator()(int s, int p, int m) { return data_[index(s, p, m)]; }
  double operator()(int s, int p, int m) const { return data_[index(s, p, m)]; }

  int n_devices() const { return n_devices_; }
  int n_slots() const { return n_slots_; }
  int n_antennas() const { return n_antennas_; }
  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  bool operator==(const EdgeArray&) const = default;

 private:
  std::size_t index(int s, int p, int m) const {
    return (static_cast<std::size_t>(s) * n_slots_ + p) * n_antennas_ + m;
  }

  int n_devices_ = 0;
  int n_slots_ = 0;
  int n_antennas_ = 0;
  std::vector<double> data_;
};

struct MessageState {
  EdgeArray sn_to_vn;        // l^s_{mp->sp}
  Eigen::MatrixXd vn_to_cn;  // l^{vc}_{sp->s}, N_s x N_p
  Eigen::MatrixXd cn_to_vn;  // l^c_{s->sp}, N_s x N_p
  EdgeArray vn_to_sn;        // l^{vs}_{sp->mp}
  double prior_llr = 0.0;    // log(p0 / (1 - p0)), clipped

  MessageState() = default;
  MessageState(int n_devices, int n_slots, int n_antennas, double entry_prior,
               const DetectorParams& params)
      : sn_to_vn(n_devices, n_slots, n_antennas),
        vn_to_cn(Eigen::MatrixXd::Zero(n_devices, n_slots)),
        cn_to_vn(Eigen::MatrixXd::Zero(n_devices, n_slots)),
        vn_to_sn(n_devices, n_slots, n_antennas),
        prior_llr(std::clamp(std::log(entry_prior) - std::log1p(-entry_prior), -params.llr_clip,
                             params.llr_clip)) {}

  int n_devices() const { return sn_to_vn.n_devices(); }
  int n_slots() const { return sn_to_vn.n_slots(); }
  int n_antennas() const { return sn_to_vn.n_antennas(); }
};

struct DetectionResult {
  BinaryMatrix S_hat;
  Eigen::MatrixXd llr;
  // Output LLRs after each iteration (last entry equals llr) when requested.
  std::vector<Eigen::MatrixXd> snapshots;
};

inline double sigmoid(double l) {
  if (l >= 0) return 1.0 / (1.0 + std::exp(-l));
  const double e = std::exp(l);
  return e / (1.0 + e);
}

// p * q of a Bernoulli variable with LLR l, i.e. sigmoid(l) * sigmoid(-l).
inline double bernoulli_variance(double l) {
  const double e = std::exp(-std::abs(l));
  return e / ((1.0 + e) * (1.0 + e));
}

struct BernoulliMoments {
  double mean;      // sigmoid(l)
  double variance;  // sigmoid(l) * sigmoid(-l)
};

// Both moments from a single exponential; identical to sigmoid() and
// bernoulli_variance() bit for bit.
inline BernoulliMoments bernoulli_moments(double l) {
  const double e = std::exp(-std::abs(l));
  const double denom = 1.0 + e;
  return {l >= 0 ? 1.0 / denom : e / denom, e / (denom * denom)};
}

// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace detail {

inline double clip(double x, double bound) { return std::clamp(x, -bound, bound); }

inline void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::domain_error(std::string(what) + " holds a non-finite value");
}

struct IterationView {
  const IterationWeights* weights;
  const WeightShape* shape;
};

inline IterationView iteration_view(const WeightSet* weights, int iter) {
  if (weights == nullptr) return {nullptr, nullptr};
  return {&weights->iteration(iter), &weights->shape()};
}

}  // namespace detail

// Sum nodes -> variable nodes. The interference of the other devices at
// sum node (m,p) is modelled as Gaussian with mean u and variance v from
// their incoming non-zero probabilities; noise_var is the per-real-component
// noise variance.
inline void sn_update(MessageState& st, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& H,
                      double noise_var, const DetectorParams& params,
                      const WeightSet* weights = nullptr, int iter = 0) {
  const int Ns = st.n_devices(), Np = st.n_slots(), M = st.n_antennas();
  const auto [w, shape] = detail::iteration_view(weights, iter);
  detail::require_finite(st.vn_to_sn.values(), "VN->SN message array");

  // Per-device interference terms, laid out [p][m][i] for the sweeps below.
  std::vector<double> mean_all(static_cast<std::size_t>(Np) * M * Ns);
  std::vector<double> var_all(mean_all.size());
  for (int i = 0; i < Ns; ++i)
    for (int p = 0; p < Np; ++p)
      for (int m = 0; m < M; ++m) {
        const auto mom = bernoulli_moments(st.vn_to_sn(i, p, m));
        const double h = H(m, i);
        const std::size_t k = (static_cast<std::size_t>(p) * M + m) * Ns + i;
        mean_all[k] = h * mom.mean;
        var_all[k] = h * h * mom.variance;
      }
  std::vector<double> left_mean(Ns + 1), right_mean(Ns + 1), left_var(Ns + 1), right_var(Ns + 1);

  for (int p = 0; p < Np; ++p) {
    for (int m = 0; m < M; ++m) {
      const double* mean_term = &mean_all[(static_cast<std::size_t>(p) * M + m) * Ns];
      const double* var_term = &var_all[(static_cast<std::size_t>(p) * M + m) * Ns];
      const double y = Y(m, p);

      if (w == nullptr) {
        left_mean[0] = left_var[0] = 0.0;
        for (int i = 0; i < Ns; ++i) {
          left_mean[i + 1] = left_mean[i] + mean_term[i];
          left_var[i + 1] = left_var[i] + var_term[i];
        }
        right_mean[Ns] = right_var[Ns] = 0.0;
        for (int i = Ns - 1; i >= 0; --i) {
          right_mean[i] = right_mean[i + 1] + mean_term[i];
          right_var[i] = right_var[i + 1] + var_term[i];
        }
        for (int s = 0; s < Ns; ++s) {
          const double u = left_mean[s] + right_mean[s + 1];
          const double v =
              std::max((left_var[s] + right_var[s + 1]) + noise_var, params.min_variance);
          const double h = H(m, s);
          st.sn_to_vn(s, p, m) =
              detail::clip((2.0 * (y - u) * h - h * h) / (2.0 * v), params.llr_clip);
        }
      } else {
        for (int s = 0; s < Ns; ++s) {
          double lu = 0.0, lv = 0.0;
          for (int i = 0; i < s; ++i) {
            lu += w->w_u[shape->interferer(s, p, m, i)] * mean_term[i];
            lv += w->w_v[shape->interferer(s, p, m, i)] * var_term[i];
          }
          double ru = 0.0, rv = 0.0;
          for (int i = Ns - 1; i > s; --i) {
            ru += w->w_u[shape->interferer(s, p, m, i - 1)] * mean_term[i];
            rv += w->w_v[shape->interferer(s, p, m, i - 1)] * var_term[i];
          }
          const std::size_t e = shape->spm(s, p, m);
          const double u = lu + ru;
          const double v = std::max((lv + rv) + w->w_sigma2[e] * noise_var, params.min_variance);
          const double h = H(m, s);
          st.sn_to_vn(s, p, m) =
              detail::clip((2.0 * (w->w_y[e] * y - u) * h - h * h) / (2.0 * v), params.llr_clip);
        }
      }
    }
  }
}

// Variable nodes -> check nodes: all sum-node messages plus the prior.
inline void vn_to_cn_update(MessageState& st, const DetectorParams& params,
                            const WeightSet* weights = nullptr, int iter = 0) {
  const int Ns = st.n_devices(), Np = st.n_slots(), M = st.n_antennas();
  const auto [w, shape] = detail::iteration_view(weights, iter);
  for (int s = 0; s < Ns; ++s)
    for (int p = 0; p < Np; ++p) {
      double acc = 0.0;
      double out;
      if (w == nullptr) {
        for (int m = 0; m < M; ++m) acc += st.sn_to_vn(s, p, m);
        out = acc + st.prior_llr;
      } else {
        for (int m = 0; m < M; ++m) acc += w->w_A2B[shape->spm(s, p, m)] * st.sn_to_vn(s, p, m);
        out = acc + w->wb_B[shape->sp(s, p)] * st.prior_llr;
      }
      st.vn_to_cn(s, p) = detail::clip(out, params.llr_clip);
    }
}

// Check nodes -> variable nodes, enforcing "at most one slot per device":
// P(s_sp = 1) = p_a * prod_{k != p} (1 - p^{vc}_{sk}).
inline void cn_update(MessageState& st, double activation_prob, const DetectorParams& params,
                      const WeightSet* weights = nullptr, int iter = 0) {
  const int Ns = st.n_devices(), Np = st.n_slots();
  const auto [w, shape] = detail::iteration_view(weights, iter);
  const double log_pa = std::max(std::log(activation_prob), -params.llr_clip);
  for (int s = 0; s < Ns; ++s)
    for (int p = 0; p < Np; ++p) {
      double acc = 0.0;
      double tilde;
      if (w == nullptr) {
        for (int k = 0; k < Np; ++k)
          if (k != p) acc += softplus(st.vn_to_cn(s, k));
        tilde = log_pa - acc;
      } else {
        for (int k = 0; k < Np; ++k)
          if (k != p)
            acc += w->w_B2C[shape->other_slot(s, p, k < p ? k : k - 1)] * softplus(st.vn_to_cn(s, k));
        tilde = w->w_pa[shape->sp(s, p)] * log_pa - acc;
      }
      tilde = std::min(tilde, -params.cn_log_clip);
      st.cn_to_vn(s, p) = detail::clip(-std::log(std::expm1(-tilde)), params.llr_clip);
    }
}

// Variable nodes -> sum nodes: the other antennas' messages, prior and check message.
inline void vn_to_sn_update(MessageState& st, const DetectorParams& params,
                            const WeightSet* weights = nullptr, int iter = 0) {
  const int Ns = st.n_devices(), Np = st.n_slots(), M = st.n_antennas();
  const auto [w, shape] = detail::iteration_view(weights, iter);
  std::vector<double> left(M + 1), right(M + 1);
  for (int s = 0; s < Ns; ++s)
    for (int p = 0; p < Np; ++p) {
      const double check = st.cn_to_vn(s, p);
      if (w == nullptr) {
        left[0] = 0.0;
        for (int m = 0; m < M; ++m) left[m + 1] = left[m] + st.sn_to_vn(s, p, m);
        right[M] = 0.0;
        for (int m = M - 1; m >= 0; --m) right[m] = right[m + 1] + st.sn_to_vn(s, p, m);
        for (int m = 0; m < M; ++m)
          st.vn_to_sn(s, p, m) =
              detail::clip(((left[m] + right[m + 1]) + st.prior_llr) + check, params.llr_clip);
      } else {
        const std::size_t node = shape->sp(s, p);
        for (int m = 0; m < M; ++m) {
          double l = 0.0;
          for (int j = 0; j < m; ++j)
            l += w->w_A2D[shape->other_antenna(s, p, m, j)] * st.sn_to_vn(s, p, j);
          double r = 0.0;
          for (int j = M - 1; j > m; --j)
            r += w->w_A2D[shape->other_antenna(s, p, m, j - 1)] * st.sn_to_vn(s, p, j);
          const double out = ((l + r) + w->wb_D[node] * st.prior_llr) +
                             w->w_C2D[shape->spm(s, p, m)] * check;
          st.vn_to_sn(s, p, m) = detail::clip(out, params.llr_clip);
        }
      }
    }
}

// Posterior LLR of every entry of S.
inline Eigen::MatrixXd output_llr(const MessageState& st, const DetectorParams& params,
                                  const WeightSet* weights = nullptr) {
  const int Ns = st.n_devices(), Np = st.n_slots(), M = st.n_antennas();
  const OutputWeights* w = weights ? &weights->output() : nullptr;
  const WeightShape* shape = weights ? &weights->shape() : nullptr;
  Eigen::MatrixXd out(Ns, Np);
  for (int s = 0; s < Ns; ++s)
    for (int p = 0; p < Np; ++p) {
      double acc = 0.0;
      double l;
      if (w == nullptr) {
        for (int m = 0; m < M; ++m) acc += st.sn_to_vn(s, p, m);
        l = (acc + st.prior_llr) + st.cn_to_vn(s, p);
      } else {
        for (int m = 0; m < M; ++m) acc += w->w_A2dec[shape->spm(s, p, m)] * st.sn_to_vn(s, p, m);
        const std::size_t node = shape->sp(s, p);
        l = (acc + w->wb_dec[node] * st.prior_llr) + w->w_C2dec[node] * st.cn_to_vn(s, p);
      }
      out(s, p) = detail::clip(l, params.llr_clip);
    }
  return out;
}

inline BinaryMatrix harden(const Eigen::MatrixXd& llr) {
  BinaryMatrix S(llr.rows(), llr.cols());
  for (Eigen::Index s = 0; s < llr.rows(); ++s)
    for (Eigen::Index p = 0; p < llr.cols(); ++p) S(s, p) = llr(s, p) >= 0.0 ? 1 : 0;
  return S;
}

// Per row keep only the largest LLR, and only if it is non-negative.
inline BinaryMatrix harden_row_constrained(const Eigen::MatrixXd& llr) {
  BinaryMatrix S = BinaryMatrix::Zero(llr.rows(), llr.cols());
  for (Eigen::Index s = 0; s < llr.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index p = 1; p < llr.cols(); ++p)
      if (llr(s, p) > llr(s, best)) best = p;
    if (llr(s, best) >= 0.0) S(s, best) = 1;
  }
  return S;
}

struct DetectionPriors {
  double activation_prob = 0.0;
  double noise_var_real = 0.0;  // per real-stacked component
};

// Y: M x N_p real-stacked received fixed symbols; H: M x N_s real-stacked CSI.
inline DetectionResult detect(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& H,
                              const DetectionPriors& priors, const DetectorParams& params,
                              const WeightSet* weights = nullptr) {
  params.validate();
  const int M = static_cast<int>(Y.rows());
  const int Np = static_cast<int>(Y.cols());
  const int Ns = static_cast<int>(H.cols());
  if (H.rows() != Y.rows())
    throw std::invalid_argument("detect: Y has " + std::to_string(Y.rows()) +
                                " rows but H has " + std::to_string(H.rows()));
  if (M < 1 || Np < 1 || Ns < 1) throw std::invalid_argument("detect: empty problem");
  if (!Y.allFinite() || !H.allFinite())
    throw std::domain_error("detect: non-finite entry in Y or H");
  if (weights != nullptr) {
    const WeightShape expected{Ns, Np, M, params.iterations};
    if (!(weights->shape() == expected))
      throw std::invalid_argument(
          "detect: weight set is for (N_s,N_p,M,L)=(" + std::to_string(weights->shape().n_devices) +
          "," + std::to_string(weights->shape().n_slots) + "," +
          std::to_string(weights->shape().n_antennas) + "," +
          std::to_string(weights->shape().iterations) + "), problem is (" + std::to_string(Ns) +
          "," + std::to_string(Np) + "," + std::to_string(M) + "," +
          std::to_string(params.iterations) + ")");
  }

  MessageState st(Ns, Np, M, priors.activation_prob / Np, params);
  DetectionResult result;
  for (int it = 0; it < params.iterations; ++it) {
    sn_update(st, Y, H, priors.noise_var_real, params, weights, it);
    vn_to_cn_update(st, params, weights, it);
    cn_update(st, priors.activation_prob, params, weights, it);
    const bool last = it + 1 == params.iterations;
    if (params.record_snapshots && !last) result.snapshots.push_back(output_llr(st, params));
    // The last VN->SN update would not reach the output.
    if (!last) vn_to_sn_update(st, params, weights, it);
  }
  result.llr = output_llr(st, params, weights);
  if (params.record_snapshots) result.snapshots.push_back(result.llr);
  result.S_hat = params.row_constraint ? harden_row_constrained(result.llr) : harden(result.llr);
  return result;
}

inline DetectionResult detect(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& H,
                              const SystemConfig& cfg, const DetectorParams& params,
                              const WeightSet* weights = nullptr) {
  return detect(Y, H, DetectionPriors{cfg.activation_prob, cfg.noise_var_real()}, params, weights);
}

inline DetectionResult detect(const Frame& frame, const SystemConfig& cfg,
                              const DetectorParams& params, const WeightSet* weights = nullptr) {
  return detect(frame.rx_fixed.Y, frame.rx_fixed.H_csi, cfg, params, weights);
}

// Complex-model entry point; runs on the real-stacked form.
inline DetectionResult detect_complex(const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& H,
                                      const DetectionPriors& priors, const DetectorParams& params,
                                      const WeightSet* weights = nullptr) {
  return detect(stack_rows(Y), stack_rows(H), priors, params, weights);
}

}  // namespace fsra
