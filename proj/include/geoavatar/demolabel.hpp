// Demographic labeling from life patterns and aggregate census marginals.
//
// Patterns are projected into a low-dimensional nonnegative feature space
// (multiplicative-update NMF); a Gaussian mixture whose per-zone mixing
// weights are pinned to census fractions is then fit by EM. No individual
// demographic labels are ever consumed.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "geoavatar/core.hpp"

namespace geoavatar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Fixed nonnegative basis H (d x M) learned from a pattern matrix.
struct NmfModel {
  Matrix H;  // d x M
  int rank() const { return int(H.rows()); }
  int input_dim() const { return int(H.cols()); }
};

struct NmfResult {
  Matrix W;  // N x d
  NmfModel model;
  std::vector<double> objective;  // Frobenius error per iteration
};

// Multiplicative-update NMF minimizing ||X - WH||_F. Seeded nonnegative
// random init; objective is non-increasing per iteration.
inline NmfResult fit_nmf(const Matrix& X, int d, int iters, std::uint64_t seed) {
  const int N = int(X.rows()), M = int(X.cols());
  require_config(d >= 1 && d <= std::min(N, M), "fit_nmf: rank must be in [1, min(N, M)]");
  constexpr double eps = 1e-12;
  Rng rng(derive_seed(seed, "nmf-init"));
  const double scale = std::sqrt(std::max(X.mean(), eps) / double(d));
  Matrix W(N, d), H(d, M);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < d; ++j) W(i, j) = scale * (0.1 + 0.9 * rng.uniform());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < M; ++j) H(i, j) = scale * (0.1 + 0.9 * rng.uniform());

  NmfResult out;
  out.objective.reserve(static_cast<std::size_t>(iters) + 1);
  out.objective.push_back((X - W * H).norm());
  for (int it = 0; it < iters; ++it) {
    // H <- H .* (W'X) ./ (W'WH + eps)
    Matrix WtX = W.transpose() * X;
    Matrix WtWH = (W.transpose() * W) * H;
    H = H.cwiseProduct(WtX.cwiseQuotient(WtWH.array().max(eps).matrix()));
    // W <- W .* (XH') ./ (WHH' + eps)
    Matrix XHt = X * H.transpose();
    Matrix WHHt = W * (H * H.transpose());
    W = W.cwiseProduct(XHt.cwiseQuotient(WHHt.array().max(eps).matrix()));
    out.objective.push_back((X - W * H).norm());
  }
  out.W = std::move(W);
  out.model.H = std::move(H);
  return out;
}

// Nonnegative least-squares fit of one row vector onto the fixed basis:
// multiplicative updates on the single coefficient row. The init is linear in
// x, which keeps the whole iteration homogeneous in the input scale.
inline Vector project_features(const Vector& x, const NmfModel& model, int iters = 200) {
  require(int(x.size()) == model.input_dim(), "project_features: dimension mismatch");
  const int d = model.rank();
  constexpr double eps = 1e-12;
  const Matrix HHt = model.H * model.H.transpose();  // d x d
  const Vector xHt = model.H * x;                    // d
  const double denom = std::max(HHt.trace(), eps);
  Vector w = (xHt / denom).cwiseMax(0.0);
  for (int it = 0; it < iters; ++it) {
    Vector num = xHt;
    Vector den = HHt * w;
    for (int k = 0; k < d; ++k) {
      const double dd = std::max(den(k), eps);
      w(k) *= std::max(num(k), 0.0) / dd;
    }
  }
  return w;
}

inline Vector project_features(const LifePattern& p, const NmfModel& model, int iters = 200) {
  const auto v = vectorize(p);
  return project_features(Eigen::Map<const Vector>(v.data(), long(v.size())), model, iters);
}

// Categorical segment with posterior probabilities; segment is the argmax
// (ties to the lowest id).
struct DemographicProfile {
  int segment = 0;
  std::vector<double> posterior;
};

// Per-segment Gaussian class-conditionals over NMF features plus per-zone
// segment priors (census-pinned) and a user-count-weighted global prior used
// when no zone is known yet (freshly generated pseudo persons).
struct LabelerModel {
  int n_segments = 0;
  Matrix means;                          // S x d
  Matrix variances;                      // S x d, diagonal covariances
  std::map<int, std::vector<double>> zone_priors;
  std::vector<double> global_prior;
  std::vector<double> log_likelihood;    // per EM iteration
};

namespace detail {

inline double log_gaussian_diag(const Vector& x, const Vector& mu, const Vector& var) {
  double ll = 0.0;
  for (int k = 0; k < x.size(); ++k) {
    const double v = var(k);
    const double diff = x(k) - mu(k);
    ll += -0.5 * (std::log(2.0 * std::numbers::pi * v) + diff * diff / v);
  }
  return ll;
}

}  // namespace detail

// EM over a Gaussian mixture with S components where per-zone mixing weights
// are pinned to census fractions. Responsibilities, means and variances are
// updated; the weights are not. Stops when the log-likelihood improves by
// less than ll_tol or after max_iters.
inline LabelerModel fit_labeler(const Matrix& features, const std::vector<int>& home_zones,
                                const std::map<int, std::vector<double>>& census_marginals,
                                int n_segments, std::uint64_t seed, int max_iters = 200,
                                double ll_tol = 1e-6) {
  const int N = int(features.rows()), d = int(features.cols());
  require(N >= 1, "fit_labeler: empty feature matrix");
  require(int(home_zones.size()) == N, "fit_labeler: zone list length mismatch");
  const int S = n_segments;
  require_config(S >= 1, "fit_labeler: need at least one segment");
  for (const auto& [zone, row] : census_marginals) {
    require(int(row.size()) == S, "fit_labeler: census row has wrong segment count");
    double sum = 0.0;
    for (double v : row) {
      require(v >= -1e-12, "fit_labeler: negative census fraction");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= 1e-6,
            "fit_labeler: census row for zone " + std::to_string(zone) + " does not sum to 1");
  }
  for (int u = 0; u < N; ++u)
    require(census_marginals.count(home_zones[static_cast<std::size_t>(u)]) > 0,
            "fit_labeler: no census marginal row for zone " +
                std::to_string(home_zones[static_cast<std::size_t>(u)]));

  LabelerModel m;
  m.n_segments = S;
  m.means.resize(S, d);
  m.variances.resize(S, d);

  // init: random distinct feature rows as means, global variance everywhere
  Rng rng(derive_seed(seed, "labeler-init"));
  Vector global_mean = features.colwise().mean();
  Vector global_var(d);
  for (int k = 0; k < d; ++k) {
    double v = (features.col(k).array() - global_mean(k)).square().sum() / std::max(1, N - 1);
    global_var(k) = std::max(v, 1e-6);
  }
  for (int s = 0; s < S; ++s) {
    const int pick = int(rng.uniform_int(std::uint64_t(N)));
    m.means.row(s) = features.row(pick);
    m.variances.row(s) = global_var.transpose();
  }

  Matrix resp(N, S);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    // E step
    double ll = 0.0;
    for (int u = 0; u < N; ++u) {
      const auto& prior = census_marginals.at(home_zones[static_cast<std::size_t>(u)]);
      Vector logp(S);
      double mx = -std::numeric_limits<double>::infinity();
      for (int s = 0; s < S; ++s) {
        if (prior[static_cast<std::size_t>(s)] <= 0.0) {
          logp(s) = -std::numeric_limits<double>::infinity();
          continue;
        }
        logp(s) = std::log(prior[static_cast<std::size_t>(s)]) +
                  detail::log_gaussian_diag(features.row(u).transpose(),
                                            m.means.row(s).transpose(),
                                            m.variances.row(s).transpose());
        mx = std::max(mx, logp(s));
      }
      double z = 0.0;
      for (int s = 0; s < S; ++s) z += std::isfinite(logp(s)) ? std::exp(logp(s) - mx) : 0.0;
      for (int s = 0; s < S; ++s)
        resp(u, s) = std::isfinite(logp(s)) ? std::exp(logp(s) - mx) / z : 0.0;
      ll += mx + std::log(z);
    }
    m.log_likelihood.push_back(ll);
    // M step (means/variances only; weights stay pinned)
    for (int s = 0; s < S; ++s) {
      const double total = resp.col(s).sum();
      if (total <= 1e-12) continue;  // segment never used anywhere: leave as-is
      Vector mu = (resp.col(s).transpose() * features).transpose() / total;
      Vector var = Vector::Zero(d);
      for (int u = 0; u < N; ++u)
        var += resp(u, s) * (features.row(u).transpose() - mu).array().square().matrix();
      var /= total;
      m.means.row(s) = mu.transpose();
      m.variances.row(s) = var.cwiseMax(1e-6).transpose();
    }
    if (std::abs(ll - prev_ll) < ll_tol) break;
    prev_ll = ll;
  }

  m.zone_priors.clear();
  for (const auto& [zone, row] : census_marginals) m.zone_priors[zone] = row;
  // user-count-weighted average of zone priors
  m.global_prior.assign(static_cast<std::size_t>(S), 0.0);
  for (int u = 0; u < N; ++u) {
    const auto& prior = census_marginals.at(home_zones[static_cast<std::size_t>(u)]);
    for (int s = 0; s < S; ++s) m.global_prior[static_cast<std::size_t>(s)] += prior[static_cast<std::size_t>(s)];
  }
  for (double& v : m.global_prior) v /= double(N);
  return m;
}

// Posterior ~ prior(zone) * N(features; mu_s, var_s), normalized in log space.
inline DemographicProfile label_with_prior(const Vector& features, const LabelerModel& m,
                                           const std::vector<double>& prior) {
  const int S = m.n_segments;
  require(int(prior.size()) == S, "label: prior has wrong segment count");
  std::vector<double> logp(static_cast<std::size_t>(S), -std::numeric_limits<double>::infinity());
  double mx = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < S; ++s) {
    if (prior[static_cast<std::size_t>(s)] <= 0.0) continue;
    logp[static_cast<std::size_t>(s)] = std::log(prior[static_cast<std::size_t>(s)]) +
                           detail::log_gaussian_diag(features, m.means.row(s).transpose(),
                                                     m.variances.row(s).transpose());
    mx = std::max(mx, logp[static_cast<std::size_t>(s)]);
  }
  DemographicProfile out;
  out.posterior.assign(static_cast<std::size_t>(S), 0.0);
  double z = 0.0;
  for (int s = 0; s < S; ++s)
    if (std::isfinite(logp[static_cast<std::size_t>(s)])) {
      out.posterior[static_cast<std::size_t>(s)] = std::exp(logp[static_cast<std::size_t>(s)] - mx);
      z += out.posterior[static_cast<std::size_t>(s)];
    }
  for (double& v : out.posterior) v /= z;
  out.segment = 0;
  for (int s = 1; s < S; ++s)
    if (out.posterior[static_cast<std::size_t>(s)] > out.posterior[static_cast<std::size_t>(out.segment)]) out.segment = s;
  return out;
}

inline DemographicProfile label(const LifePattern& pattern, const NmfModel& nmf,
                                const LabelerModel& m, int zone) {
  auto it = m.zone_priors.find(zone);
  require(it != m.zone_priors.end(), "label: unknown zone " + std::to_string(zone));
  return label_with_prior(project_features(pattern, nmf), m, it->second);
}

// Zone-free labeling for freshly generated pseudo persons (their home cell is
// sampled after the segment is known).
inline DemographicProfile label_global(const LifePattern& pattern, const NmfModel& nmf,
                                       const LabelerModel& m) {
  return label_with_prior(project_features(pattern, nmf), m, m.global_prior);
}

}  // namespace geoavatar
