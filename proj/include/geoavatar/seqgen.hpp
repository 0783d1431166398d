// Graph-walk With a Guide: hourly role sequences are sampled from a life
// pattern's base Markov chain, reweighted step by step by a
// history-conditional corrector.
//
// The default corrector is an hour-stratified backoff n-gram fitted on real
// role sequences; any conditional scorer with the same query surface can be
// swapped in.
#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "geoavatar/core.hpp"

namespace geoavatar {

// Hour-stratified n-gram tables with additive smoothing and Witten-Bell
// style interpolation down the backoff chain order n -> n-1 -> ... -> 0.
class GuideModel {
 public:
  GuideModel() = default;

  static GuideModel fit(const std::vector<RoleSequence>& corpus, int L, int order,
                        double smoothing, double backoff_gamma = 1.0) {
    require(!corpus.empty(), "fit_guide: empty corpus");
    require_config(order >= 0, "fit_guide: order must be >= 0");
    require_config(smoothing >= 0.0, "fit_guide: smoothing must be >= 0");
    GuideModel g;
    g.L_ = L;
    g.order_ = order;
    g.smoothing_ = smoothing;
    g.backoff_gamma_ = backoff_gamma;
    g.tables_.resize(static_cast<std::size_t>(order) + 1);
    for (const auto& seq : corpus) {
      seq.validate(L);
      const int n = int(seq.values.size());
      for (int t = 0; t + 1 < n; ++t) {
        const int hour = t % kHoursPerDay;
        const int next = seq.values[static_cast<std::size_t>(t + 1)];
        for (int k = 0; k <= order; ++k) {
          if (t + 1 < k) continue;  // not enough history for order k
          auto& entry = g.tables_[static_cast<std::size_t>(k)][g.context_key(seq.values, t, k, hour)];
          if (entry.next.empty()) entry.next.assign(static_cast<std::size_t>(L), 0.0);
          entry.next[static_cast<std::size_t>(next)] += 1.0;
          entry.total += 1.0;
        }
      }
    }
    return g;
  }

  int alphabet_size() const { return L_; }
  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  double backoff_gamma() const { return backoff_gamma_; }

  // P_g(next | previous `order` roles ending at slot t, hour of slot t).
  // history holds roles for slots <= t; hour = t mod 24.
  std::vector<double> conditional(const std::vector<int>& history, int hour) const {
    std::vector<double> probs;
    // order 0 base: additively smoothed hour marginal
    {
      probs.assign(static_cast<std::size_t>(L_), 1.0 / L_);
      auto it = tables_[0].find(hour_only_key(hour));
      const double total = it == tables_[0].end() ? 0.0 : it->second.total;
      for (int j = 0; j < L_; ++j) {
        const double c = it == tables_[0].end() ? 0.0 : it->second.next[static_cast<std::size_t>(j)];
        probs[static_cast<std::size_t>(j)] =
            (c + smoothing_ + kFloor) / (total + (smoothing_ + kFloor) * L_);
      }
    }
    const int avail = int(history.size());
    for (int k = 1; k <= order_; ++k) {
      if (avail < k) break;
      auto it = tables_[static_cast<std::size_t>(k)].find(history_key(history, k, hour));
      if (it == tables_[static_cast<std::size_t>(k)].end()) continue;  // unseen context: keep lower order
      const auto& e = it->second;
      const double lambda = e.total / (e.total + backoff_gamma_);
      for (int j = 0; j < L_; ++j) {
        const double ml =
            (e.next[static_cast<std::size_t>(j)] + smoothing_) / (e.total + smoothing_ * L_);
        probs[static_cast<std::size_t>(j)] = lambda * ml + (1.0 - lambda) * probs[static_cast<std::size_t>(j)];
      }
    }
    return probs;
  }

  // serialization access
  struct Entry {
    std::vector<double> next;
    double total = 0.0;
  };
  const std::vector<std::map<std::int64_t, Entry>>& tables() const { return tables_; }
  std::vector<std::map<std::int64_t, Entry>>& mutable_tables() { return tables_; }
  void set_params(int L, int order, double smoothing, double gamma) {
    L_ = L;
    order_ = order;
    smoothing_ = smoothing;
    backoff_gamma_ = gamma;
    tables_.resize(static_cast<std::size_t>(order) + 1);
  }

 private:
  // Tiny floor keeps order-0 proper even with smoothing == 0 on roles never
  // seen at an hour.
  static constexpr double kFloor = 1e-12;

  // context = hour plus the k roles ending at slot t, packed into an int key.
  std::int64_t context_key(const std::vector<int>& seq, int t, int k, int hour) const {
    std::int64_t key = hour;
    for (int i = 0; i < k; ++i) key = key * L_ + seq[static_cast<std::size_t>(t - i)];
    return key * (order_ + 1) + k;
  }
  std::int64_t history_key(const std::vector<int>& history, int k, int hour) const {
    std::int64_t key = hour;
    for (int i = 0; i < k; ++i) key = key * L_ + history[history.size() - 1 - static_cast<std::size_t>(i)];
    return key * (order_ + 1) + k;
  }
  std::int64_t hour_only_key(int hour) const { return std::int64_t(hour) * (order_ + 1); }

  int L_ = 0;
  int order_ = 2;
  double smoothing_ = 0.1;
  double backoff_gamma_ = 1.0;
  std::vector<std::map<std::int64_t, Entry>> tables_;  // per order
};

inline GuideModel fit_guide(const std::vector<RoleSequence>& corpus, int L, int order,
                            double smoothing, double backoff_gamma = 1.0) {
  return GuideModel::fit(corpus, L, order, smoothing, backoff_gamma);
}

struct GwgConfig {
  double alpha = 0.5;  // blend exponent: 1 = pure base chain, 0 = pure guide
  int days = 7;
  std::uint64_t seed = 0;
};

// One-step blended distribution: P(next) ~ T[h][cur][next]^alpha *
// P_g(next | history, h)^(1-alpha). Falls back to the base row when the
// product row has no mass.
inline std::vector<double> gwg_step_distribution(const LifePattern& pattern,
                                                 const GuideModel& guide,
                                                 const std::vector<int>& history, int hour,
                                                 double alpha, bool* fell_back = nullptr) {
  const int L = pattern.alphabet_size();
  require(alpha >= 0.0 && alpha <= 1.0, "gwg: alpha must be in [0, 1]");
  require(guide.alphabet_size() == L, "gwg: guide alphabet mismatch");
  require(!history.empty(), "gwg: history must contain the current role");
  const int cur = history.back();
  const double* base = pattern.row(hour, cur);
  const auto gp = guide.conditional(history, hour);
  std::vector<double> w(static_cast<std::size_t>(L));
  double z = 0.0;
  for (int j = 0; j < L; ++j) {
    w[static_cast<std::size_t>(j)] = std::pow(base[j], alpha) * std::pow(gp[static_cast<std::size_t>(j)], 1.0 - alpha);
    z += w[static_cast<std::size_t>(j)];
  }
  if (!(z > 1e-300)) {
    if (fell_back) *fell_back = true;
    for (int j = 0; j < L; ++j) w[static_cast<std::size_t>(j)] = base[j];
    z = 1.0;
  } else if (fell_back) {
    *fell_back = false;
  }
  for (double& v : w) v /= z;
  return w;
}

// Samples a 24*D-hour role sequence: hour-0 role from pi, every later step
// from the blended one-step distribution.
inline RoleSequence gwg_sample(const LifePattern& pattern, const GuideModel& guide,
                               const GwgConfig& cfg, Rng& rng, std::int64_t user_id = 0,
                               std::int64_t start_day = 0) {
  require_config(cfg.days >= 1, "gwg: days must be >= 1");
  const int n = cfg.days * kHoursPerDay;
  RoleSequence seq;
  seq.user_id = user_id;
  seq.start_day = start_day;
  seq.values.reserve(static_cast<std::size_t>(n));
  seq.values.push_back(int(rng.categorical(pattern.pi())));
  int fallbacks = 0;
  for (int t = 1; t < n; ++t) {
    const int hour = (t - 1) % kHoursPerDay;
    bool fell_back = false;
    const auto dist = gwg_step_distribution(pattern, guide, seq.values, hour, cfg.alpha,
                                            &fell_back);
    if (fell_back) ++fallbacks;
    seq.values.push_back(int(rng.categorical(dist)));
  }
  if (fallbacks > 0)
    std::fprintf(stderr, "[geoavatar] gwg: %d zero-normalizer fallbacks for user %lld\n",
                 fallbacks, static_cast<long long>(user_id));
  return seq;
}

}  // namespace geoavatar
