// Fidelity metric battery: physical-law distributions (K-S), activity
// features (MAE, JS), NMF-projected pattern distributions, spatio-temporal
// grid-population / OD correlation, the natural-fluctuation ceiling and the
// top-N reconstruction experiment.
//
// All metrics are pure functions over immutable corpora.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "geoavatar/core.hpp"
#include "geoavatar/demolabel.hpp"
#include "geoavatar/ingest.hpp"

namespace geoavatar {

// ---------------------------------------------------------------------------
// Scalar statistics
// ---------------------------------------------------------------------------

// Two-sample Kolmogorov-Smirnov statistic: sup |ECDF_a - ECDF_b| over the
// merged sample points.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = double(a.size()), nb = double(b.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < a.size() || ib < b.size()) {
    const double x = (ib == b.size() || (ia < a.size() && a[ia] <= b[ib])) ? a[ia] : b[ib];
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    d = std::max(d, std::abs(double(ia) / na - double(ib) / nb));
  }
  return d;
}

// Jensen-Shannon divergence in nats; 0 * ln 0 := 0.
inline double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  require(p.size() == q.size(), "js_divergence: length mismatch");
  require(!p.empty(), "js_divergence: empty distribution");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    require(p[i] >= 0.0 && q[i] >= 0.0, "js_divergence: negative entry");
    sp += p[i];
    sq += q[i];
  }
  require(std::abs(sp - 1.0) <= 1e-9 && std::abs(sq - 1.0) <= 1e-9,
          "js_divergence: inputs must sum to 1");
  auto klm = [](double x, double mx) { return x > 0.0 ? x * std::log(x / mx) : 0.0; };
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    js += 0.5 * klm(p[i], m) + 0.5 * klm(q[i], m);
  }
  return std::max(0.0, js);
}

// Squared Pearson correlation.
inline double pearson_r2(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "pearson_r2: need two equal-length samples");
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, "pearson_r2: zero variance");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::min(1.0, r * r);
}

// ---------------------------------------------------------------------------
// Physical-law samples
// ---------------------------------------------------------------------------

// Distances between consecutive records, pooled over users. Exact zeros
// (within-cell dwell without jitter) are excluded.
inline std::vector<double> jump_sizes(const std::vector<Trajectory>& trajs) {
  std::vector<double> out;
  for (const auto& t : trajs)
    for (std::size_t k = 1; k < t.records.size(); ++k) {
      const auto& a = t.records[k - 1];
      const auto& b = t.records[k];
      const double d = haversine_km(a.lat, a.lon, b.lat, b.lon);
      if (d > 1e-12) out.push_back(d);
    }
  return out;
}

// Distinct cells visited per user-day. Out-of-bbox records are dropped.
inline std::vector<double> daily_visit_counts(const std::vector<Trajectory>& trajs,
                                              const Grid& grid) {
  std::vector<double> out;
  for (const auto& t : trajs) {
    std::map<std::int64_t, std::set<CellId>> per_day;
    for (const auto& r : t.records)
      if (auto c = grid.locate(r.lat, r.lon)) per_day[day_of(r.ts)].insert(*c);
    for (const auto& [day, cells] : per_day) out.push_back(double(cells.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Activity features
// ---------------------------------------------------------------------------

// profile[h][l] = fraction of user-days with role l at hour h (24 x L,
// columns sum to 1 at every hour).
inline std::vector<std::vector<double>> activity_profile(const std::vector<RoleSequence>& seqs,
                                                         int L) {
  std::vector<std::vector<double>> profile(kHoursPerDay, std::vector<double>(static_cast<std::size_t>(L), 0.0));
  std::int64_t user_days = 0;
  for (const auto& s : seqs) {
    s.validate(L);
    const int D = s.days();
    user_days += D;
    for (int d = 0; d < D; ++d)
      for (int h = 0; h < kHoursPerDay; ++h)
        profile[static_cast<std::size_t>(h)][static_cast<std::size_t>(s.values[static_cast<std::size_t>(d * kHoursPerDay + h)])] += 1.0;
  }
  require(user_days > 0, "activity_profile: empty corpus");
  for (auto& row : profile)
    for (double& v : row) v /= double(user_days);
  return profile;
}

inline double activity_mae(const std::vector<std::vector<double>>& gen_profile,
                           const std::vector<std::vector<double>>& truth_profile) {
  require(gen_profile.size() == truth_profile.size() && !gen_profile.empty() &&
              gen_profile[0].size() == truth_profile[0].size(),
          "activity_mae: profile shape mismatch");
  double sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t h = 0; h < gen_profile.size(); ++h)
    for (std::size_t l = 0; l < gen_profile[h].size(); ++l) {
      sum += std::abs(gen_profile[h][l] - truth_profile[h][l]);
      ++cells;
    }
  return sum / double(cells);
}

namespace detail {

// Histogram over users of each user's probability of `role` at hour h.
inline std::vector<double> user_probability_histogram(const std::vector<RoleSequence>& seqs,
                                                      int role, int hour, int bins) {
  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  for (const auto& s : seqs) {
    const int D = s.days();
    int hits = 0;
    for (int d = 0; d < D; ++d)
      if (s.values[static_cast<std::size_t>(d * kHoursPerDay + hour)] == role) ++hits;
    const double p = D > 0 ? double(hits) / double(D) : 0.0;
    int b = std::min(bins - 1, int(p * bins));
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  double total = 0.0;
  for (double v : hist) total += v;
  for (double& v : hist) v /= total;
  return hist;
}

}  // namespace detail

struct HourlyJsResult {
  double mean = 0.0;
  std::vector<double> per_hour;  // 24 entries
};

// Per hour: JS between the generated and truth histograms (over users) of the
// per-user probability of `role` at that hour; returns the mean over 24 hours.
inline HourlyJsResult hourly_user_distribution_js(const std::vector<RoleSequence>& gen,
                                                  const std::vector<RoleSequence>& truth,
                                                  int role, int bins = 20) {
  require(!gen.empty() && !truth.empty(), "hourly_user_distribution_js: empty corpus");
  HourlyJsResult r;
  r.per_hour.resize(kHoursPerDay);
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto pg = detail::user_probability_histogram(gen, role, h, bins);
    const auto pt = detail::user_probability_histogram(truth, role, h, bins);
    r.per_hour[static_cast<std::size_t>(h)] = js_divergence(pg, pt);
    r.mean += r.per_hour[static_cast<std::size_t>(h)];
  }
  r.mean /= kHoursPerDay;
  return r;
}

// NMF(d)-projected pattern distribution comparison: fit on the union, project
// both sides through the fixed basis, min-max normalize per dimension over
// the union, histogram with bins_per_dim^d cells, JS between the histograms.
inline double pattern_distribution_js(const std::vector<LifePattern>& gen,
                                      const std::vector<LifePattern>& truth, int d = 3,
                                      int bins_per_dim = 10, std::uint64_t seed = 17,
                                      int nmf_iters = 300) {
  require(gen.size() >= 2 && truth.size() >= 2,
          "pattern_distribution_js: need at least 2 patterns per side");
  const int L = gen.front().alphabet_size();
  const int M = pattern_dim(L);
  const int N = int(gen.size() + truth.size());
  require(N >= d, "pattern_distribution_js: fewer patterns than NMF rank");
  Matrix X(N, M);
  int row = 0;
  for (const auto* side : {&gen, &truth})
    for (const auto& p : *side) {
      require(p.alphabet_size() == L, "pattern_distribution_js: alphabet mismatch");
      const auto v = vectorize(p);
      X.row(row++) = Eigen::Map<const Vector>(v.data(), M).transpose();
    }
  const auto nmf = fit_nmf(X, d, nmf_iters, seed);

  Matrix F(N, d);
  for (int i = 0; i < N; ++i)
    F.row(i) = project_features(Vector(X.row(i).transpose()), nmf.model).transpose();

  Vector lo = F.colwise().minCoeff(), hi = F.colwise().maxCoeff();
  auto bin_of = [&](const Vector& f) {
    int idx = 0;
    for (int k = 0; k < d; ++k) {
      const double span = hi(k) - lo(k);
      double u = span > 0 ? (f(k) - lo(k)) / span : 0.0;
      int b = std::min(bins_per_dim - 1, int(u * bins_per_dim));
      idx = idx * bins_per_dim + b;
    }
    return idx;
  };
  int n_bins = 1;
  for (int k = 0; k < d; ++k) n_bins *= bins_per_dim;
  std::vector<double> hg(static_cast<std::size_t>(n_bins), 0.0), ht(static_cast<std::size_t>(n_bins), 0.0);
  for (int i = 0; i < int(gen.size()); ++i) hg[static_cast<std::size_t>(bin_of(F.row(i).transpose()))] += 1.0;
  for (int i = int(gen.size()); i < N; ++i) ht[static_cast<std::size_t>(bin_of(F.row(i).transpose()))] += 1.0;
  for (double& v : hg) v /= double(gen.size());
  for (double& v : ht) v /= double(truth.size());
  return js_divergence(hg, ht);
}

// ---------------------------------------------------------------------------
// Spatio-temporal features
// ---------------------------------------------------------------------------

namespace detail {

// A user's representative cell per epoch hour: the cell of the last in-bbox
// record in that hour.
inline std::map<std::int64_t, CellId> hourly_cells(const Trajectory& t, const Grid& grid) {
  std::map<std::int64_t, CellId> out;
  for (const auto& r : t.records)
    if (auto c = grid.locate(r.lat, r.lon)) out[epoch_hour(r.ts)] = *c;
  return out;
}

struct SpatioTemporalCounts {
  std::map<std::tuple<CellId, std::int64_t>, double> grid_pop;          // (cell, hour)
  std::map<std::tuple<CellId, CellId, std::int64_t>, double> od;        // (o, d, origin hour)
  std::int64_t hour_min = 0, hour_max = -1;                             // inclusive
};

inline SpatioTemporalCounts aggregate(const std::vector<Trajectory>& trajs, const Grid& grid) {
  SpatioTemporalCounts out;
  bool any = false;
  for (const auto& t : trajs) {
    std::set<std::pair<CellId, std::int64_t>> seen;  // presence is per user
    for (const auto& r : t.records) {
      if (auto c = grid.locate(r.lat, r.lon)) {
        const std::int64_t h = epoch_hour(r.ts);
        if (!any) {
          out.hour_min = out.hour_max = h;
          any = true;
        } else {
          out.hour_min = std::min(out.hour_min, h);
          out.hour_max = std::max(out.hour_max, h);
        }
        if (seen.insert({*c, h}).second) out.grid_pop[{*c, h}] += 1.0;
      }
    }
    const auto cells = hourly_cells(t, grid);
    for (auto it = cells.begin(); it != cells.end(); ++it) {
      auto next = std::next(it);
      if (next == cells.end()) break;
      if (next->first == it->first + 1 && next->second != it->second)
        out.od[{it->second, next->second, it->first}] += 1.0;
    }
  }
  return out;
}

// Aligns two keyed count maps on the union of keys inside the overlapping
// hour window, zero-filling missing entries.
template <typename Key>
inline std::pair<std::vector<double>, std::vector<double>> align_counts(
    const std::map<Key, double>& a, const std::map<Key, double>& b, std::int64_t h_lo,
    std::int64_t h_hi, std::int64_t (*hour_of)(const Key&)) {
  std::set<Key> keys;
  for (const auto& [k, v] : a)
    if (hour_of(k) >= h_lo && hour_of(k) <= h_hi) keys.insert(k);
  for (const auto& [k, v] : b)
    if (hour_of(k) >= h_lo && hour_of(k) <= h_hi) keys.insert(k);
  std::vector<double> va, vb;
  va.reserve(keys.size());
  vb.reserve(keys.size());
  for (const auto& k : keys) {
    auto ia = a.find(k);
    auto ib = b.find(k);
    va.push_back(ia == a.end() ? 0.0 : ia->second);
    vb.push_back(ib == b.end() ? 0.0 : ib->second);
  }
  return {std::move(va), std::move(vb)};
}

inline std::int64_t grid_key_hour(const std::tuple<CellId, std::int64_t>& k) {
  return std::get<1>(k);
}
inline std::int64_t od_key_hour(const std::tuple<CellId, CellId, std::int64_t>& k) {
  return std::get<2>(k);
}

inline std::pair<std::int64_t, std::int64_t> overlap_window(const SpatioTemporalCounts& a,
                                                            const SpatioTemporalCounts& b) {
  const std::int64_t lo = std::max(a.hour_min, b.hour_min);
  const std::int64_t hi = std::min(a.hour_max, b.hour_max);
  require(a.hour_max >= a.hour_min && b.hour_max >= b.hour_min && lo <= hi,
          "spatio-temporal comparison: empty overlap window");
  return {lo, hi};
}

}  // namespace detail

// r^2 of per-(cell, hour) user counts over the union of keys that are nonzero
// in either corpus inside the overlapping hour window.
inline double compare_grid_population(const std::vector<Trajectory>& gen,
                                      const std::vector<Trajectory>& truth, const Grid& grid) {
  const auto ca = detail::aggregate(gen, grid);
  const auto cb = detail::aggregate(truth, grid);
  const auto [lo, hi] = detail::overlap_window(ca, cb);
  auto [va, vb] = detail::align_counts(ca.grid_pop, cb.grid_pop, lo, hi, detail::grid_key_hour);
  return pearson_r2(va, vb);
}

// r^2 of per-(origin, destination, hour) move counts (origin != destination).
inline double compare_od(const std::vector<Trajectory>& gen,
                         const std::vector<Trajectory>& truth, const Grid& grid) {
  const auto ca = detail::aggregate(gen, grid);
  const auto cb = detail::aggregate(truth, grid);
  const auto [lo, hi] = detail::overlap_window(ca, cb);
  auto [va, vb] = detail::align_counts(ca.od, cb.od, lo, hi, detail::od_key_hour);
  return pearson_r2(va, vb);
}

// Random half-split of users; the r^2 between the halves is the ceiling any
// generator can be judged against.
inline std::pair<double, double> natural_fluctuation(const std::vector<Trajectory>& truth,
                                                     const Grid& grid, std::uint64_t split_seed) {
  require(truth.size() >= 2, "natural_fluctuation: need at least 2 users");
  std::vector<std::size_t> idx(truth.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(split_seed, "natural-split"));
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  std::vector<Trajectory> half_a, half_b;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < idx.size() / 2 ? half_a : half_b).push_back(truth[idx[i]]);
  return {compare_grid_population(half_a, half_b, grid), compare_od(half_a, half_b, grid)};
}

// ---------------------------------------------------------------------------
// Top-N reconstruction experiment
// ---------------------------------------------------------------------------

struct ReconstructionRow {
  int n = 0;
  double static_r2 = 0, static_mse = 0;
  double dynamic_r2 = 0, dynamic_mse = 0;
};

namespace detail {

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return a.empty() ? 0.0 : s / double(a.size());
}

}  // namespace detail

// Rebuilds each user's hourly presence keeping only hours spent at their
// top-N places (by visit count; remaining hours dropped) and compares the
// reconstructed grid population (static) and OD counts (dynamic) against the
// full corpus. Places are re-extracted without the alphabet cap so the curve
// can extend past L.
inline std::vector<ReconstructionRow> reconstruction_experiment(
    const std::vector<Trajectory>& truth, const Grid& grid, const std::vector<int>& n_list,
    const StaypointParams& params = {}) {
  require(!n_list.empty(), "reconstruction_experiment: empty N list");
  for (int n : n_list) require(n >= 1, "reconstruction_experiment: N must be >= 1");

  // Per user: hourly place-rank sequence and hourly cell.
  struct UserHours {
    std::map<std::int64_t, CellId> cell;  // epoch hour -> cell
    std::map<std::int64_t, int> rank;     // epoch hour -> visit-count rank of its place (0-based)
  };
  std::vector<UserHours> users;
  for (const auto& traj : truth) {
    const auto sps = detect_staypoints(traj, params);
    if (sps.empty()) continue;
    // unlimited places: rank every cluster
    auto ex = extract_significant_places(sps, params.merge_radius_m,
                                         int(sps.size()) + 2, int(sps.size()) + 2);
    // rank places by visit count desc / dwell desc (HOME and WORK included)
    std::vector<int> order(ex.places.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const auto& pa = ex.places[static_cast<std::size_t>(a)];
      const auto& pb = ex.places[static_cast<std::size_t>(b)];
      if (pa.visit_count != pb.visit_count) return pa.visit_count > pb.visit_count;
      if (pa.total_dwell_s != pb.total_dwell_s) return pa.total_dwell_s > pb.total_dwell_s;
      return a < b;
    });
    std::vector<int> rank_of_place(ex.places.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank_of_place[static_cast<std::size_t>(order[r])] = int(r);

    UserHours uh;
    // hour -> (place, coverage seconds); majority place wins the hour
    std::map<std::int64_t, std::map<int, std::int64_t>> coverage;
    for (std::size_t k = 0; k < sps.size(); ++k) {
      const int place = ex.staypoint_place[k];
      if (place < 0) continue;
      const auto& sp = sps[k];
      for (std::int64_t h = epoch_hour(sp.arrival); h <= epoch_hour(sp.departure); ++h) {
        const std::int64_t h0 = h * kSecondsPerHour, h1 = h0 + kSecondsPerHour;
        const std::int64_t ov = std::min(sp.departure, h1) - std::max(sp.arrival, h0);
        if (ov > 0) coverage[h][place] += ov;
      }
    }
    for (const auto& [h, per_place] : coverage) {
      int best = -1;
      std::int64_t best_s = 0;
      for (const auto& [place, sec] : per_place)
        if (sec > best_s || (sec == best_s && best >= 0 && place < best)) {
          best = place;
          best_s = sec;
        }
      const auto& p = ex.places[static_cast<std::size_t>(best)];
      if (auto c = grid.locate(p.lat, p.lon)) {
        uh.cell[h] = *c;
        uh.rank[h] = rank_of_place[static_cast<std::size_t>(best)];
      }
    }
    if (!uh.cell.empty()) users.push_back(std::move(uh));
  }
  require(!users.empty(), "reconstruction_experiment: no usable users");

  auto aggregate = [&](int keep_top_n) {
    std::map<std::tuple<CellId, std::int64_t>, double> pop;
    std::map<std::tuple<CellId, CellId, std::int64_t>, double> od;
    for (const auto& u : users) {
      for (const auto& [h, c] : u.cell) {
        if (keep_top_n >= 0 && u.rank.at(h) >= keep_top_n) continue;
        pop[{c, h}] += 1.0;
      }
      for (auto it = u.cell.begin(); it != u.cell.end(); ++it) {
        auto next = std::next(it);
        if (next == u.cell.end()) break;
        if (next->first != it->first + 1 || next->second == it->second) continue;
        if (keep_top_n >= 0 &&
            (u.rank.at(it->first) >= keep_top_n || u.rank.at(next->first) >= keep_top_n))
          continue;
        od[{it->second, next->second, it->first}] += 1.0;
      }
    }
    return std::make_pair(std::move(pop), std::move(od));
  };

  const auto [full_pop, full_od] = aggregate(-1);
  std::vector<ReconstructionRow> rows;
  for (int n : n_list) {
    const auto [pop_n, od_n] = aggregate(n);
    ReconstructionRow row;
    row.n = n;
    {
      auto [va, vb] = detail::align_counts(full_pop, pop_n,
                                           std::numeric_limits<std::int64_t>::min(),
                                           std::numeric_limits<std::int64_t>::max(),
                                           detail::grid_key_hour);
      row.static_r2 = pearson_r2(va, vb);
      row.static_mse = detail::mse(va, vb);
    }
    {
      auto [va, vb] = detail::align_counts(full_od, od_n,
                                           std::numeric_limits<std::int64_t>::min(),
                                           std::numeric_limits<std::int64_t>::max(),
                                           detail::od_key_hour);
      row.dynamic_r2 = pearson_r2(va, vb);
      row.dynamic_mse = detail::mse(va, vb);
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricReport {
  double ks_jump = 0;
  double ks_daily_visits = 0;
  double activity_mae = 0;
  double hourly_js = 0;  // mean over HOME and WORK
  double pattern_js_3d = 0;
  double grid_r2 = 0;
  double od_r2 = 0;
  double natural_grid_r2 = 0;
  double natural_od_r2 = 0;
  std::vector<double> hourly_js_home;  // 24 per-hour values
  std::vector<double> hourly_js_work;
  // constants recorded for comparability
  int probability_bins = 20;
  int nmf_dim = 3;
  int spatial_bins_per_dim = 10;
};

}  // namespace geoavatar
