// Reference generators the evaluation compares against.
//
// FEM keeps a user's real hourly transition probabilities and true key
// locations but truncates the role set to {HOME, WORK, top OTHER} plus one
// aggregate bucket; bucket hours geocode to a dwell-weighted random true
// other place.
//
// TimeGeo is a rhythm-driven hourly mover with an exploration-preferential-
// return spatial kernel (P_new = rho * S^-gamma, explore target by distance
// rank, return by visit frequency).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "geoavatar/core.hpp"
#include "geoavatar/ingest.hpp"

namespace geoavatar {

// ---------------------------------------------------------------------------
// FEM
// ---------------------------------------------------------------------------

inline constexpr int kFemHome = 0;
inline constexpr int kFemWork = 1;
inline constexpr int kFemTopOther = 2;
inline constexpr int kFemBucket = 3;
inline constexpr int kFemStates = 4;

struct FemModel {
  std::int64_t user_id = 0;
  // hourly conditionals over the states that actually occur for this user
  std::vector<double> T;   // (h * 4 + prev) * 4 + next
  std::vector<double> pi;  // hour-0 distribution over 4 states
  std::vector<bool> state_present;
  // true key locations (cells)
  std::optional<CellId> home, work, top_other;
  std::vector<std::pair<CellId, double>> bucket_places;  // (cell, dwell weight)
};

namespace detail {

// full-alphabet role -> FEM state
inline int fem_state(int role) {
  if (role == kRoleHome) return kFemHome;
  if (role == kRoleWork) return kFemWork;
  if (role == 2) return kFemTopOther;  // OTHER_1 is the top other by construction
  return kFemBucket;
}

}  // namespace detail

// Collapses the full-alphabet sequence onto the 4-state FEM alphabet and fits
// hourly first-order conditionals with additive smoothing over the states the
// user actually visits.
inline FemModel fem_fit(const RoleSequence& roles, const std::vector<SignificantPlace>& places,
                        const Grid& grid, double smoothing = 0.01) {
  require(roles.values.size() >= 2 * kHoursPerDay, "fem_fit: need at least 2 days of data");
  FemModel m;
  m.user_id = roles.user_id;

  std::vector<int> seq;
  seq.reserve(roles.values.size());
  for (int r : roles.values) seq.push_back(detail::fem_state(r));

  m.state_present.assign(kFemStates, false);
  for (int s : seq) m.state_present[static_cast<std::size_t>(s)] = true;

  std::vector<double> counts(static_cast<std::size_t>(kHoursPerDay * kFemStates * kFemStates), 0.0);
  std::vector<double> pi_counts(kFemStates, 0.0);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const int h = int(t % kHoursPerDay);
    counts[static_cast<std::size_t>((h * kFemStates + seq[t]) * kFemStates + seq[t + 1])] += 1.0;
  }
  for (std::size_t t = 0; t < seq.size(); t += kHoursPerDay) pi_counts[static_cast<std::size_t>(seq[t])] += 1.0;

  int present = 0;
  for (bool b : m.state_present) present += b ? 1 : 0;
  m.T.assign(counts.size(), 0.0);
  for (int h = 0; h < kHoursPerDay; ++h)
    for (int prev = 0; prev < kFemStates; ++prev) {
      double total = 0.0;
      for (int next = 0; next < kFemStates; ++next)
        total += counts[static_cast<std::size_t>((h * kFemStates + prev) * kFemStates + next)];
      for (int next = 0; next < kFemStates; ++next) {
        // smoothing only over states this user visits; absent states stay 0
        if (!m.state_present[static_cast<std::size_t>(next)]) continue;
        m.T[static_cast<std::size_t>((h * kFemStates + prev) * kFemStates + next)] =
            (counts[static_cast<std::size_t>((h * kFemStates + prev) * kFemStates + next)] + smoothing) /
            (total + smoothing * present);
      }
    }
  m.pi.assign(kFemStates, 0.0);
  double pt = 0.0;
  for (double c : pi_counts) pt += c;
  for (int s = 0; s < kFemStates; ++s) {
    if (!m.state_present[static_cast<std::size_t>(s)]) continue;
    m.pi[static_cast<std::size_t>(s)] = (pi_counts[static_cast<std::size_t>(s)] + smoothing) / (pt + smoothing * present);
  }

  for (const auto& p : places) {
    const auto cell = grid.locate(p.lat, p.lon);
    if (!cell) continue;
    if (p.role == kRoleHome)
      m.home = *cell;
    else if (p.role == kRoleWork)
      m.work = *cell;
    else if (p.role == 2)
      m.top_other = *cell;
    else
      m.bucket_places.push_back({*cell, double(p.total_dwell_s)});
  }
  return m;
}

// Markov sampling from the per-user conditionals; HOME/WORK/TOP_OTHER geocode
// to the user's true cells, bucket hours to a dwell-weighted random true
// other place (redrawn each bucket hour).
inline Trajectory fem_generate(const FemModel& m, const Grid& grid, int days,
                               std::int64_t start_day, Rng& rng) {
  require(days >= 1, "fem_generate: days must be >= 1");
  Trajectory traj;
  traj.user_id = m.user_id;
  const int n = days * kHoursPerDay;
  std::vector<double> bucket_weights;
  for (const auto& [cell, w] : m.bucket_places) bucket_weights.push_back(w);

  auto cell_of = [&](int state) -> CellId {
    switch (state) {
      case kFemHome:
        require(m.home.has_value(), "fem_generate: user has no home cell");
        return *m.home;
      case kFemWork:
        require(m.work.has_value(), "fem_generate: user has no work cell");
        return *m.work;
      case kFemTopOther:
        require(m.top_other.has_value(), "fem_generate: user has no top-other cell");
        return *m.top_other;
      default: {
        require(!m.bucket_places.empty(), "fem_generate: user has no bucket places");
        return m.bucket_places[rng.categorical(bucket_weights)].first;
      }
    }
  };

  int state = int(rng.categorical(m.pi));
  for (int t = 0; t < n; ++t) {
    const CellId cell = cell_of(state);
    TrajectoryRecord rec;
    rec.ts = (start_day * kHoursPerDay + t) * kSecondsPerHour;
    rec.lat = grid.center_lat(cell);
    rec.lon = grid.center_lon(cell);
    traj.records.push_back(rec);
    if (t + 1 < n) {
      const int h = t % kHoursPerDay;
      std::vector<double> row(kFemStates);
      for (int next = 0; next < kFemStates; ++next)
        row[static_cast<std::size_t>(next)] = m.T[static_cast<std::size_t>((h * kFemStates + state) * kFemStates + next)];
      state = int(rng.categorical(row));
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// TimeGeo
// ---------------------------------------------------------------------------

struct TimeGeoParams {
  std::vector<double> rhythm;  // 168 weekly move probabilities
  double rho = 0.6;
  double gamma = 0.21;
  double alpha_rank = 0.86;
  // recorded for completeness; the simplified temporal model does not use them
  double n_w = 6.1, beta1 = 3.67, beta2 = 10.0;
  bool degenerate_fallback = false;
};

// Exploration events extracted from visitation histories: S = number of
// distinct cells seen before the move, is_new = move went somewhere unseen.
struct EprEvent {
  int distinct_before = 0;
  bool is_new = false;
};

// Least squares of log P_new vs log S. Returns false (leaving rho/gamma
// untouched) when fewer than two S values carry data or the fit is singular.
inline bool fit_epr_params(const std::vector<EprEvent>& events, double& rho, double& gamma,
                           int min_events_per_s = 1) {
  std::map<int, std::pair<int, int>> by_s;  // S -> (new, total)
  for (const auto& e : events) {
    if (e.distinct_before < 1) continue;
    auto& [nn, tt] = by_s[e.distinct_before];
    tt += 1;
    if (e.is_new) nn += 1;
  }
  std::vector<std::pair<double, double>> pts;  // (log S, log P_new)
  for (const auto& [s, counts] : by_s) {
    const auto& [nn, tt] = counts;
    if (tt < min_events_per_s || nn == 0) continue;
    pts.push_back({std::log(double(s)), std::log(double(nn) / double(tt))});
  }
  if (pts.size() < 2) return false;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = double(pts.size());
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) return false;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  gamma = -slope;
  rho = std::min(1.0, std::exp(intercept));
  return rho > 0.0 && gamma >= 0.0;
}

// Rank histogram regression for the exploration distance-rank exponent.
inline bool fit_rank_exponent(const std::vector<int>& explore_ranks, double& alpha_rank) {
  std::map<int, int> hist;
  for (int r : explore_ranks)
    if (r >= 1) hist[r] += 1;
  std::vector<std::pair<double, double>> pts;
  for (const auto& [rank, count] : hist) pts.push_back({std::log(double(rank)), std::log(double(count))});
  if (pts.size() < 2) return false;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = double(pts.size());
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) return false;
  alpha_rank = -(n * sxy - sx * sy) / denom;
  return alpha_rank > 0.0;
}

// Fits the weekly rhythm (fraction of users changing cell at each week-hour)
// and the EPR parameters from hourly cell sequences. A corpus with no moves
// yields an all-zero rhythm and default EPR parameters (flagged); only an
// empty corpus is an error.
inline TimeGeoParams timegeo_fit(
    const std::vector<std::vector<std::pair<std::int64_t, CellId>>>& hourly_cells,
    const Grid& grid) {
  require(!hourly_cells.empty(), "timegeo_fit: empty corpus");
  TimeGeoParams params;
  params.rhythm.assign(kHoursPerWeek, 0.0);
  std::vector<double> totals(kHoursPerWeek, 0.0);

  std::vector<EprEvent> events;
  std::vector<int> explore_ranks;
  for (const auto& user : hourly_cells) {
    std::set<CellId> seen;
    CellId prev = -1;
    std::int64_t prev_hour = -1;
    for (const auto& [hour, cell] : user) {
      if (prev_hour >= 0 && hour == prev_hour + 1) {
        const int wh = week_hour(prev_hour * kSecondsPerHour);
        totals[static_cast<std::size_t>(wh)] += 1.0;
        if (cell != prev) {
          params.rhythm[static_cast<std::size_t>(wh)] += 1.0;
          EprEvent e;
          e.distinct_before = int(seen.size());
          e.is_new = seen.count(cell) == 0;
          events.push_back(e);
          if (e.is_new) {
            // distance rank of the target among unvisited cells
            std::vector<double> dists;
            for (int c = 0; c < grid.cell_count(); ++c)
              if (!seen.count(c)) dists.push_back(grid.cell_distance_km(prev, c));
            std::sort(dists.begin(), dists.end());
            const double d = grid.cell_distance_km(prev, cell);
            int rank = 1 + int(std::lower_bound(dists.begin(), dists.end(), d - 1e-12) -
                               dists.begin());
            explore_ranks.push_back(rank);
          }
        }
      }
      seen.insert(cell);
      prev = cell;
      prev_hour = hour;
    }
  }
  for (int wh = 0; wh < kHoursPerWeek; ++wh)
    params.rhythm[static_cast<std::size_t>(wh)] =
        totals[static_cast<std::size_t>(wh)] > 0 ? params.rhythm[static_cast<std::size_t>(wh)] / totals[static_cast<std::size_t>(wh)]
                                    : 0.0;

  if (!fit_epr_params(events, params.rho, params.gamma)) {
    params.degenerate_fallback = true;
    std::fprintf(stderr, "[geoavatar] timegeo: EPR fit degenerate, using defaults\n");
  }
  if (!fit_rank_exponent(explore_ranks, params.alpha_rank)) {
    params.alpha_rank = 0.86;
    if (!params.degenerate_fallback)
      std::fprintf(stderr, "[geoavatar] timegeo: rank fit degenerate, alpha_r = 0.86\n");
  }
  return params;
}

inline double epr_explore_probability(int distinct_visited, const TimeGeoParams& params) {
  return std::min(1.0, params.rho * std::pow(double(distinct_visited), -params.gamma));
}

// Explore: unvisited cell with P ~ (distance rank)^-alpha_r from the current
// cell. Return: visited cell with P ~ visit count. All cells visited forces a
// return.
inline CellId epr_next_location(const std::map<CellId, int>& visited, CellId current,
                                const TimeGeoParams& params, const Grid& grid, Rng& rng) {
  require(!visited.empty(), "epr_next_location: visited set must not be empty");
  const int S = int(visited.size());
  const bool all_visited = S >= grid.cell_count();
  const bool explore = !all_visited && rng.uniform() < epr_explore_probability(S, params);
  if (explore) {
    std::vector<std::pair<double, CellId>> unvisited;  // (distance, cell)
    for (int c = 0; c < grid.cell_count(); ++c)
      if (!visited.count(c)) unvisited.push_back({grid.cell_distance_km(current, c), c});
    std::sort(unvisited.begin(), unvisited.end());
    std::vector<double> w(unvisited.size());
    for (std::size_t r = 0; r < unvisited.size(); ++r)
      w[r] = std::pow(double(r + 1), -params.alpha_rank);
    return unvisited[rng.categorical(w)].second;
  }
  std::vector<double> w;
  std::vector<CellId> cells;
  for (const auto& [cell, count] : visited) {
    cells.push_back(cell);
    w.push_back(double(count));
  }
  return cells[rng.categorical(w)];
}

// Rhythm-driven hourly simulation: move with probability rhythm(week-hour)
// via the EPR kernel; with the complement probability stay put, except at
// night (00-06) where the complement snaps to home.
inline Trajectory timegeo_generate(const TimeGeoParams& params, CellId home, int days,
                                   std::int64_t start_day, const Grid& grid, Rng& rng) {
  require(days >= 1, "timegeo_generate: days must be >= 1");
  Trajectory traj;
  std::map<CellId, int> visited;
  CellId current = home;
  visited[home] += 1;
  const int n = days * kHoursPerDay;
  for (int t = 0; t < n; ++t) {
    const std::int64_t ts = (start_day * kHoursPerDay + t) * kSecondsPerHour;
    const int wh = week_hour(ts);
    const int hod = hour_of_day(ts);
    const double move_p = params.rhythm[static_cast<std::size_t>(wh)];
    if (rng.uniform() < move_p) {
      current = epr_next_location(visited, current, params, grid, rng);
    } else if (hod < 6) {
      current = home;  // night bias
    }
    visited[current] += 1;
    TrajectoryRecord rec;
    rec.ts = ts;
    rec.lat = grid.center_lat(current);
    rec.lon = grid.center_lon(current);
    traj.records.push_back(rec);
  }
  return traj;
}

}  // namespace geoavatar
