// Key-location assignment: maps a pseudo person's abstract roles to grid
// cells by a Markov chain of demographics-conditioned choices, then geocodes
// role sequences into hourly trajectories.
//
// Choice order matters: home first (segment home distribution), then work
// (commute OD row of the home cell), then each OTHER role in descending
// pattern occupancy, each conditioned on the nearest already-chosen anchor
// through an exponential distance decay.
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

struct SpatialPriors {
  int n_segments = 0;
  int n_cells = 0;
  std::vector<std::vector<double>> home_dist;   // [segment][cell]
  std::vector<std::vector<double>> commute_od;  // [segment][home_cell * n_cells + work_cell]
  std::vector<double> attractiveness;           // [cell], OTHER-role weight
  double decay_km = 3.0;
};

// Per-user spatial anchors used for fitting (already ingested and labeled).
struct UserPlacesForPriors {
  int segment = 0;
  std::optional<CellId> home;
  std::optional<CellId> work;
  std::vector<std::pair<CellId, double>> others;  // (cell, dwell seconds)
};

// Counting estimates with additive smoothing 0.5 per cell. Segments with no
// users fall back to pooled all-segment estimates.
inline SpatialPriors fit_spatial_priors(const std::vector<UserPlacesForPriors>& users,
                                        const Grid& grid, int n_segments,
                                        double decay_km = 3.0, double smoothing = 0.5) {
  require(n_segments >= 1, "fit_spatial_priors: need at least one segment");
  const int C = grid.cell_count();
  SpatialPriors p;
  p.n_segments = n_segments;
  p.n_cells = C;
  p.decay_km = decay_km;

  std::vector<std::vector<double>> home_counts(static_cast<std::size_t>(n_segments),
                                               std::vector<double>(static_cast<std::size_t>(C), 0.0));
  std::vector<double> home_pooled(static_cast<std::size_t>(C), 0.0);
  std::vector<std::map<std::pair<CellId, CellId>, double>> od_counts(static_cast<std::size_t>(n_segments));
  std::map<std::pair<CellId, CellId>, double> od_pooled;
  std::vector<double> attract(static_cast<std::size_t>(C), 0.0);
  std::vector<int> seg_users(static_cast<std::size_t>(n_segments), 0);

  for (const auto& u : users) {
    require(u.segment >= 0 && u.segment < n_segments, "fit_spatial_priors: bad segment id");
    if (!u.home) continue;
    seg_users[static_cast<std::size_t>(u.segment)] += 1;
    home_counts[static_cast<std::size_t>(u.segment)][static_cast<std::size_t>(*u.home)] += 1.0;
    home_pooled[static_cast<std::size_t>(*u.home)] += 1.0;
    if (u.work) {
      od_counts[static_cast<std::size_t>(u.segment)][{*u.home, *u.work}] += 1.0;
      od_pooled[{*u.home, *u.work}] += 1.0;
    }
    for (const auto& [cell, dwell] : u.others) attract[static_cast<std::size_t>(cell)] += dwell;
  }

  auto normalize_home = [&](const std::vector<double>& counts) {
    std::vector<double> dist(static_cast<std::size_t>(C));
    double total = 0.0;
    for (double c : counts) total += c;
    for (int c = 0; c < C; ++c)
      dist[static_cast<std::size_t>(c)] = (counts[static_cast<std::size_t>(c)] + smoothing) / (total + smoothing * C);
    return dist;
  };
  auto normalize_od = [&](const std::map<std::pair<CellId, CellId>, double>& counts) {
    std::vector<double> od(static_cast<std::size_t>(C) * static_cast<std::size_t>(C), 0.0);
    for (const auto& [key, v] : counts) od[static_cast<std::size_t>(key.first) * C + static_cast<std::size_t>(key.second)] = v;
    for (int home = 0; home < C; ++home) {
      double total = 0.0;
      for (int w = 0; w < C; ++w) total += od[static_cast<std::size_t>(home) * C + static_cast<std::size_t>(w)];
      for (int w = 0; w < C; ++w) {
        auto& v = od[static_cast<std::size_t>(home) * C + static_cast<std::size_t>(w)];
        v = (v + smoothing) / (total + smoothing * C);
      }
    }
    return od;
  };

  for (int s = 0; s < n_segments; ++s) {
    if (seg_users[static_cast<std::size_t>(s)] == 0) {
      std::fprintf(stderr, "[geoavatar] priors: segment %d has no users, pooled fallback\n", s);
      p.home_dist.push_back(normalize_home(home_pooled));
      p.commute_od.push_back(normalize_od(od_pooled));
    } else {
      p.home_dist.push_back(normalize_home(home_counts[static_cast<std::size_t>(s)]));
      p.commute_od.push_back(normalize_od(od_counts[static_cast<std::size_t>(s)]));
    }
  }
  p.attractiveness = attract;
  for (auto& v : p.attractiveness) v += smoothing;
  return p;
}

// role id -> grid cell for every role the pattern actually uses.
struct KeyLocationTable {
  std::map<int, CellId> cells;

  CellId at(int role) const {
    auto it = cells.find(role);
    require(it != cells.end(),
            "key location table: no cell assigned for role " + RoleAlphabet::role_name(role));
    return it->second;
  }
  bool has(int role) const { return cells.count(role) > 0; }
};

// OTHER-role choice weights given the already-chosen anchors:
// w(cell) ~ attractiveness(cell) * exp(-dist_km(cell, nearest anchor)/decay).
// Already-used cells are excluded when any other candidate has mass.
inline std::vector<double> other_cell_weights(const SpatialPriors& priors, const Grid& grid,
                                              const std::vector<CellId>& anchors,
                                              const std::set<CellId>& used) {
  const int C = grid.cell_count();
  std::vector<double> w(static_cast<std::size_t>(C), 0.0);
  double mass_excl_used = 0.0;
  for (int c = 0; c < C; ++c) {
    double nearest = 0.0;
    if (!anchors.empty()) {
      nearest = std::numeric_limits<double>::infinity();
      for (CellId a : anchors) nearest = std::min(nearest, grid.cell_distance_km(a, c));
    }
    w[static_cast<std::size_t>(c)] =
        priors.attractiveness[static_cast<std::size_t>(c)] * std::exp(-nearest / priors.decay_km);
    if (!used.count(c)) mass_excl_used += w[static_cast<std::size_t>(c)];
  }
  if (mass_excl_used > 0.0)
    for (CellId c : used) w[static_cast<std::size_t>(c)] = 0.0;
  return w;
}

// Markov chain of location choices: home ~ home_dist[segment], work ~
// commute_od[segment][home], OTHERs by descending mean occupancy with
// distance decay to the nearest chosen anchor. A role enters the table iff
// its peak occupancy exceeds the support threshold; HOME is always assigned.
inline KeyLocationTable sample_key_table(int segment, const SpatialPriors& priors,
                                         const LifePattern& pattern, const Grid& grid, Rng& rng,
                                         double support_threshold = 1e-3) {
  require(segment >= 0 && segment < priors.n_segments, "sample_key_table: bad segment");
  require(priors.n_cells == grid.cell_count(), "sample_key_table: grid/priors size mismatch");
  const int L = pattern.alphabet_size();
  const int C = grid.cell_count();

  KeyLocationTable table;
  std::set<CellId> used;
  std::vector<CellId> anchors;

  const CellId home = CellId(rng.categorical(priors.home_dist[static_cast<std::size_t>(segment)]));
  table.cells[kRoleHome] = home;
  used.insert(home);
  anchors.push_back(home);

  const bool wants_work = pattern.max_occupancy(kRoleWork) > support_threshold;
  if (wants_work) {
    std::vector<double> row(static_cast<std::size_t>(C));
    const auto& od = priors.commute_od[static_cast<std::size_t>(segment)];
    for (int c = 0; c < C; ++c) row[static_cast<std::size_t>(c)] = od[static_cast<std::size_t>(home) * C + static_cast<std::size_t>(c)];
    double remaining = 0.0;
    for (int c = 0; c < C; ++c)
      if (!used.count(c)) remaining += row[static_cast<std::size_t>(c)];
    if (remaining > 0.0)
      for (CellId c : used) row[static_cast<std::size_t>(c)] = 0.0;
    const CellId work = CellId(rng.categorical(row));
    table.cells[kRoleWork] = work;
    used.insert(work);
    anchors.push_back(work);
  }

  std::vector<int> other_roles;
  for (int r = 2; r < L; ++r)
    if (pattern.max_occupancy(r) > support_threshold) other_roles.push_back(r);
  std::sort(other_roles.begin(), other_roles.end(), [&](int a, int b) {
    const double oa = pattern.mean_occupancy(a), ob = pattern.mean_occupancy(b);
    if (oa != ob) return oa > ob;
    return a < b;
  });
  for (int role : other_roles) {
    const auto w = other_cell_weights(priors, grid, anchors, used);
    const CellId cell = CellId(rng.categorical(w));
    table.cells[role] = cell;
    used.insert(cell);
    anchors.push_back(cell);
  }
  return table;
}

// One record per hour at the role's cell center plus uniform-in-disk jitter;
// timestamps on the hour. Records are clamped into the grid bbox.
inline Trajectory geocode_sequence(const RoleSequence& seq, const KeyLocationTable& table,
                                   const Grid& grid, double jitter_m, Rng& rng) {
  Trajectory traj;
  traj.user_id = seq.user_id;
  traj.records.reserve(seq.values.size());
  for (std::size_t t = 0; t < seq.values.size(); ++t) {
    const int role = seq.values[t];
    const CellId cell = table.at(role);  // throws with the role name if missing
    double lat = grid.center_lat(cell);
    double lon = grid.center_lon(cell);
    if (jitter_m > 0.0) {
      const double r = jitter_m * std::sqrt(rng.uniform());
      const double theta = rng.uniform() * 6.283185307179586;
      lat += (r * std::sin(theta)) / 111195.0;
      lon += (r * std::cos(theta)) / (111195.0 * std::max(0.01, std::cos(lat * 0.017453292519943295)));
    }
    lat = std::clamp(lat, grid.bbox.lat_min, grid.bbox.lat_max);
    lon = std::clamp(lon, grid.bbox.lon_min, grid.bbox.lon_max);
    TrajectoryRecord rec;
    rec.ts = (seq.start_day * kHoursPerDay + std::int64_t(t)) * kSecondsPerHour;
    rec.lat = lat;
    rec.lon = lon;
    traj.records.push_back(rec);
  }
  return traj;
}

}  // namespace geoavatar
