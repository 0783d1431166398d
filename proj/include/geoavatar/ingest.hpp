// GPS corpus ingestion: staypoint detection, significant-place extraction
// with role labeling, hourly role sequences and empirical life patterns.
//
// All operations are per-user and pure; callers may fan users out across
// threads freely.
#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "geoavatar/core.hpp"

namespace geoavatar {

struct StayPoint {
  std::int64_t user_id = 0;
  double lat = 0, lon = 0;  // centroid of member points
  std::int64_t arrival = 0, departure = 0;
  std::int64_t duration_s() const { return departure - arrival; }
};

struct SignificantPlace {
  std::int64_t user_id = 0;
  int role = -1;  // role id in the alphabet
  double lat = 0, lon = 0;
  int visit_count = 0;
  std::int64_t total_dwell_s = 0;
};

struct StaypointParams {
  double dist_m = 200.0;
  std::int64_t min_stay_s = 1800;
  double merge_radius_m = 300.0;
  // A recording gap longer than this closes the window, so dwells never merge
  // across dead air. One hour accommodates hourly-sampled corpora; gaps above
  // max(max_gap_s, min_stay_s) never merge.
  std::int64_t max_gap_s = 3600;
};

// Sequential window detection: grow a window while every point stays within
// dist_m of the window anchor (its first point) and no recording gap exceeds
// the tolerance; emit when the window's time span reaches min_stay_s.
inline std::vector<StayPoint> detect_staypoints(const Trajectory& traj, double dist_m,
                                                std::int64_t min_stay_s,
                                                std::int64_t max_gap_s = 3600) {
  const auto& pts = traj.records;
  const std::int64_t gap_limit = std::max(max_gap_s, min_stay_s);
  std::vector<StayPoint> out;
  const std::size_t n = pts.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           pts[j + 1].ts - pts[j].ts <= gap_limit &&
           haversine_km(pts[i].lat, pts[i].lon, pts[j + 1].lat, pts[j + 1].lon) * 1000.0 <=
               dist_m) {
      ++j;
    }
    if (pts[j].ts - pts[i].ts >= min_stay_s) {
      StayPoint sp;
      sp.user_id = traj.user_id;
      double lat = 0, lon = 0;
      for (std::size_t k = i; k <= j; ++k) {
        lat += pts[k].lat;
        lon += pts[k].lon;
      }
      sp.lat = lat / double(j - i + 1);
      sp.lon = lon / double(j - i + 1);
      sp.arrival = pts[i].ts;
      sp.departure = pts[j].ts;
      out.push_back(sp);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

inline std::vector<StayPoint> detect_staypoints(const Trajectory& traj,
                                                const StaypointParams& p) {
  return detect_staypoints(traj, p.dist_m, p.min_stay_s, p.max_gap_s);
}

// Places plus the cluster index each staypoint was assigned to (-1 when its
// cluster was truncated away).
struct PlaceExtraction {
  std::vector<SignificantPlace> places;     // indexed by role presence, see below
  std::vector<int> staypoint_place;         // staypoint k -> index into places, or -1
  bool home_fallback = false;               // no nighttime dwell; HOME = global max dwell
};

namespace detail {

struct Cluster {
  double lat = 0, lon = 0;        // dwell-weighted centroid
  std::int64_t dwell = 0;
  int visits = 0;
  std::int64_t first_arrival = 0;
  std::int64_t night_dwell = 0;   // 00:00-06:00
  std::int64_t workday_dwell = 0; // 09:00-17:00 Mon-Fri
  std::vector<int> members;       // staypoint indices
};

// Seconds of [a, b) overlapping the daily window [h0, h1) (UTC hours),
// optionally restricted to weekdays.
inline std::int64_t window_overlap_s(std::int64_t a, std::int64_t b, int h0, int h1,
                                     bool weekdays_only) {
  std::int64_t total = 0;
  for (std::int64_t day = day_of(a); day * kSecondsPerDay < b; ++day) {
    if (weekdays_only && weekday_of_day(day) >= 5) continue;
    const std::int64_t w0 = day * kSecondsPerDay + h0 * kSecondsPerHour;
    const std::int64_t w1 = day * kSecondsPerDay + h1 * kSecondsPerHour;
    total += std::max<std::int64_t>(0, std::min(b, w1) - std::max(a, w0));
  }
  return total;
}

}  // namespace detail

// Greedy agglomeration of staypoints within merge_radius_m, then role
// labeling: HOME is the cluster with the most 00:00-06:00 dwell (global max
// dwell when no night dwell exists), WORK the most weekday 09:00-17:00 dwell
// excluding HOME, and the rest become OTHER_k by descending visit count,
// truncated to the alphabet. Ties break by total dwell, then earliest
// arrival.
inline PlaceExtraction extract_significant_places(const std::vector<StayPoint>& staypoints,
                                                  double merge_radius_m, int L,
                                                  int max_places = -1) {
  require(!staypoints.empty(), "extract_significant_places: no staypoints");
  std::vector<detail::Cluster> clusters;
  std::vector<int> assignment(staypoints.size(), -1);
  for (std::size_t k = 0; k < staypoints.size(); ++k) {
    const auto& sp = staypoints[k];
    int best = -1;
    double best_d = merge_radius_m;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      double d = haversine_km(sp.lat, sp.lon, clusters[c].lat, clusters[c].lon) * 1000.0;
      if (d <= best_d) {
        best_d = d;
        best = int(c);
      }
    }
    if (best < 0) {
      detail::Cluster c;
      c.lat = sp.lat;
      c.lon = sp.lon;
      c.first_arrival = sp.arrival;
      best = int(clusters.size());
      clusters.push_back(c);
    }
    auto& c = clusters[best];
    const double w_old = double(c.dwell), w_new = double(sp.duration_s());
    if (w_old + w_new > 0) {
      c.lat = (c.lat * w_old + sp.lat * w_new) / (w_old + w_new);
      c.lon = (c.lon * w_old + sp.lon * w_new) / (w_old + w_new);
    }
    c.dwell += sp.duration_s();
    c.visits += 1;
    c.night_dwell += detail::window_overlap_s(sp.arrival, sp.departure, 0, 6, false);
    c.workday_dwell += detail::window_overlap_s(sp.arrival, sp.departure, 9, 17, true);
    c.members.push_back(int(k));
    assignment[k] = best;
  }

  // HOME
  int home = -1;
  std::int64_t best_night = 0;
  bool fallback = true;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].night_dwell > best_night) {
      best_night = clusters[c].night_dwell;
      home = int(c);
      fallback = false;
    }
  }
  if (home < 0) {  // no nighttime dwell anywhere
    std::int64_t best_dwell = -1;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].dwell > best_dwell) {
        best_dwell = clusters[c].dwell;
        home = int(c);
      }
    }
  }

  // WORK
  int work = -1;
  std::int64_t best_day = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (int(c) == home) continue;
    if (clusters[c].workday_dwell > best_day) {
      best_day = clusters[c].workday_dwell;
      work = int(c);
    }
  }

  // OTHERs by visit count desc, dwell desc, first arrival asc.
  std::vector<int> others;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    if (int(c) != home && int(c) != work) others.push_back(int(c));
  std::sort(others.begin(), others.end(), [&](int a, int b) {
    if (clusters[a].visits != clusters[b].visits) return clusters[a].visits > clusters[b].visits;
    if (clusters[a].dwell != clusters[b].dwell) return clusters[a].dwell > clusters[b].dwell;
    return clusters[a].first_arrival < clusters[b].first_arrival;
  });
  const int other_cap = max_places < 0 ? L - 2 : std::max(0, max_places - 2);
  if (int(others.size()) > other_cap) others.resize(other_cap);

  PlaceExtraction out;
  out.home_fallback = fallback;
  out.staypoint_place.assign(staypoints.size(), -1);
  std::vector<int> cluster_to_place(clusters.size(), -1);
  auto emit = [&](int cluster, int role) {
    const auto& c = clusters[static_cast<std::size_t>(cluster)];
    SignificantPlace p;
    p.user_id = staypoints.front().user_id;
    p.role = role;
    p.lat = c.lat;
    p.lon = c.lon;
    p.visit_count = c.visits;
    p.total_dwell_s = c.dwell;
    cluster_to_place[static_cast<std::size_t>(cluster)] = int(out.places.size());
    out.places.push_back(p);
  };
  emit(home, kRoleHome);
  if (work >= 0) emit(work, kRoleWork);
  for (std::size_t k = 0; k < others.size(); ++k) emit(others[k], 2 + int(k));
  for (std::size_t k = 0; k < staypoints.size(); ++k)
    out.staypoint_place[k] = cluster_to_place[static_cast<std::size_t>(assignment[k])];
  return out;
}

// Hourly role labeling over [start_day, start_day + days): each hour takes
// the role whose place covers the largest share of it (ties go to the
// earlier-arriving role); uncovered hours carry the previous role forward,
// and leading uncovered hours are backfilled from the first covered one.
inline RoleSequence to_hourly_roles(const std::vector<StayPoint>& staypoints,
                                    const PlaceExtraction& extraction,
                                    std::int64_t start_day, int days) {
  require(days > 0, "to_hourly_roles: day range must be non-empty");
  const std::int64_t t0 = start_day * kSecondsPerDay;
  const int n_hours = days * kHoursPerDay;

  struct Slot {
    std::map<int, std::int64_t> seconds;    // role -> coverage
    std::map<int, std::int64_t> first_seen; // role -> earliest arrival
  };
  std::vector<Slot> slots(static_cast<std::size_t>(n_hours));
  for (std::size_t k = 0; k < staypoints.size(); ++k) {
    const int place = extraction.staypoint_place[k];
    if (place < 0) continue;  // truncated cluster: leaves the hour uncovered
    const int role = extraction.places[static_cast<std::size_t>(place)].role;
    const auto& sp = staypoints[k];
    std::int64_t a = std::max(sp.arrival, t0);
    std::int64_t b = std::min(sp.departure, t0 + std::int64_t(n_hours) * kSecondsPerHour);
    for (std::int64_t h = (a - t0) / kSecondsPerHour; h < n_hours; ++h) {
      const std::int64_t h0 = t0 + h * kSecondsPerHour, h1 = h0 + kSecondsPerHour;
      if (h0 >= b) break;
      const std::int64_t overlap = std::min(b, h1) - std::max(a, h0);
      if (overlap <= 0) {
        if (a == b && a >= h0 && a < h1) {
          // zero-length staypoint (single record); count as an instant visit
          auto& s = slots[static_cast<std::size_t>(h)];
          s.seconds[role] += 1;
          auto it = s.first_seen.find(role);
          if (it == s.first_seen.end() || sp.arrival < it->second) s.first_seen[role] = sp.arrival;
        }
        continue;
      }
      auto& s = slots[static_cast<std::size_t>(h)];
      s.seconds[role] += overlap;
      auto it = s.first_seen.find(role);
      if (it == s.first_seen.end() || sp.arrival < it->second) s.first_seen[role] = sp.arrival;
    }
  }

  RoleSequence seq;
  seq.user_id = staypoints.empty() ? 0 : staypoints.front().user_id;
  seq.start_day = start_day;
  seq.values.assign(static_cast<std::size_t>(n_hours), -1);
  for (int h = 0; h < n_hours; ++h) {
    const auto& s = slots[static_cast<std::size_t>(h)];
    int best_role = -1;
    std::int64_t best_sec = 0;
    std::int64_t best_first = 0;
    for (const auto& [role, sec] : s.seconds) {
      const std::int64_t first = s.first_seen.at(role);
      if (sec > best_sec || (sec == best_sec && best_role >= 0 && first < best_first)) {
        best_role = role;
        best_sec = sec;
        best_first = first;
      }
    }
    seq.values[static_cast<std::size_t>(h)] = best_role;
  }
  // carry forward, then backfill the head
  int prev = -1;
  for (int h = 0; h < n_hours; ++h) {
    if (seq.values[static_cast<std::size_t>(h)] < 0)
      seq.values[static_cast<std::size_t>(h)] = prev;
    else
      prev = seq.values[static_cast<std::size_t>(h)];
  }
  int first_role = kRoleHome;
  for (int h = 0; h < n_hours; ++h)
    if (seq.values[static_cast<std::size_t>(h)] >= 0) {
      first_role = seq.values[static_cast<std::size_t>(h)];
      break;
    }
  for (int h = 0; h < n_hours && seq.values[static_cast<std::size_t>(h)] < 0; ++h)
    seq.values[static_cast<std::size_t>(h)] = first_role;
  return seq;
}

// Hour-conditioned transition counts with additive smoothing; pi from the
// smoothed hour-0 frequencies.
inline LifePattern extract_life_pattern(const RoleSequence& seq, int L,
                                        double smoothing = 0.01) {
  require(seq.values.size() >= 2 * kHoursPerDay,
          "extract_life_pattern: need at least 2 days of data");
  seq.validate(L);
  std::vector<double> counts(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0);
  std::vector<double> pi_counts(static_cast<std::size_t>(L), 0.0);
  const int n = int(seq.values.size());
  for (int t = 0; t + 1 < n; ++t) {
    const int h = t % kHoursPerDay;
    counts[static_cast<std::size_t>((h * L + seq.values[static_cast<std::size_t>(t)]) * L +
                       seq.values[static_cast<std::size_t>(t + 1)])] += 1.0;
  }
  for (int t = 0; t < n; t += kHoursPerDay) pi_counts[static_cast<std::size_t>(seq.values[static_cast<std::size_t>(t)])] += 1.0;

  std::vector<double> T(counts.size());
  for (int r = 0; r < kHoursPerDay * L; ++r) {
    double total = 0.0;
    for (int j = 0; j < L; ++j) total += counts[static_cast<std::size_t>(r * L + j)];
    const double denom = total + smoothing * L;
    for (int j = 0; j < L; ++j)
      T[static_cast<std::size_t>(r * L + j)] =
          denom > 0.0 ? (counts[static_cast<std::size_t>(r * L + j)] + smoothing) / denom : 1.0 / L;
  }
  std::vector<double> pi(static_cast<std::size_t>(L));
  double total = 0.0;
  for (int i = 0; i < L; ++i) total += pi_counts[static_cast<std::size_t>(i)];
  for (int i = 0; i < L; ++i)
    pi[static_cast<std::size_t>(i)] = (pi_counts[static_cast<std::size_t>(i)] + smoothing) / (total + smoothing * L);
  return LifePattern::from_probabilities(L, std::move(pi), std::move(T));
}

// Convenience bundle for one ingested user.
struct IngestedUser {
  std::int64_t user_id = 0;
  std::vector<StayPoint> staypoints;
  PlaceExtraction extraction;
  RoleSequence roles;
  LifePattern pattern;
};

inline IngestedUser ingest_user(const Trajectory& traj, const StaypointParams& params, int L,
                                std::int64_t start_day, int days, double pattern_smoothing) {
  IngestedUser u;
  u.user_id = traj.user_id;
  u.staypoints = detect_staypoints(traj, params);
  require(!u.staypoints.empty(),
          "ingest: user " + std::to_string(traj.user_id) + " has no staypoints");
  u.extraction = extract_significant_places(u.staypoints, params.merge_radius_m, L);
  u.roles = to_hourly_roles(u.staypoints, u.extraction, start_day, days);
  u.pattern = extract_life_pattern(u.roles, L, pattern_smoothing);
  return u;
}

}  // namespace geoavatar
