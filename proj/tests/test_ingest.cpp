#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "geoavatar/ingest.hpp"

using namespace geoavatar;

namespace {

constexpr std::int64_t kMonday = 19723;  // 2024-01-01, a Monday
constexpr std::int64_t kT0 = kMonday * kSecondsPerDay;

Trajectory make_traj(std::int64_t uid,
                     const std::vector<std::tuple<std::int64_t, double, double>>& pts) {
  Trajectory t;
  t.user_id = uid;
  for (const auto& [ts, lat, lon] : pts) t.records.push_back({ts, lat, lon});
  std::sort(t.records.begin(), t.records.end(),
            [](const TrajectoryRecord& a, const TrajectoryRecord& b) { return a.ts < b.ts; });
  return t;
}

// Brute-force staypoint oracle: identical window semantics, written as plain
// nested loops with no two-pointer bookkeeping.
std::vector<StayPoint> oracle_staypoints(const Trajectory& traj, double dist_m,
                                         std::int64_t min_stay_s, std::int64_t max_gap_s) {
  const auto& pts = traj.records;
  const std::int64_t gap = std::max(max_gap_s, min_stay_s);
  std::vector<StayPoint> out;
  std::size_t i = 0;
  while (i < pts.size()) {
    std::size_t j = i;
    for (std::size_t k = i + 1; k < pts.size(); ++k) {
      bool ok = pts[k].ts - pts[k - 1].ts <= gap;
      if (ok && haversine_km(pts[i].lat, pts[i].lon, pts[k].lat, pts[k].lon) * 1000.0 > dist_m)
        ok = false;
      if (!ok) break;
      j = k;
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

}  // namespace

TEST_CASE("staypoints: single 40-minute dwell") {
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  for (int k = 0; k <= 8; ++k)  // every 5 minutes for 40 minutes, within 10 m
    pts.push_back({kT0 + k * 300, 35.0 + (k % 2) * 0.00008, 139.0});
  const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
  REQUIRE(sps.size() == 1);
  CHECK(sps[0].duration_s() == 2400);
}

TEST_CASE("staypoints: steady movement yields none") {
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  for (int k = 0; k < 60; ++k)  // 1 km per minute
    pts.push_back({kT0 + k * 60, 35.0 + k * 0.009, 139.0});
  CHECK(detect_staypoints(make_traj(1, pts), 200.0, 1800).empty());
}

TEST_CASE("staypoints: two dwells 5 km apart") {
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  for (int k = 0; k <= 8; ++k) pts.push_back({kT0 + k * 300, 35.0, 139.0});
  for (int k = 0; k <= 8; ++k) pts.push_back({kT0 + 3000 + k * 300, 35.045, 139.0});
  const auto traj = make_traj(1, pts);
  const auto sps = detect_staypoints(traj, 200.0, 1800);
  const auto expected = oracle_staypoints(traj, 200.0, 1800, 3600);
  REQUIRE(sps.size() == 2);
  REQUIRE(expected.size() == 2);
  CHECK_THAT(sps[0].lat, Catch::Matchers::WithinAbs(35.0, 1e-9));
  CHECK_THAT(sps[1].lat, Catch::Matchers::WithinAbs(35.045, 1e-9));
}

TEST_CASE("staypoints match the brute-force oracle on fuzzed walks") {
  Rng rng(2024);
  for (int it = 0; it < 60; ++it) {
    Trajectory traj;
    traj.user_id = it;
    std::int64_t ts = kT0;
    double lat = 35.0, lon = 139.0;
    const int n = 20 + int(rng.uniform_int(120));
    for (int k = 0; k < n; ++k) {
      ts += 200 + std::int64_t(rng.uniform_int(2500));
      if (rng.uniform() < 0.25) {  // jump somewhere else
        lat += rng.uniform(-0.02, 0.02);
        lon += rng.uniform(-0.02, 0.02);
      } else {  // local wobble
        lat += rng.uniform(-0.0004, 0.0004);
        lon += rng.uniform(-0.0004, 0.0004);
      }
      traj.records.push_back({ts, lat, lon});
    }
    const auto got = detect_staypoints(traj, 200.0, 1800);
    const auto expected = oracle_staypoints(traj, 200.0, 1800, 3600);
    REQUIRE(got.size() == expected.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].arrival == expected[k].arrival);
      CHECK(got[k].departure == expected[k].departure);
      CHECK_THAT(got[k].lat, Catch::Matchers::WithinAbs(expected[k].lat, 1e-12));
      CHECK_THAT(got[k].lon, Catch::Matchers::WithinAbs(expected[k].lon, 1e-12));
    }
  }
}

TEST_CASE("staypoints: a long recording gap never merges dwells") {
  // same place, but the two recording bursts are separated by more than the
  // detector's gap tolerance
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  for (int k = 0; k <= 6; ++k) pts.push_back({kT0 + k * 600, 35.0, 139.0});
  const std::int64_t gap_start = kT0 + 6 * 600;
  for (int k = 1; k <= 6; ++k) pts.push_back({gap_start + 7200 + k * 600, 35.0, 139.0});
  const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
  REQUIRE(sps.size() == 2);
  CHECK(sps[0].departure <= gap_start);
  CHECK(sps[1].arrival >= gap_start + 7200);
}

namespace {

// hourly dwell helper: emits 3 records per hour at the given spot
void dwell(std::vector<std::tuple<std::int64_t, double, double>>& pts, std::int64_t day,
           int hour_begin, int hour_end, double lat, double lon) {
  for (int h = hour_begin; h < hour_end; ++h)
    for (int k = 0; k < 3; ++k)
      pts.push_back({day * kSecondsPerDay + h * kSecondsPerHour + k * 1200, lat, lon});
}

}  // namespace

TEST_CASE("significant places: night dwell becomes HOME, weekday day becomes WORK") {
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  const double home_lat = 35.0, work_lat = 35.1;
  for (int d = 0; d < 5; ++d) {  // Monday..Friday
    dwell(pts, kMonday + d, 0, 7, home_lat, 139.0);
    dwell(pts, kMonday + d, 9, 17, work_lat, 139.0);
    dwell(pts, kMonday + d, 18, 24, home_lat, 139.0);
  }
  const auto traj = make_traj(1, pts);
  const auto sps = detect_staypoints(traj, 200.0, 1800);
  const auto ex = extract_significant_places(sps, 300.0, 12);
  REQUIRE(ex.places.size() == 2);
  CHECK(ex.places[0].role == kRoleHome);
  CHECK_THAT(ex.places[0].lat, Catch::Matchers::WithinAbs(home_lat, 1e-9));
  CHECK(ex.places[1].role == kRoleWork);
  CHECK_THAT(ex.places[1].lat, Catch::Matchers::WithinAbs(work_lat, 1e-9));
  CHECK_FALSE(ex.home_fallback);
}

TEST_CASE("significant places: night-only cluster is HOME with no WORK") {
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  for (int d = 0; d < 3; ++d) dwell(pts, kMonday + d, 1, 5, 35.0, 139.0);
  const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
  const auto ex = extract_significant_places(sps, 300.0, 12);
  REQUIRE(ex.places.size() == 1);
  CHECK(ex.places[0].role == kRoleHome);
}

TEST_CASE("significant places: no night dwell falls back to max dwell") {
  std::vector<std::tuple<std::int64_t, double, double>> pts;
  for (int d = 0; d < 3; ++d) {
    dwell(pts, kMonday + d, 10, 12, 35.05, 139.0);  // short
    dwell(pts, kMonday + d, 13, 18, 35.10, 139.0);  // long -> HOME fallback
  }
  const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
  const auto ex = extract_significant_places(sps, 300.0, 12);
  CHECK(ex.home_fallback);
  REQUIRE_FALSE(ex.places.empty());
  CHECK(ex.places[0].role == kRoleHome);
  CHECK_THAT(ex.places[0].lat, Catch::Matchers::WithinAbs(35.10, 1e-9));
}

TEST_CASE("significant places: 15 clusters with L=12 keep the top 10 others") {
  std::vector<StayPoint> sps;
  auto add_stay = [&](double lat, double lon, std::int64_t arrival, std::int64_t dur) {
    StayPoint sp;
    sp.user_id = 1;
    sp.lat = lat;
    sp.lon = lon;
    sp.arrival = arrival;
    sp.departure = arrival + dur;
    sps.push_back(sp);
  };
  // home nightly, work on weekdays
  for (int d = 0; d < 7; ++d) {
    add_stay(35.0, 139.0, (kMonday + d) * kSecondsPerDay, 6 * kSecondsPerHour);
    if (weekday_of_day(kMonday + d) < 5)
      add_stay(35.3, 139.0, (kMonday + d) * kSecondsPerDay + 9 * kSecondsPerHour,
               7 * kSecondsPerHour);
  }
  // 13 other clusters with strictly decreasing visit counts (evening visits)
  for (int c = 0; c < 13; ++c) {
    const int visits = 14 - c;
    for (int v = 0; v < visits; ++v)
      add_stay(35.0 + 0.02 * (c + 2), 139.2 + 0.01 * c,
               (kMonday + v % 7) * kSecondsPerDay + 19 * kSecondsPerHour + c * 60,
               1200);
  }
  const auto ex = extract_significant_places(sps, 300.0, 12);
  REQUIRE(ex.places.size() == 12);  // HOME + WORK + 10 others
  CHECK(ex.places[0].role == kRoleHome);
  CHECK(ex.places[1].role == kRoleWork);
  // others ordered by visit count: roles 2..11 map to clusters 0..9
  for (std::size_t k = 3; k < ex.places.size(); ++k)
    CHECK(ex.places[k - 1].visit_count >= ex.places[k].visit_count);
  CHECK(ex.places[2].visit_count == 14);
  CHECK(ex.places[11].visit_count == 5);
  // the dropped clusters leave their staypoints unassigned
  int unassigned = 0;
  for (int a : ex.staypoint_place)
    if (a < 0) ++unassigned;
  CHECK(unassigned == 4 + 3 + 2);  // clusters with 4, 3 and 2 visits
}

TEST_CASE("hourly roles: constant home, commuter, tie break and carry forward") {
  SECTION("user at home all day") {
    std::vector<std::tuple<std::int64_t, double, double>> pts;
    for (int d = 0; d < 2; ++d) dwell(pts, kMonday + d, 0, 24, 35.0, 139.0);
    const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
    const auto ex = extract_significant_places(sps, 300.0, 12);
    const auto seq = to_hourly_roles(sps, ex, kMonday, 2);
    REQUIRE(seq.values.size() == 48);
    for (int v : seq.values) CHECK(v == kRoleHome);
  }
  SECTION("9-17 commuter has 8 work hours, rest home") {
    std::vector<std::tuple<std::int64_t, double, double>> pts;
    for (int d = 0; d < 5; ++d) {
      dwell(pts, kMonday + d, 0, 9, 35.0, 139.0);
      dwell(pts, kMonday + d, 9, 17, 35.1, 139.0);
      dwell(pts, kMonday + d, 17, 24, 35.0, 139.0);
    }
    const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
    const auto ex = extract_significant_places(sps, 300.0, 12);
    const auto seq = to_hourly_roles(sps, ex, kMonday, 5);
    int work_hours = 0;
    for (int h = 0; h < 24; ++h)
      if (seq.values[static_cast<std::size_t>(h)] == kRoleWork) ++work_hours;
    CHECK(work_hours == 8);
    CHECK(seq.values[8] == kRoleHome);
    CHECK(seq.values[9] == kRoleWork);
    CHECK(seq.values[17] == kRoleHome);
  }
  SECTION("30 min each: earlier-starting role wins the hour") {
    // hand-built staypoints so the two roles cover exactly 30 minutes each
    std::vector<StayPoint> sps;
    StayPoint home_sp;
    home_sp.user_id = 1;
    home_sp.lat = 35.0;
    home_sp.lon = 139.0;
    home_sp.arrival = kT0 + 2 * kSecondsPerHour;  // 02:00 - 08:30
    home_sp.departure = kT0 + 8 * kSecondsPerHour + 1800;
    StayPoint work_sp;
    work_sp.user_id = 1;
    work_sp.lat = 35.1;
    work_sp.lon = 139.0;
    work_sp.arrival = kT0 + 8 * kSecondsPerHour + 1800;  // 08:30 - 16:00
    work_sp.departure = kT0 + 16 * kSecondsPerHour;
    sps.push_back(home_sp);
    sps.push_back(work_sp);
    const auto ex = extract_significant_places(sps, 300.0, 12);
    const auto seq = to_hourly_roles(sps, ex, kMonday, 1);
    REQUIRE(ex.places[0].role == kRoleHome);
    CHECK(seq.values[8] == kRoleHome);  // equal 30-minute shares; earlier start wins
    CHECK(seq.values[9] == kRoleWork);
  }
  SECTION("uncovered hours carry the previous role forward") {
    std::vector<std::tuple<std::int64_t, double, double>> pts;
    dwell(pts, kMonday, 0, 6, 35.0, 139.0);
    dwell(pts, kMonday, 12, 14, 35.1, 139.0);
    dwell(pts, kMonday + 1, 0, 6, 35.0, 139.0);
    const auto sps = detect_staypoints(make_traj(1, pts), 200.0, 1800);
    const auto ex = extract_significant_places(sps, 300.0, 12);
    const auto seq = to_hourly_roles(sps, ex, kMonday, 2);
    for (int h = 6; h < 12; ++h) CHECK(seq.values[static_cast<std::size_t>(h)] == seq.values[5]);
    for (int h = 14; h < 24; ++h) CHECK(seq.values[static_cast<std::size_t>(h)] == seq.values[13]);
  }
}

TEST_CASE("life pattern extraction") {
  const int L = 12;
  SECTION("constant home sequence") {
    RoleSequence seq;
    seq.values.assign(24 * 7, kRoleHome);
    const auto p = extract_life_pattern(seq, L);
    for (int h = 0; h < 24; ++h)
      CHECK(p.transition(h, kRoleHome, kRoleHome) > 0.98);
  }
  SECTION("deterministic commuter") {
    RoleSequence seq;
    for (int d = 0; d < 14; ++d)
      for (int h = 0; h < 24; ++h)
        seq.values.push_back(h >= 9 && h < 18 ? kRoleWork : kRoleHome);
    const auto p = extract_life_pattern(seq, L);
    CHECK(p.transition(8, kRoleHome, kRoleWork) > 0.98);
    CHECK(p.transition(17, kRoleWork, kRoleHome) > 0.98);
    CHECK(p.transition(12, kRoleWork, kRoleWork) > 0.98);
  }
  SECTION("unsmoothed counts match the direct frequency oracle") {
    Rng rng(31);
    RoleSequence seq;
    for (int t = 0; t < 24 * 30; ++t) seq.values.push_back(int(rng.uniform_int(3)));
    const auto p = extract_life_pattern(seq, 3, 0.0);
    // direct counting oracle
    std::vector<double> counts(24 * 3 * 3, 0.0), totals(24 * 3, 0.0);
    for (int t = 0; t + 1 < int(seq.values.size()); ++t) {
      const int h = t % 24;
      counts[static_cast<std::size_t>((h * 3 + seq.values[static_cast<std::size_t>(t)]) * 3 +
                         seq.values[static_cast<std::size_t>(t + 1)])] += 1.0;
      totals[static_cast<std::size_t>(h * 3 + seq.values[static_cast<std::size_t>(t)])] += 1.0;
    }
    for (int h = 0; h < 24; ++h)
      for (int i = 0; i < 3; ++i) {
        if (totals[static_cast<std::size_t>(h * 3 + i)] == 0.0) continue;
        for (int j = 0; j < 3; ++j)
          CHECK_THAT(p.transition(h, i, j),
                     Catch::Matchers::WithinAbs(counts[static_cast<std::size_t>((h * 3 + i) * 3 + j)] /
                                                    totals[static_cast<std::size_t>(h * 3 + i)],
                                                1e-12));
      }
  }
  SECTION("fewer than two days rejected") {
    RoleSequence seq;
    seq.values.assign(24, kRoleHome);
    CHECK_THROWS_AS(extract_life_pattern(seq, L), DataError);
  }
}

TEST_CASE("empty trajectory yields no staypoints") {
  Trajectory t;
  t.user_id = 1;
  CHECK(detect_staypoints(t, 200.0, 1800).empty());
}
