#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "geoavatar/core.hpp"

using namespace geoavatar;

namespace {

// Independent geodesic-extent oracle used to construct bboxes with known
// metric extents (plain haversine, written out separately from build_grid).
double oracle_haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double rad = std::acos(-1.0) / 180.0;
  const double p1 = lat1 * rad, p2 = lat2 * rad;
  const double dp = (lat2 - lat1) * rad, dl = (lon2 - lon1) * rad;
  const double a =
      std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * 6371.0 * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

// Finds the latitude delta whose geodesic extent is `km` along a meridian.
double lat_delta_for_km(double km) { return km / 111.19492664455873; }

// Longitude delta at a given latitude whose extent is `km`.
double lon_delta_for_km(double lat, double km) {
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (oracle_haversine_km(lat, 0.0, lat, mid) < km)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

LifePattern random_pattern(int L, Rng& rng) {
  std::vector<double> t_logits(static_cast<std::size_t>(kHoursPerDay * L * L));
  std::vector<double> pi_logits(static_cast<std::size_t>(L));
  for (auto& v : t_logits) v = rng.normal() * 2.0;
  for (auto& v : pi_logits) v = rng.normal() * 2.0;
  return normalize_pattern(L, t_logits, pi_logits);
}

}  // namespace

TEST_CASE("haversine worked values") {
  CHECK(haversine_km(35.0, 139.0, 35.0, 139.0) == 0.0);
  // one degree of longitude on the equator and one degree of latitude both
  // span R * pi / 180
  const double expected = 6371.0 * std::acos(-1.0) / 180.0;
  CHECK_THAT(haversine_km(0, 0, 0, 1), Catch::Matchers::WithinAbs(expected, 1e-9));
  CHECK_THAT(haversine_km(0, 0, 1, 0), Catch::Matchers::WithinAbs(expected, 1e-9));
  CHECK_THAT(haversine_km(0, 0, 0, 1), Catch::Matchers::WithinAbs(111.195, 5e-4));
}

TEST_CASE("haversine symmetry and triangle inequality on random triples") {
  Rng rng(123);
  for (int it = 0; it < 500; ++it) {
    const double lat1 = rng.uniform(-80, 80), lon1 = rng.uniform(-179, 179);
    const double lat2 = lat1 + rng.uniform(-2, 2), lon2 = lon1 + rng.uniform(-2, 2);
    const double lat3 = lat1 + rng.uniform(-2, 2), lon3 = lon1 + rng.uniform(-2, 2);
    const double ab = haversine_km(lat1, lon1, lat2, lon2);
    const double ba = haversine_km(lat2, lon2, lat1, lon1);
    const double bc = haversine_km(lat2, lon2, lat3, lon3);
    const double ac = haversine_km(lat1, lon1, lat3, lon3);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ac <= ab + bc + 1e-6);
  }
}

TEST_CASE("build_grid sizes from geodesic extent") {
  const double lat0 = 35.0, lon0 = 139.0;
  SECTION("1 km x 1 km -> 1x1") {
    BBox b{lat0, lat0 + lat_delta_for_km(1.0), lon0, lon0 + lon_delta_for_km(lat0, 1.0)};
    const Grid g = build_grid(b, 1000.0);
    CHECK(g.n_rows == 1);
    CHECK(g.n_cols == 1);
  }
  SECTION("2 km x 2 km -> 2x2") {
    BBox b{lat0, lat0 + lat_delta_for_km(2.0), lon0, lon0 + lon_delta_for_km(lat0 + 0.009, 2.0)};
    const Grid g = build_grid(b, 1000.0);
    CHECK(g.n_rows == 2);
    CHECK(g.n_cols == 2);
  }
  SECTION("2.5 km x 1 km -> 3x1 (ceiling division)") {
    BBox b{lat0, lat0 + lat_delta_for_km(2.5), lon0, lon0 + lon_delta_for_km(lat0 + 0.011, 1.0)};
    const Grid g = build_grid(b, 1000.0);
    CHECK(g.n_rows == 3);
    CHECK(g.n_cols == 1);
  }
  SECTION("degenerate bbox rejected") {
    CHECK_THROWS_AS(build_grid(BBox{35, 35, 139, 140}, 1000.0), ConfigError);
    CHECK_THROWS_AS(build_grid(BBox{35, 36, 139, 140}, 0.0), ConfigError);
  }
}

TEST_CASE("locate: corners, tie-breaks, out of bounds") {
  BBox b{35.0, 35.0 + lat_delta_for_km(4.0), 139.0, 139.0 + lon_delta_for_km(35.0, 4.0)};
  const Grid g = build_grid(b, 1000.0);
  REQUIRE(g.n_rows == 4);
  REQUIRE(g.n_cols == 4);

  CHECK(g.locate(b.lat_min, b.lon_min) == 0);
  // interior of the last cell
  const double lat_in_last = b.lat_min + 3.5 * g.lat_step();
  const double lon_in_last = b.lon_min + 3.5 * g.lon_step();
  CHECK(g.locate(lat_in_last, lon_in_last) == g.n_rows * g.n_cols - 1);
  // exact interior edge goes to the lower-indexed neighbor
  const double edge_lat = b.lat_min + 2.0 * g.lat_step();
  CHECK(g.locate(edge_lat, b.lon_min) == 2 * g.n_cols - g.n_cols);  // row 1, col 0
  CHECK(g.locate(b.lat_min, b.lon_min + g.lon_step()) == 0);
  // top boundary still lands in the last row
  CHECK(g.locate(b.lat_max, b.lon_max) == g.n_rows * g.n_cols - 1);
  CHECK_FALSE(g.locate(b.lat_min - 0.1, b.lon_min).has_value());
  CHECK_FALSE(g.locate(b.lat_min, b.lon_max + 0.1).has_value());
}

TEST_CASE("normalize_pattern examples") {
  const int L = 4;
  SECTION("all-zero logits give uniform rows") {
    std::vector<double> t(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0), pi(static_cast<std::size_t>(L), 0.0);
    const auto p = normalize_pattern(L, t, pi);
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j)
          CHECK_THAT(p.transition(h, i, j), Catch::Matchers::WithinAbs(1.0 / L, 1e-12));
    for (int i = 0; i < L; ++i) CHECK_THAT(p.initial(i), Catch::Matchers::WithinAbs(0.25, 1e-12));
  }
  SECTION("saturated logit becomes an indicator row") {
    std::vector<double> t(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0), pi(static_cast<std::size_t>(L), 0.0);
    t[static_cast<std::size_t>((5 * L + 2) * L + 3)] = 1e6;
    const auto p = normalize_pattern(L, t, pi);
    CHECK_THAT(p.transition(5, 2, 3), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(p.transition(5, 2, 0), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("uniform pi with doubly stochastic T keeps occupancy uniform") {
    std::vector<double> t(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0), pi(static_cast<std::size_t>(L), 0.0);
    const auto p = normalize_pattern(L, t, pi);  // uniform rows are doubly stochastic
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int i = 0; i < L; ++i)
        CHECK_THAT(p.occupancy(h, i), Catch::Matchers::WithinAbs(1.0 / L, 1e-12));
  }
  SECTION("non-finite logits rejected") {
    std::vector<double> t(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0), pi(static_cast<std::size_t>(L), 0.0);
    t[7] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(normalize_pattern(L, t, pi), DataError);
  }
}

TEST_CASE("row stochasticity after normalize_pattern for random logit tensors") {
  Rng rng(77);
  for (int it = 0; it < 1000; ++it) {
    const int L = 3 + int(rng.uniform_int(6));
    std::vector<double> t(static_cast<std::size_t>(kHoursPerDay * L * L)), pi(static_cast<std::size_t>(L));
    for (auto& v : t) v = rng.normal() * 5.0;
    for (auto& v : pi) v = rng.normal() * 5.0;
    const auto p = normalize_pattern(L, t, pi);
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int i = 0; i < L; ++i) {
        double s = 0.0;
        for (int j = 0; j < L; ++j) s += p.transition(h, i, j);
        REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-9));
      }
  }
}

TEST_CASE("occupancy pushforward is exact") {
  Rng rng(5);
  const auto p = random_pattern(5, rng);
  const int L = 5;
  for (int h = 0; h + 1 < kHoursPerDay; ++h)
    for (int j = 0; j < L; ++j) {
      double acc = 0.0;
      for (int i = 0; i < L; ++i) acc += p.occupancy(h, i) * p.transition(h, i, j);
      CHECK(p.occupancy(h + 1, j) == acc);  // same arithmetic path, bitwise equal
    }
  for (int i = 0; i < L; ++i) CHECK(p.occupancy(0, i) == p.initial(i));
}

TEST_CASE("vectorize dimensions and round trip") {
  CHECK(pattern_dim(12) == 3468);
  CHECK(pattern_dim(3) == 219);
  Rng rng(9);
  for (int it = 0; it < 50; ++it) {
    const int L = 3 + int(rng.uniform_int(10));
    const auto p = random_pattern(L, rng);
    const auto v = vectorize(p);
    REQUIRE(int(v.size()) == pattern_dim(L));
    const auto q = devectorize(L, v);
    // bijective on valid patterns up to renormalization rounding
    for (std::size_t k = 0; k < v.size(); ++k)
      REQUIRE_THAT(vectorize(q)[k], Catch::Matchers::WithinAbs(v[k], 1e-12));
  }
  SECTION("wrong dimension rejected") {
    CHECK_THROWS_AS(devectorize(3, std::vector<double>(10, 0.1)), DataError);
  }
  SECTION("layout: pi first, then (h, i, j) row-major") {
    Rng r2(11);
    const auto p = random_pattern(3, r2);
    const auto v = vectorize(p);
    CHECK(v[0] == p.initial(0));
    CHECK(v[3] == p.transition(0, 0, 0));
    CHECK(v[3 + 1] == p.transition(0, 0, 1));
    CHECK(v[3 + 3] == p.transition(0, 1, 0));
    CHECK(v[3 + 9] == p.transition(1, 0, 0));
  }
}

TEST_CASE("role alphabet basics") {
  CHECK_THROWS_AS(RoleAlphabet(2), ConfigError);
  CHECK(RoleAlphabet::role_name(0) == "HOME");
  CHECK(RoleAlphabet::role_name(1) == "WORK");
  CHECK(RoleAlphabet::role_name(2) == "OTHER_1");
}
