#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "geoavatar/ingest.hpp"
#include "geoavatar/seqgen.hpp"

using namespace geoavatar;

namespace {

RoleSequence commuter_sequence(int days) {
  RoleSequence seq;
  seq.user_id = 1;
  for (int d = 0; d < days; ++d)
    for (int h = 0; h < 24; ++h) seq.values.push_back(h >= 9 && h < 18 ? kRoleWork : kRoleHome);
  return seq;
}

LifePattern random_pattern(int L, Rng& rng) {
  std::vector<double> t(static_cast<std::size_t>(kHoursPerDay * L * L)), pi(static_cast<std::size_t>(L));
  for (auto& v : t) v = rng.normal();
  for (auto& v : pi) v = rng.normal();
  return normalize_pattern(L, t, pi);
}

}  // namespace

TEST_CASE("guide: deterministic commuter contexts concentrate on the observed next role") {
  const int L = 4;
  const auto guide = fit_guide({commuter_sequence(30)}, L, 2, 0.1);
  // at 08:00 with history (HOME, HOME) the next role is WORK
  const auto p = guide.conditional({kRoleHome, kRoleHome}, 8);
  CHECK(p[static_cast<std::size_t>(kRoleWork)] > 0.9);
  // mid-afternoon at work stays at work
  const auto q = guide.conditional({kRoleWork, kRoleWork}, 13);
  CHECK(q[static_cast<std::size_t>(kRoleWork)] > 0.9);
}

TEST_CASE("guide: huge smoothing drives conditionals to uniform") {
  const int L = 5;
  const auto guide = fit_guide({commuter_sequence(10)}, L, 2, 1e9);
  const auto p = guide.conditional({kRoleHome, kRoleHome}, 8);
  for (int j = 0; j < L; ++j) CHECK_THAT(p[static_cast<std::size_t>(j)], Catch::Matchers::WithinAbs(0.2, 1e-6));
}

TEST_CASE("guide: order-2 conditionals equal brute-force count ratios") {
  const int L = 3;
  // three short sequences over a 3-role alphabet
  std::vector<RoleSequence> corpus(3);
  Rng rng(55);
  for (auto& seq : corpus) {
    for (int t = 0; t < 48; ++t) seq.values.push_back(int(rng.uniform_int(L)));
  }
  // pure maximum likelihood: zero smoothing, zero backoff weight
  const auto guide = fit_guide(corpus, L, 2, 0.0, 0.0);
  // brute-force count ratio for every seen (hour, prev2, prev1) context
  for (int hour = 0; hour < 24; ++hour)
    for (int r2 = 0; r2 < L; ++r2)
      for (int r1 = 0; r1 < L; ++r1) {
        std::vector<double> counts(static_cast<std::size_t>(L), 0.0);
        double total = 0;
        for (const auto& seq : corpus)
          for (int t = 1; t + 1 < int(seq.values.size()); ++t) {
            if (t % 24 != hour) continue;
            if (seq.values[static_cast<std::size_t>(t - 1)] != r2 || seq.values[static_cast<std::size_t>(t)] != r1) continue;
            counts[static_cast<std::size_t>(seq.values[static_cast<std::size_t>(t + 1)])] += 1;
            total += 1;
          }
        if (total == 0) continue;
        const auto p = guide.conditional({r2, r1}, hour);
        for (int j = 0; j < L; ++j)
          CHECK_THAT(p[static_cast<std::size_t>(j)],
                     Catch::Matchers::WithinAbs(counts[static_cast<std::size_t>(j)] / total, 1e-12));
      }
}

TEST_CASE("gwg blend: alpha = 1 reproduces the base chain row exactly") {
  Rng rng(7);
  const auto pattern = random_pattern(4, rng);
  const auto guide = fit_guide({commuter_sequence(5)}, 4, 2, 0.1);
  for (int hour : {0, 7, 13, 23}) {
    const auto dist = gwg_step_distribution(pattern, guide, {kRoleHome}, hour, 1.0);
    for (int j = 0; j < 4; ++j)
      CHECK_THAT(dist[static_cast<std::size_t>(j)],
                 Catch::Matchers::WithinAbs(pattern.transition(hour, kRoleHome, j), 1e-12));
  }
}

TEST_CASE("gwg blend: uniform guide cancels at any alpha") {
  const int L = 4;
  Rng rng(8);
  const auto pattern = random_pattern(L, rng);
  // a guide fitted with enormous smoothing is uniform
  const auto guide = fit_guide({commuter_sequence(3)}, L, 2, 1e12);
  for (double alpha : {0.0, 0.3, 0.5, 0.9}) {
    const auto dist = gwg_step_distribution(pattern, guide, {2, kRoleHome}, 10, alpha);
    // P ~ T^alpha * const, renormalized
    std::vector<double> expected(static_cast<std::size_t>(L));
    double z = 0;
    for (int j = 0; j < L; ++j) {
      expected[static_cast<std::size_t>(j)] = std::pow(pattern.transition(10, kRoleHome, j), alpha);
      z += expected[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < L; ++j)
      CHECK_THAT(dist[static_cast<std::size_t>(j)], Catch::Matchers::WithinAbs(expected[static_cast<std::size_t>(j)] / z, 1e-9));
  }
}

TEST_CASE("gwg blend: worked two-role example") {
  // T row [0.8, 0.2], guide [0.2, 0.8], alpha = 0.5 -> [0.5, 0.5]
  const int L = 3;
  std::vector<double> T(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0);
  std::vector<double> pi{1.0, 0.0, 0.0};
  for (int h = 0; h < kHoursPerDay; ++h)
    for (int i = 0; i < L; ++i) {
      T[static_cast<std::size_t>((h * L + i) * L + 0)] = 0.8;
      T[static_cast<std::size_t>((h * L + i) * L + 1)] = 0.2;
    }
  const auto pattern = LifePattern::from_probabilities(L, pi, T);
  // exact hand-built guide: order 0, hour-stratified marginal [0.2, 0.8, 0]
  GuideModel guide;
  guide.set_params(L, 0, 0.0, 1.0);
  GuideModel::Entry e;
  e.next = {2.0, 8.0, 0.0};
  e.total = 10.0;
  for (int h = 0; h < 24; ++h) guide.mutable_tables()[0][std::int64_t(h) * 1] = e;
  const auto p0 = guide.conditional({0}, 5);
  REQUIRE_THAT(p0[0], Catch::Matchers::WithinAbs(0.2, 1e-9));
  REQUIRE_THAT(p0[1], Catch::Matchers::WithinAbs(0.8, 1e-9));

  const auto dist = gwg_step_distribution(pattern, guide, {0}, 5, 0.5);
  CHECK_THAT(dist[0], Catch::Matchers::WithinAbs(0.5, 1e-9));
  CHECK_THAT(dist[1], Catch::Matchers::WithinAbs(0.5, 1e-9));
  CHECK_THAT(dist[2], Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("gwg blend: zero-normalizer product falls back to the base row") {
  const int L = 3;
  std::vector<double> T(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0);
  std::vector<double> pi{1.0, 0.0, 0.0};
  for (int h = 0; h < kHoursPerDay; ++h)
    for (int i = 0; i < L; ++i) T[static_cast<std::size_t>((h * L + i) * L + 0)] = 1.0;  // always to role 0
  const auto pattern = LifePattern::from_probabilities(L, pi, T);
  GuideModel guide;
  guide.set_params(L, 0, 0.0, 1.0);
  GuideModel::Entry e;
  e.next = {0.0, 5.0, 0.0};  // guide insists on role 1
  e.total = 5.0;
  for (int h = 0; h < 24; ++h) guide.mutable_tables()[0][std::int64_t(h) * 1] = e;
  bool fell_back = false;
  const auto dist = gwg_step_distribution(pattern, guide, {0}, 3, 0.5, &fell_back);
  CHECK(fell_back);
  CHECK_THAT(dist[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("gwg blend: fuzzed inputs always give a proper distribution") {
  Rng rng(99);
  for (int it = 0; it < 300; ++it) {
    const int L = 3 + int(rng.uniform_int(5));
    const auto pattern = random_pattern(L, rng);
    RoleSequence seq;
    for (int t = 0; t < 24 * (2 + int(rng.uniform_int(4))); ++t)
      seq.values.push_back(int(rng.uniform_int(L)));
    const auto guide = fit_guide({seq}, L, 1 + int(rng.uniform_int(2)), rng.uniform() * 0.5);
    std::vector<int> history{int(rng.uniform_int(L)), int(rng.uniform_int(L))};
    const auto dist =
        gwg_step_distribution(pattern, guide, history, int(rng.uniform_int(24)), rng.uniform());
    double sum = 0;
    for (double v : dist) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("gwg sampling is reproducible") {
  Rng rng(4);
  const auto pattern = random_pattern(5, rng);
  const auto guide = fit_guide({commuter_sequence(10)}, 5, 2, 0.1);
  GwgConfig cfg{0.5, 3, 0};
  Rng r1(derive_seed(11, "sample"));
  Rng r2(derive_seed(11, "sample"));
  const auto a = gwg_sample(pattern, guide, cfg, r1, 1, 0);
  const auto b = gwg_sample(pattern, guide, cfg, r2, 1, 0);
  REQUIRE(a.values.size() == b.values.size());
  CHECK(a.values == b.values);
  CHECK(a.values.size() == 72);
}

TEST_CASE("alpha = 1 sampling converges to the pattern occupancy") {
  // extract a pattern from a stochastic commuter corpus, then resample with
  // the guide switched off; hourly role frequencies must match the occupancy
  const int L = 3;
  Rng data_rng(1234);
  RoleSequence train;
  for (int d = 0; d < 60; ++d)
    for (int h = 0; h < 24; ++h) {
      int role = kRoleHome;
      if (h >= 9 && h < 18) role = data_rng.uniform() < 0.8 ? kRoleWork : 2;
      train.values.push_back(role);
    }
  const auto pattern = extract_life_pattern(train, L, 0.01);
  const auto guide = fit_guide({train}, L, 2, 0.1);

  const int n_days = 100000;
  std::vector<std::vector<double>> freq(24, std::vector<double>(L, 0.0));
  Rng rng(777);
  GwgConfig cfg{1.0, 1, 0};
  for (int d = 0; d < n_days; ++d) {
    const auto seq = gwg_sample(pattern, guide, cfg, rng);
    for (int h = 0; h < 24; ++h) freq[static_cast<std::size_t>(h)][static_cast<std::size_t>(seq.values[static_cast<std::size_t>(h)])] += 1.0;
  }
  double max_err = 0.0;
  for (int h = 0; h < 24; ++h)
    for (int r = 0; r < L; ++r) {
      const double f = freq[static_cast<std::size_t>(h)][static_cast<std::size_t>(r)] / n_days;
      max_err = std::max(max_err, std::abs(f - pattern.occupancy(h, r)));
    }
  CHECK(max_err < 0.01);
}
