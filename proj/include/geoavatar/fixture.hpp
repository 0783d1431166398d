// Bundled synthetic-corpus generator: a seeded archetype population on a
// 20 x 20 grid. Acceptance and smoke runs use these corpora instead of any
// proprietary GPS data.
//
// The "archetypes" profile draws users from six hand-built hourly behavior
// patterns (two worker variants, student, homebody, night shift, errand
// runner) with per-user noise, plus a city layout with residential zones, a
// downtown work cluster, a campus, a night-work zone and commercial strips.
// The "heavy_tail" profile gives every user a long Zipf-weighted list of
// hour-gated places, for the top-N reconstruction experiment.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "geoavatar/core.hpp"
#include "geoavatar/keyloc.hpp"

namespace geoavatar {

struct FixtureConfig {
  std::string profile = "archetypes";  // or "heavy_tail"
  int n_users = 2000;
  int days = 7;
  std::int64_t start_day = 19723;  // Monday 2024-01-01 UTC
  std::uint64_t seed = 42;
  double jitter_m = 50.0;
  int records_per_hour = 3;
  int heavy_tail_places = 18;
  double heavy_tail_zipf = 1.0;
};

struct FixtureOutput {
  Grid grid;
  std::vector<Trajectory> trajectories;
  std::vector<int> segments;                   // per user (archetypes profile only)
  std::map<int, std::vector<double>> census;   // zone -> segment fractions
  int n_segments = 4;
  int zone_block = 10;                         // cells per zone-block side
};

namespace fixture_detail {

// ~19.6 km x 19.6 km bbox around central Tokyo; 1 km cells -> 20 x 20 grid.
inline Grid default_grid() {
  BBox box;
  box.lat_min = 35.65 - 0.088135;
  box.lat_max = 35.65 + 0.088135;
  box.lon_min = 139.70 - 0.108452;
  box.lon_max = 139.70 + 0.108452;
  return build_grid(box, 1000.0);
}

// Incremental transition-tensor builder: rows start as pure self-loops and
// edits move mass from staying onto an edge.
class PatternBuilder {
 public:
  explicit PatternBuilder(int L) : L_(L), T_(static_cast<std::size_t>(kHoursPerDay * L * L), 0.0),
                                   pi_(static_cast<std::size_t>(L), 0.0) {
    pi_[kRoleHome] = 1.0;
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int i = 0; i < L_; ++i) at(h, i, i) = 1.0;
  }

  void start(int role, double p) {
    pi_[static_cast<std::size_t>(kRoleHome)] -= p;
    pi_[static_cast<std::size_t>(role)] += p;
  }

  // Moves probability mass p from staying at `from` onto from -> to at hour h.
  PatternBuilder& go(int h, int from, int to, double p) {
    at(h, from, from) -= p;
    at(h, from, to) += p;
    return *this;
  }

  // Everyone not at HOME heads home with probability p at hour h.
  PatternBuilder& go_home_all(int h, double p) {
    for (int i = 1; i < L_; ++i)
      if (at(h, i, i) >= p) go(h, i, kRoleHome, p);
    return *this;
  }

  LifePattern build() const {
    for (double v : T_) require(v >= -1e-12, "fixture pattern: negative transition mass");
    for (double v : pi_) require(v >= -1e-12, "fixture pattern: negative initial mass");
    auto T = T_;
    auto pi = pi_;
    for (auto& v : T) v = std::max(v, 0.0);
    for (auto& v : pi) v = std::max(v, 0.0);
    return LifePattern::from_probabilities(L_, std::move(pi), std::move(T));
  }

 private:
  double& at(int h, int i, int j) { return T_[static_cast<std::size_t>((h * L_ + i) * L_ + j)]; }
  int L_;
  std::vector<double> T_;
  std::vector<double> pi_;
};

// Multiplicative noise on the nonzero entries of every row; keeps structural
// zeros and renormalizes. Gives each user an individual variant of the
// archetype pattern.
inline LifePattern personalize(const LifePattern& base, double sigma, Rng& rng) {
  const int L = base.alphabet_size();
  std::vector<double> T = base.transitions();
  std::vector<double> pi = base.pi();
  auto jitter_row = [&](double* row) {
    double sum = 0.0;
    for (int j = 0; j < L; ++j) {
      if (row[j] > 1e-9) row[j] *= std::exp(sigma * rng.normal());
      sum += row[j];
    }
    for (int j = 0; j < L; ++j) row[j] /= sum;
  };
  for (int r = 0; r < kHoursPerDay * L; ++r) jitter_row(&T[static_cast<std::size_t>(r * L)]);
  jitter_row(pi.data());
  return LifePattern::from_probabilities(L, std::move(pi), std::move(T));
}

enum class PlaceKind { NearHome, NearWork, Commercial };

struct ArchetypeRole {
  int role;
  PlaceKind kind;
};

enum class WorkZone { Downtown, Campus, NightZone, None };

struct Archetype {
  std::string name;
  int segment = 0;
  WorkZone work = WorkZone::None;
  LifePattern pattern;
  std::vector<ArchetypeRole> others;
  double weight = 1.0;  // population share
};

struct City {
  Grid grid;
  std::vector<double> commercial;                    // per-cell amenity weight
  std::vector<std::pair<CellId, double>> downtown;   // (cell, weight)
  std::vector<std::pair<CellId, double>> campus;
  std::vector<std::pair<CellId, double>> night_zone;
  // residential blocks per segment: (cell, weight)
  std::vector<std::vector<std::pair<CellId, double>>> homes;  // [segment]
};

inline CellId cell_at(const Grid& g, int row, int col) { return row * g.n_cols + col; }

inline City build_city(const Grid& grid) {
  City city;
  city.grid = grid;
  city.commercial.assign(static_cast<std::size_t>(grid.cell_count()), 0.0);

  auto block = [&](int r0, int r1, int c0, int c1, double core_weight) {
    std::vector<std::pair<CellId, double>> cells;
    const double rc = 0.5 * (r0 + r1), cc = 0.5 * (c0 + c1);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double d = std::hypot(r - rc, c - cc);
        cells.push_back({cell_at(grid, r, c), core_weight * std::exp(-d / 1.5)});
      }
    return cells;
  };

  city.downtown = block(8, 11, 8, 11, 3.0);
  city.campus = block(14, 15, 4, 5, 2.0);
  city.night_zone = block(2, 4, 14, 16, 2.0);

  // commercial strips: a ring around downtown plus four local centers
  auto add_commercial = [&](int r, int c, double w) {
    city.commercial[static_cast<std::size_t>(cell_at(grid, r, c))] += w;
  };
  for (int c = 7; c <= 12; ++c) {
    add_commercial(7, c, 2.0);
    add_commercial(12, c, 2.0);
  }
  for (int r = 8; r <= 11; ++r) {
    add_commercial(r, 7, 2.0);
    add_commercial(r, 12, 2.0);
  }
  const int centers[4][2] = {{4, 4}, {4, 15}, {15, 4}, {15, 15}};
  for (const auto& rc : centers) {
    add_commercial(rc[0], rc[1], 3.0);
    add_commercial(rc[0] + 1, rc[1], 1.5);
    add_commercial(rc[0], rc[1] + 1, 1.5);
  }

  // residential blocks per segment (weights concentrate toward block centers)
  auto merge = [](std::vector<std::pair<CellId, double>> a,
                  const std::vector<std::pair<CellId, double>>& b, double scale) {
    for (auto [cell, w] : b) a.push_back({cell, w * scale});
    return a;
  };
  const auto res_sw = block(2, 7, 2, 7, 1.0);       // zone Z0 (south-west)
  const auto res_se = block(2, 7, 12, 17, 1.0);     // zone Z1 (south-east)
  const auto res_nw = block(12, 17, 1, 6, 1.0);     // zone Z2 (north-west)
  const auto res_ne = block(12, 17, 13, 18, 1.0);   // zone Z3 (north-east)
  city.homes.resize(4);
  city.homes[0] = merge(merge(res_nw, res_ne, 0.8), res_sw, 0.45);       // workers
  city.homes[1] = merge(block(11, 16, 2, 7, 1.0), res_sw, 0.45);         // students near campus
  city.homes[2] = merge(merge(merge(res_sw, res_se, 0.9), res_nw, 0.8), res_ne, 0.7);  // homebody
  city.homes[3] = merge(merge(res_se, res_sw, 0.6), res_ne, 0.45);       // night shift
  return city;
}

inline std::vector<Archetype> build_archetypes(int L) {
  std::vector<Archetype> out;
  auto O = [](int k) { return 1 + k; };  // OTHER_k role id (O(1) = 2)

  {  // office commuter
    PatternBuilder b(L);
    b.go(6, kRoleHome, O(1), 0.20);
    b.go(7, kRoleHome, kRoleWork, 0.50).go(7, kRoleHome, O(1), 0.15).go(7, O(1), kRoleWork, 0.80);
    b.go(8, kRoleHome, kRoleWork, 0.90).go(8, O(1), kRoleWork, 0.95);
    b.go(9, kRoleHome, kRoleWork, 0.60);
    b.go(12, kRoleWork, O(2), 0.50);
    b.go(13, O(2), kRoleWork, 0.95);
    b.go(17, kRoleWork, O(3), 0.30).go(17, kRoleWork, O(4), 0.20).go(17, kRoleWork, kRoleHome, 0.30);
    b.go(18, kRoleWork, kRoleHome, 0.70).go(18, O(3), kRoleHome, 0.40).go(18, O(4), kRoleHome, 0.60);
    b.go(19, kRoleHome, O(5), 0.10);
    b.go_home_all(19, 0.80);
    b.go_home_all(20, 0.85);
    b.go(21, O(5), kRoleHome, 0.60);
    b.go_home_all(21, 0.90);
    b.go_home_all(22, 0.95);
    b.go_home_all(23, 0.98);
    Archetype a;
    a.name = "office_commuter";
    a.segment = 0;
    a.work = WorkZone::Downtown;
    a.pattern = b.build();
    a.others = {{O(1), PlaceKind::NearWork}, {O(2), PlaceKind::NearWork},
                {O(3), PlaceKind::NearWork}, {O(4), PlaceKind::Commercial},
                {O(5), PlaceKind::Commercial}};
    a.weight = 0.26;
    out.push_back(std::move(a));
  }
  {  // early-shift worker
    PatternBuilder b(L);
    b.go(5, kRoleHome, kRoleWork, 0.40);
    b.go(6, kRoleHome, kRoleWork, 0.60);
    b.go(7, kRoleHome, kRoleWork, 0.85);
    b.go(11, kRoleWork, O(2), 0.30);
    b.go(12, O(2), kRoleWork, 0.90);
    b.go(14, kRoleWork, O(6), 0.35).go(14, kRoleWork, kRoleHome, 0.30);
    b.go(15, kRoleWork, kRoleHome, 0.60).go(15, O(6), kRoleHome, 0.60).go(15, kRoleWork, O(3), 0.20);
    b.go(16, kRoleWork, kRoleHome, 0.70).go(16, O(3), kRoleHome, 0.50);
    b.go(17, kRoleHome, O(7), 0.25);
    b.go(18, O(7), kRoleHome, 0.70);
    b.go_home_all(18, 0.80);
    b.go_home_all(19, 0.90);
    b.go_home_all(20, 0.90);
    b.go_home_all(21, 0.95);
    b.go_home_all(22, 0.98);
    b.go_home_all(23, 0.98);
    Archetype a;
    a.name = "early_worker";
    a.segment = 0;
    a.work = WorkZone::Downtown;
    a.pattern = b.build();
    a.others = {{O(2), PlaceKind::NearWork}, {O(3), PlaceKind::NearWork},
                {O(6), PlaceKind::NearHome}, {O(7), PlaceKind::NearHome}};
    a.weight = 0.14;
    out.push_back(std::move(a));
  }
  {  // student
    PatternBuilder b(L);
    b.go(7, kRoleHome, O(1), 0.15);
    b.go(8, kRoleHome, kRoleWork, 0.75).go(8, O(1), kRoleWork, 0.90);
    b.go(9, kRoleHome, kRoleWork, 0.85);
    b.go(12, kRoleWork, O(2), 0.40);
    b.go(13, O(2), kRoleWork, 0.90);
    b.go(15, kRoleWork, O(4), 0.45).go(15, kRoleWork, kRoleHome, 0.25);
    b.go(16, kRoleWork, kRoleHome, 0.40).go(16, kRoleWork, O(4), 0.20);
    b.go(17, O(4), kRoleHome, 0.35).go(17, kRoleWork, kRoleHome, 0.70);
    b.go(18, O(4), kRoleHome, 0.50).go(18, kRoleHome, O(5), 0.20);
    b.go(19, O(4), kRoleHome, 0.80).go(19, O(5), kRoleHome, 0.40);
    b.go_home_all(20, 0.85);
    b.go_home_all(21, 0.92);
    b.go_home_all(22, 0.97);
    b.go_home_all(23, 0.98);
    Archetype a;
    a.name = "student";
    a.segment = 1;
    a.work = WorkZone::Campus;
    a.pattern = b.build();
    a.others = {{O(1), PlaceKind::NearWork}, {O(2), PlaceKind::NearWork},
                {O(4), PlaceKind::NearWork}, {O(5), PlaceKind::Commercial}};
    a.weight = 0.16;
    out.push_back(std::move(a));
  }
  {  // homebody
    PatternBuilder b(L);
    b.go(8, kRoleHome, O(1), 0.30);
    b.go(9, O(1), kRoleHome, 0.90);
    b.go(10, kRoleHome, O(2), 0.50);
    b.go(11, O(2), kRoleHome, 0.75).go(11, O(2), O(3), 0.15);
    b.go(12, O(3), kRoleHome, 0.80);
    b.go(14, kRoleHome, O(4), 0.35);
    b.go(15, O(4), kRoleHome, 0.50);
    b.go(16, kRoleHome, O(1), 0.25).go(16, O(4), kRoleHome, 0.80);
    b.go(17, O(1), kRoleHome, 0.90);
    b.go(18, kRoleHome, O(5), 0.15);
    b.go(19, O(5), kRoleHome, 0.80);
    b.go_home_all(20, 0.90);
    b.go_home_all(21, 0.95);
    b.go_home_all(22, 0.98);
    b.go_home_all(23, 0.98);
    Archetype a;
    a.name = "homebody";
    a.segment = 2;
    a.work = WorkZone::None;
    a.pattern = b.build();
    a.others = {{O(1), PlaceKind::NearHome}, {O(2), PlaceKind::NearHome},
                {O(3), PlaceKind::NearHome}, {O(4), PlaceKind::NearHome},
                {O(5), PlaceKind::Commercial}};
    a.weight = 0.18;
    out.push_back(std::move(a));
  }
  {  // night shift
    PatternBuilder b(L);
    b.start(kRoleWork, 0.8);
    b.go(5, kRoleWork, kRoleHome, 0.50);
    b.go(6, kRoleWork, kRoleHome, 0.90);
    b.go(7, kRoleWork, kRoleHome, 0.95);
    b.go(15, kRoleHome, O(6), 0.30);
    b.go(16, O(6), kRoleHome, 0.60).go(16, O(6), O(8), 0.20);
    b.go(17, O(8), kRoleHome, 0.60).go(17, kRoleHome, O(8), 0.15);
    b.go(18, O(8), kRoleHome, 0.70).go(18, kRoleHome, O(9), 0.20);
    b.go(19, O(9), kRoleHome, 0.60);
    b.go(20, O(9), kRoleHome, 0.90).go(20, O(8), kRoleHome, 0.90).go(20, O(6), kRoleHome, 0.90);
    b.go(21, kRoleHome, kRoleWork, 0.60);
    b.go(22, kRoleHome, kRoleWork, 0.85);
    b.go(23, kRoleHome, kRoleWork, 0.40);
    Archetype a;
    a.name = "night_shift";
    a.segment = 3;
    a.work = WorkZone::NightZone;
    a.pattern = b.build();
    a.others = {{O(6), PlaceKind::NearHome}, {O(8), PlaceKind::Commercial},
                {O(9), PlaceKind::Commercial}};
    a.weight = 0.10;
    out.push_back(std::move(a));
  }
  {  // errand runner (part-time + many structured others)
    PatternBuilder b(L);
    b.go(9, kRoleHome, kRoleWork, 0.55);
    b.go(12, kRoleWork, O(1), 0.50).go(12, kRoleWork, kRoleHome, 0.20);
    b.go(13, O(1), O(2), 0.40).go(13, O(1), kRoleHome, 0.40);
    b.go(14, O(2), O(3), 0.40).go(14, O(2), kRoleHome, 0.30).go(14, kRoleHome, O(3), 0.25);
    b.go(15, O(3), O(4), 0.30).go(15, O(3), kRoleHome, 0.50);
    b.go(16, O(4), kRoleHome, 0.60).go(16, kRoleHome, O(5), 0.20);
    b.go(17, O(5), kRoleHome, 0.60);
    b.go(18, kRoleHome, O(7), 0.20);
    b.go(19, O(7), kRoleHome, 0.70);
    b.go_home_all(20, 0.90);
    b.go_home_all(21, 0.95);
    b.go_home_all(22, 0.98);
    b.go_home_all(23, 0.98);
    Archetype a;
    a.name = "errand_runner";
    a.segment = 2;
    a.work = WorkZone::Downtown;
    a.pattern = b.build();
    a.others = {{O(1), PlaceKind::Commercial}, {O(2), PlaceKind::Commercial},
                {O(3), PlaceKind::NearHome},   {O(4), PlaceKind::NearHome},
                {O(5), PlaceKind::Commercial}, {O(7), PlaceKind::Commercial}};
    a.weight = 0.16;
    out.push_back(std::move(a));
  }
  return out;
}

inline CellId sample_weighted_cell(const std::vector<std::pair<CellId, double>>& cells,
                                   Rng& rng) {
  std::vector<double> weights;
  weights.reserve(cells.size());
  for (const auto& [cell, weight] : cells) weights.push_back(weight);
  return cells[rng.categorical(weights)].first;
}

// work cell choice with home-coupled structure: workers from the west half of
// the city favor the west half of downtown and vice versa.
inline CellId sample_work_cell(const City& city, WorkZone zone, CellId home, Rng& rng) {
  const auto& grid = city.grid;
  const std::vector<std::pair<CellId, double>>* pool = nullptr;
  switch (zone) {
    case WorkZone::Downtown: pool = &city.downtown; break;
    case WorkZone::Campus: pool = &city.campus; break;
    case WorkZone::NightZone: pool = &city.night_zone; break;
    case WorkZone::None: return home;
  }
  const bool west_home = grid.col_of(home) < grid.n_cols / 2;
  std::vector<double> w;
  w.reserve(pool->size());
  double min_c = 1e9, max_c = -1e9;
  for (const auto& [cell, weight] : *pool) {
    min_c = std::min(min_c, double(grid.col_of(cell)));
    max_c = std::max(max_c, double(grid.col_of(cell)));
  }
  const double mid = 0.5 * (min_c + max_c);
  for (const auto& [cell, weight] : *pool) {
    const bool west_cell = grid.col_of(cell) < mid;
    w.push_back(weight * ((west_home == west_cell) ? 3.0 : 1.0));
  }
  return (*pool)[rng.categorical(w)].first;
}

inline CellId sample_other_cell(const City& city, PlaceKind kind, CellId home, CellId work,
                                const std::set<CellId>& used, Rng& rng) {
  const auto& grid = city.grid;
  const CellId anchor = (kind == PlaceKind::NearWork && work >= 0) ? work : home;
  const double decay = kind == PlaceKind::Commercial ? 4.0 : 1.5;
  std::vector<double> w(static_cast<std::size_t>(grid.cell_count()), 0.0);
  double usable = 0.0;
  for (int c = 0; c < grid.cell_count(); ++c) {
    double base = city.commercial[static_cast<std::size_t>(c)];
    if (kind != PlaceKind::Commercial) base += 0.3;  // local amenities exist everywhere
    const double d = grid.cell_distance_km(anchor, c);
    w[static_cast<std::size_t>(c)] = base * std::exp(-d / decay);
    if (!used.count(c)) usable += w[static_cast<std::size_t>(c)];
  }
  if (usable > 0)
    for (CellId c : used) w[static_cast<std::size_t>(c)] = 0.0;
  return CellId(rng.categorical(w));
}

}  // namespace fixture_detail

inline void fixture_archetypes(const FixtureConfig& cfg, FixtureOutput& out);
inline void fixture_heavy_tail(const FixtureConfig& cfg, FixtureOutput& out);

// Deterministic synthetic ground-truth corpus.
inline FixtureOutput make_fixture(const FixtureConfig& cfg) {
  require_config(cfg.n_users >= 1 && cfg.days >= 2, "fixture: need n_users >= 1 and days >= 2");
  require_config(cfg.records_per_hour >= 1 && cfg.records_per_hour <= 6,
                 "fixture: records_per_hour must be in [1, 6]");
  FixtureOutput out;
  out.grid = fixture_detail::default_grid();
  require(out.grid.n_rows == 20 && out.grid.n_cols == 20, "fixture: expected a 20x20 grid");
  if (cfg.profile == "archetypes")
    fixture_archetypes(cfg, out);
  else if (cfg.profile == "heavy_tail")
    fixture_heavy_tail(cfg, out);
  else
    throw ConfigError("fixture: unknown profile '" + cfg.profile + "'");
  return out;
}

// --- archetypes profile ---

inline void fixture_archetypes(const FixtureConfig& cfg, FixtureOutput& out) {
  using namespace fixture_detail;
  const int L = kDefaultAlphabetSize;
  const City city = build_city(out.grid);
  const auto archetypes = build_archetypes(L);
  std::vector<double> arch_weights;
  for (const auto& a : archetypes) arch_weights.push_back(a.weight);

  out.n_segments = 4;
  out.zone_block = 10;
  std::map<int, std::vector<double>> zone_counts;

  for (int uid = 0; uid < cfg.n_users; ++uid) {
    Rng rng(derive_seed(cfg.seed, "fixture-user", std::uint64_t(uid)));
    const auto& arch = archetypes[rng.categorical(arch_weights)];
    out.segments.push_back(arch.segment);

    const LifePattern pattern = personalize(arch.pattern, 0.25, rng);

    // key locations
    std::set<CellId> used;
    const CellId home = sample_weighted_cell(city.homes[static_cast<std::size_t>(arch.segment)], rng);
    used.insert(home);
    CellId work = -1;
    if (arch.work != WorkZone::None) {
      work = sample_work_cell(city, arch.work, home, rng);
      used.insert(work);
    }
    std::map<int, CellId> table;
    table[kRoleHome] = home;
    if (work >= 0) table[kRoleWork] = work;
    for (const auto& role : arch.others) {
      const CellId cell = sample_other_cell(city, role.kind, home, work, used, rng);
      table[role.role] = cell;
      used.insert(cell);
    }

    // census bookkeeping (zone of the home cell)
    const int zone = (out.grid.row_of(home) / out.zone_block) * 2 +
                     (out.grid.col_of(home) / out.zone_block);
    auto& zc = zone_counts[zone];
    if (zc.empty()) zc.assign(static_cast<std::size_t>(out.n_segments), 0.0);
    zc[static_cast<std::size_t>(arch.segment)] += 1.0;

    // role sequence: plain Markov walk on the personalized pattern
    std::vector<int> roles;
    roles.reserve(static_cast<std::size_t>(cfg.days * kHoursPerDay));
    int cur = int(rng.categorical(pattern.pi()));
    roles.push_back(cur);
    for (int t = 1; t < cfg.days * kHoursPerDay; ++t) {
      const int h = (t - 1) % kHoursPerDay;
      std::vector<double> row(pattern.row(h, cur), pattern.row(h, cur) + L);
      cur = int(rng.categorical(row));
      roles.push_back(cur);
    }

    // geocode with several records per hour
    Trajectory traj;
    traj.user_id = uid + 1;
    traj.records.reserve(roles.size() * static_cast<std::size_t>(cfg.records_per_hour));
    for (std::size_t t = 0; t < roles.size(); ++t) {
      auto it = table.find(roles[t]);
      const CellId cell = it != table.end() ? it->second : home;
      for (int k = 0; k < cfg.records_per_hour; ++k) {
        TrajectoryRecord rec;
        rec.ts = (cfg.start_day * kHoursPerDay + std::int64_t(t)) * kSecondsPerHour +
                 std::int64_t(k) * (kSecondsPerHour / cfg.records_per_hour);
        double lat = out.grid.center_lat(cell);
        double lon = out.grid.center_lon(cell);
        if (cfg.jitter_m > 0) {
          const double r = cfg.jitter_m * std::sqrt(rng.uniform());
          const double theta = rng.uniform() * 6.283185307179586;
          lat += (r * std::sin(theta)) / 111195.0;
          lon += (r * std::cos(theta)) /
                 (111195.0 * std::cos(lat * 0.017453292519943295));
        }
        rec.lat = std::clamp(lat, out.grid.bbox.lat_min, out.grid.bbox.lat_max);
        rec.lon = std::clamp(lon, out.grid.bbox.lon_min, out.grid.bbox.lon_max);
        traj.records.push_back(rec);
      }
    }
    out.trajectories.push_back(std::move(traj));
  }

  for (auto& [zone, counts] : zone_counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    for (double& c : counts) c /= total;
    out.census[zone] = counts;
  }
}

// --- heavy-tail profile ---

inline void fixture_heavy_tail(const FixtureConfig& cfg, FixtureOutput& out) {
  using namespace fixture_detail;
  const City city = build_city(out.grid);
  const int K = cfg.heavy_tail_places;
  require_config(K >= 4, "fixture: heavy_tail_places must be >= 4");

  for (int uid = 0; uid < cfg.n_users; ++uid) {
    Rng rng(derive_seed(cfg.seed, "fixture-ht-user", std::uint64_t(uid)));
    // home anywhere residential-ish
    std::vector<std::pair<CellId, double>> all_homes;
    for (int s = 0; s < 4; ++s)
      for (const auto& cw : city.homes[static_cast<std::size_t>(s)]) all_homes.push_back(cw);
    const CellId home = sample_weighted_cell(all_homes, rng);

    // K-1 scattered places around home, distinct cells
    std::vector<CellId> places{home};
    std::set<CellId> used{home};
    for (int k = 1; k < K; ++k) {
      std::vector<double> w(static_cast<std::size_t>(out.grid.cell_count()), 0.0);
      for (int c = 0; c < out.grid.cell_count(); ++c) {
        if (used.count(c)) continue;
        const double d = out.grid.cell_distance_km(home, c);
        w[static_cast<std::size_t>(c)] = (0.2 + city.commercial[static_cast<std::size_t>(c)]) * std::exp(-d / 5.0);
      }
      const CellId cell = CellId(rng.categorical(w));
      places.push_back(cell);
      used.insert(cell);
    }

    // Zipf visit weights with hour gates: place k is available in a 5-hour
    // window whose start cycles across the day.
    std::vector<double> zipf(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) zipf[static_cast<std::size_t>(k)] = std::pow(double(k + 1), -cfg.heavy_tail_zipf);
    auto gate = [&](int k, int hour) {
      if (k == 0) return true;  // home always available
      const int w0 = 7 + (k * 5) % 16;
      const int rel = hour - w0;
      return rel >= 0 && rel < 5;
    };

    std::vector<CellId> hourly;
    hourly.reserve(static_cast<std::size_t>(cfg.days * kHoursPerDay));
    for (int d = 0; d < cfg.days; ++d) {
      int h = 0;
      while (h < kHoursPerDay) {
        if (h < 7 || h >= 22) {
          hourly.push_back(home);
          ++h;
          continue;
        }
        std::vector<double> w(static_cast<std::size_t>(K), 0.0);
        for (int k = 0; k < K; ++k)
          if (gate(k, h)) w[static_cast<std::size_t>(k)] = zipf[static_cast<std::size_t>(k)];
        const int pick = int(rng.categorical(w));
        const int stay = 1 + int(rng.uniform_int(3));  // 1-3 hours
        for (int s = 0; s < stay && h < kHoursPerDay && (h < 22 || pick == 0); ++s, ++h)
          hourly.push_back(places[static_cast<std::size_t>(pick)]);
      }
    }

    Trajectory traj;
    traj.user_id = uid + 1;
    for (std::size_t t = 0; t < hourly.size(); ++t) {
      const CellId cell = hourly[t];
      for (int k = 0; k < cfg.records_per_hour; ++k) {
        TrajectoryRecord rec;
        rec.ts = (cfg.start_day * kHoursPerDay + std::int64_t(t)) * kSecondsPerHour +
                 std::int64_t(k) * (kSecondsPerHour / cfg.records_per_hour);
        double lat = out.grid.center_lat(cell);
        double lon = out.grid.center_lon(cell);
        if (cfg.jitter_m > 0) {
          const double r = cfg.jitter_m * std::sqrt(rng.uniform());
          const double theta = rng.uniform() * 6.283185307179586;
          lat += (r * std::sin(theta)) / 111195.0;
          lon += (r * std::cos(theta)) / (111195.0 * std::cos(lat * 0.017453292519943295));
        }
        rec.lat = std::clamp(lat, out.grid.bbox.lat_min, out.grid.bbox.lat_max);
        rec.lon = std::clamp(lon, out.grid.bbox.lon_min, out.grid.bbox.lon_max);
        traj.records.push_back(rec);
      }
    }
    out.trajectories.push_back(std::move(traj));
  }
}

}  // namespace geoavatar
