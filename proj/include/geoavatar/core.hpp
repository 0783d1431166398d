// Core domain types: role alphabet, hourly life-pattern tensor, spatial grid,
// trajectories and hourly role sequences.
//
// A life pattern is the meta-graph a (real or pseudo) person lives by: a
// 24 x L x L tensor of hour-conditioned role transition probabilities plus an
// hour-0 distribution. The derived occupancy matrix is always recomputed from
// those two, never stored independently, so the three views can never drift
// apart.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "geoavatar/common.hpp"

namespace geoavatar {

inline constexpr int kRoleHome = 0;
inline constexpr int kRoleWork = 1;
inline constexpr int kDefaultAlphabetSize = 12;

// Dense role ids: 0 = HOME, 1 = WORK, 2..L-1 = OTHER_1..OTHER_{L-2}.
struct RoleAlphabet {
  int size = kDefaultAlphabetSize;

  explicit RoleAlphabet(int L = kDefaultAlphabetSize) : size(L) {
    require_config(L >= 3, "role alphabet needs at least HOME, WORK and one OTHER");
  }

  static std::string role_name(int role) {
    if (role == kRoleHome) return "HOME";
    if (role == kRoleWork) return "WORK";
    return "OTHER_" + std::to_string(role - 1);
  }
};

inline int pattern_dim(int L) { return kHoursPerDay * L * L + L; }

// Hourly role-transition tensor plus initial distribution and derived
// occupancy.
class LifePattern {
 public:
  LifePattern() = default;

  // Builds from already-normalized probabilities; validates and derives O.
  static LifePattern from_probabilities(int L, std::vector<double> pi,
                                        std::vector<double> transitions) {
    require(L >= 3, "life pattern: L must be >= 3");
    require(int(pi.size()) == L, "life pattern: pi has wrong length");
    require(int(transitions.size()) == kHoursPerDay * L * L,
            "life pattern: transition tensor has wrong size");
    LifePattern p;
    p.L_ = L;
    p.pi_ = std::move(pi);
    p.T_ = std::move(transitions);
    p.validate_rows();
    p.derive_occupancy();
    return p;
  }

  int alphabet_size() const { return L_; }

  // P(role j at hour h+1 | role i at hour h); hour 23 wraps to hour 0 of the
  // next day.
  double transition(int h, int i, int j) const { return T_[(h * L_ + i) * L_ + j]; }
  double initial(int i) const { return pi_[i]; }
  double occupancy(int h, int i) const { return O_[h * L_ + i]; }

  const std::vector<double>& pi() const { return pi_; }
  const std::vector<double>& transitions() const { return T_; }
  const std::vector<double>& occupancy_matrix() const { return O_; }

  // Transition row T[h][i][.] as a span into the tensor.
  const double* row(int h, int i) const { return &T_[(h * L_ + i) * L_]; }

  double max_occupancy(int role) const {
    double m = 0.0;
    for (int h = 0; h < kHoursPerDay; ++h) m = std::max(m, occupancy(h, role));
    return m;
  }
  double mean_occupancy(int role) const {
    double s = 0.0;
    for (int h = 0; h < kHoursPerDay; ++h) s += occupancy(h, role);
    return s / kHoursPerDay;
  }

 private:
  void validate_rows() const {
    constexpr double tol = 1e-9;
    auto check_row = [&](const double* r, int n, const char* what) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        require(std::isfinite(r[k]) && r[k] >= 0.0,
                std::string("life pattern: ") + what + " has a negative or non-finite entry");
        s += r[k];
      }
      require(std::abs(s - 1.0) <= tol,
              std::string("life pattern: ") + what + " does not sum to 1");
    };
    check_row(pi_.data(), L_, "pi");
    for (int h = 0; h < kHoursPerDay; ++h)
      for (int i = 0; i < L_; ++i) check_row(row(h, i), L_, "transition row");
  }

  // O[0] = pi, O[h+1] = O[h] . T[h]. Single arithmetic path used everywhere.
  void derive_occupancy() {
    O_.assign(kHoursPerDay * L_, 0.0);
    for (int i = 0; i < L_; ++i) O_[i] = pi_[i];
    for (int h = 0; h + 1 < kHoursPerDay; ++h) {
      for (int j = 0; j < L_; ++j) {
        double acc = 0.0;
        for (int i = 0; i < L_; ++i) acc += O_[h * L_ + i] * transition(h, i, j);
        O_[(h + 1) * L_ + j] = acc;
      }
    }
  }

  int L_ = 0;
  std::vector<double> pi_;
  std::vector<double> T_;  // (h * L + i) * L + j
  std::vector<double> O_;  // h * L + i
};

// Row-softmax over the 1 + 24*L logit rows of a raw pattern tensor. This is
// the simplex projection used for generator output; it is differentiable,
// unlike clip-and-renormalize.
inline LifePattern normalize_pattern(int L, const std::vector<double>& transition_logits,
                                     const std::vector<double>& pi_logits) {
  require(int(pi_logits.size()) == L, "normalize_pattern: pi logits have wrong length");
  require(int(transition_logits.size()) == kHoursPerDay * L * L,
          "normalize_pattern: transition logits have wrong size");
  auto softmax_row = [](const double* in, double* out, int n) {
    double m = in[0];
    for (int k = 1; k < n; ++k) m = std::max(m, in[k]);
    double z = 0.0;
    for (int k = 0; k < n; ++k) {
      out[k] = std::exp(in[k] - m);
      z += out[k];
    }
    for (int k = 0; k < n; ++k) out[k] /= z;
  };
  for (double v : transition_logits)
    require(std::isfinite(v), "normalize_pattern: non-finite logit");
  for (double v : pi_logits) require(std::isfinite(v), "normalize_pattern: non-finite logit");
  std::vector<double> pi(L), T(kHoursPerDay * L * L);
  softmax_row(pi_logits.data(), pi.data(), L);
  for (int h = 0; h < kHoursPerDay; ++h)
    for (int i = 0; i < L; ++i)
      softmax_row(&transition_logits[(h * L + i) * L], &T[(h * L + i) * L], L);
  return LifePattern::from_probabilities(L, std::move(pi), std::move(T));
}

// Flat layout: pi first, then T in (h, i, j) row-major order.
inline std::vector<double> vectorize(const LifePattern& p) {
  std::vector<double> v;
  v.reserve(pattern_dim(p.alphabet_size()));
  v.insert(v.end(), p.pi().begin(), p.pi().end());
  v.insert(v.end(), p.transitions().begin(), p.transitions().end());
  return v;
}

// Inverse of vectorize. Rows are renormalized by their sum (idempotent on
// valid patterns); rows with no mass become uniform.
inline LifePattern devectorize(int L, const std::vector<double>& v) {
  require(int(v.size()) == pattern_dim(L), "devectorize: vector has wrong dimension");
  auto renorm = [&](const double* in, double* out, int n) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) {
      require(std::isfinite(in[k]), "devectorize: non-finite entry");
      double x = std::max(in[k], 0.0);
      out[k] = x;
      s += x;
    }
    if (s <= 0.0) {
      for (int k = 0; k < n; ++k) out[k] = 1.0 / n;
    } else {
      for (int k = 0; k < n; ++k) out[k] /= s;
    }
  };
  std::vector<double> pi(L), T(kHoursPerDay * L * L);
  renorm(v.data(), pi.data(), L);
  for (int r = 0; r < kHoursPerDay * L; ++r) renorm(&v[L + r * L], &T[r * L], L);
  return LifePattern::from_probabilities(L, std::move(pi), std::move(T));
}

// ---------------------------------------------------------------------------
// Geography
// ---------------------------------------------------------------------------

inline constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = 0.017453292519943295;  // pi / 180
  const double phi1 = lat1 * deg, phi2 = lat2 * deg;
  const double dphi = (lat2 - lat1) * deg, dlam = (lon2 - lon1) * deg;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

struct BBox {
  double lat_min = 0, lat_max = 0, lon_min = 0, lon_max = 0;
};

using CellId = int;

// Row-major rectangular grid over a bbox. Row 0 sits at lat_min, column 0 at
// lon_min; cells tile the bbox uniformly in degrees while the row/column
// counts come from the geodesic extent at the bbox center.
struct Grid {
  BBox bbox;
  double cell_size_m = 0;
  int n_rows = 0, n_cols = 0;

  int cell_count() const { return n_rows * n_cols; }
  double lat_step() const { return (bbox.lat_max - bbox.lat_min) / n_rows; }
  double lon_step() const { return (bbox.lon_max - bbox.lon_min) / n_cols; }

  // Boundary coordinates land in the lower-indexed cell.
  std::optional<CellId> locate(double lat, double lon) const {
    if (lat < bbox.lat_min || lat > bbox.lat_max || lon < bbox.lon_min || lon > bbox.lon_max)
      return std::nullopt;
    auto axis = [](double u, int n) {
      int k = int(u);
      if (double(k) == u && k > 0) --k;  // exact edge: lower neighbor
      return std::min(std::max(k, 0), n - 1);
    };
    int row = axis((lat - bbox.lat_min) / lat_step(), n_rows);
    int col = axis((lon - bbox.lon_min) / lon_step(), n_cols);
    return row * n_cols + col;
  }

  int row_of(CellId c) const { return c / n_cols; }
  int col_of(CellId c) const { return c % n_cols; }
  double center_lat(CellId c) const { return bbox.lat_min + (row_of(c) + 0.5) * lat_step(); }
  double center_lon(CellId c) const { return bbox.lon_min + (col_of(c) + 0.5) * lon_step(); }
  double cell_distance_km(CellId a, CellId b) const {
    return haversine_km(center_lat(a), center_lon(a), center_lat(b), center_lon(b));
  }
};

inline Grid build_grid(const BBox& bbox, double cell_size_m) {
  require_config(cell_size_m > 0, "grid: cell size must be positive");
  require_config(bbox.lat_max > bbox.lat_min && bbox.lon_max > bbox.lon_min,
                 "grid: degenerate bbox");
  const double lat_c = 0.5 * (bbox.lat_min + bbox.lat_max);
  const double lon_c = 0.5 * (bbox.lon_min + bbox.lon_max);
  const double lat_extent_m = haversine_km(bbox.lat_min, lon_c, bbox.lat_max, lon_c) * 1000.0;
  const double lon_extent_m = haversine_km(lat_c, bbox.lon_min, lat_c, bbox.lon_max) * 1000.0;
  Grid g;
  g.bbox = bbox;
  g.cell_size_m = cell_size_m;
  g.n_rows = std::max(1, int(std::ceil(lat_extent_m / cell_size_m - 1e-9)));
  g.n_cols = std::max(1, int(std::ceil(lon_extent_m / cell_size_m - 1e-9)));
  return g;
}

// ---------------------------------------------------------------------------
// Trajectories and role sequences
// ---------------------------------------------------------------------------

struct TrajectoryRecord {
  std::int64_t ts = 0;  // seconds since epoch
  double lat = 0, lon = 0;
};

struct Trajectory {
  std::int64_t user_id = 0;
  std::vector<TrajectoryRecord> records;  // strictly increasing timestamps

  void validate() const {
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& r = records[k];
      require(r.lat >= -90.0 && r.lat <= 90.0 && r.lon >= -180.0 && r.lon <= 180.0,
              "trajectory: coordinate out of range for user " + std::to_string(user_id));
      if (k > 0)
        require(r.ts > records[k - 1].ts,
                "trajectory: timestamps must be strictly increasing for user " +
                    std::to_string(user_id));
    }
  }
};

struct RoleSequence {
  std::int64_t user_id = 0;
  std::int64_t start_day = 0;  // days since epoch; sequences start at 00:00
  std::vector<int> values;     // one role id per hour, length 24 * D

  int days() const { return int(values.size()) / kHoursPerDay; }

  void validate(int L) const {
    require(!values.empty() && values.size() % kHoursPerDay == 0,
            "role sequence: length must be a positive multiple of 24");
    for (int v : values)
      require(v >= 0 && v < L, "role sequence: role id out of range");
  }
};

}  // namespace geoavatar
