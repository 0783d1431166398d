// File formats and persistence. Trajectories, places, census marginals and
// key tables travel as CSV; models as versioned JSON. All writes go through a
// temp-file-plus-rename so readers never observe partial artifacts.
#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoavatar/baselines.hpp"
#include "geoavatar/core.hpp"
#include "geoavatar/demolabel.hpp"
#include "geoavatar/ingest.hpp"
#include "geoavatar/keyloc.hpp"
#include "geoavatar/lifegen.hpp"
#include "geoavatar/seqgen.hpp"

namespace geoavatar {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Atomic writes
// ---------------------------------------------------------------------------

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot open for writing: " + tmp);
    out.write(content.data(), long(content.size()));
    require(out.good(), "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line,
                                                    std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const char* what) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          std::string("csv: bad ") + what + " value '" + std::string(s) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, const char* what) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
          std::string("csv: bad ") + what + " value '" + std::string(s) + "'");
  return v;
}

inline void append_fixed(std::string& out, double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  out += buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectory CSV: user_id,timestamp,lat,lon
// ---------------------------------------------------------------------------

inline constexpr const char* kTrajectoryHeader = "user_id,timestamp,lat,lon";

inline std::string trajectories_to_csv(const std::vector<Trajectory>& trajs) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const auto& t : trajs)
    for (const auto& r : t.records) {
      out += std::to_string(t.user_id);
      out += ',';
      out += std::to_string(r.ts);
      out += ',';
      detail::append_fixed(out, r.lat, 6);
      out += ',';
      detail::append_fixed(out, r.lon, 6);
      out += '\n';
    }
  return out;
}

inline std::vector<Trajectory> trajectories_from_csv(const std::string& content) {
  std::map<std::int64_t, Trajectory> by_user;
  std::size_t pos = 0;
  bool header_done = false;
  std::vector<std::string_view> fields;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line(content.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty()) continue;
    if (!header_done) {
      require(line == kTrajectoryHeader,
              "trajectory csv: expected header '" + std::string(kTrajectoryHeader) + "'");
      header_done = true;
      continue;
    }
    detail::split_csv_line(line, fields);
    require(fields.size() == 4, "trajectory csv: expected 4 fields per row");
    TrajectoryRecord rec;
    const std::int64_t uid = detail::parse_int(fields[0], "user_id");
    rec.ts = detail::parse_int(fields[1], "timestamp");
    rec.lat = detail::parse_double(fields[2], "lat");
    rec.lon = detail::parse_double(fields[3], "lon");
    auto& t = by_user[uid];
    t.user_id = uid;
    t.records.push_back(rec);
  }
  require(header_done, "trajectory csv: empty file");
  std::vector<Trajectory> out;
  out.reserve(by_user.size());
  for (auto& [uid, t] : by_user) {
    std::sort(t.records.begin(), t.records.end(),
              [](const TrajectoryRecord& a, const TrajectoryRecord& b) { return a.ts < b.ts; });
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Places CSV: user_id,role,lat,lon,visits,dwell_s
// ---------------------------------------------------------------------------

inline constexpr const char* kPlacesHeader = "user_id,role,lat,lon,visits,dwell_s";

inline std::string places_to_csv(const std::vector<SignificantPlace>& places) {
  std::string out = kPlacesHeader;
  out += '\n';
  for (const auto& p : places) {
    out += std::to_string(p.user_id);
    out += ',';
    out += std::to_string(p.role);
    out += ',';
    detail::append_fixed(out, p.lat, 6);
    out += ',';
    detail::append_fixed(out, p.lon, 6);
    out += ',';
    out += std::to_string(p.visit_count);
    out += ',';
    out += std::to_string(p.total_dwell_s);
    out += '\n';
  }
  return out;
}

inline std::vector<SignificantPlace> places_from_csv(const std::string& content) {
  std::vector<SignificantPlace> out;
  std::size_t pos = 0;
  bool header_done = false;
  std::vector<std::string_view> fields;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line(content.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty()) continue;
    if (!header_done) {
      require(line == kPlacesHeader, "places csv: unexpected header");
      header_done = true;
      continue;
    }
    detail::split_csv_line(line, fields);
    require(fields.size() == 6, "places csv: expected 6 fields per row");
    SignificantPlace p;
    p.user_id = detail::parse_int(fields[0], "user_id");
    p.role = int(detail::parse_int(fields[1], "role"));
    p.lat = detail::parse_double(fields[2], "lat");
    p.lon = detail::parse_double(fields[3], "lon");
    p.visit_count = int(detail::parse_int(fields[4], "visits"));
    p.total_dwell_s = detail::parse_int(fields[5], "dwell_s");
    out.push_back(p);
  }
  require(header_done, "places csv: empty file");
  return out;
}

// ---------------------------------------------------------------------------
// Census CSV: zone_id,segment_0,...,segment_{S-1}
// ---------------------------------------------------------------------------

inline std::string census_to_csv(const std::map<int, std::vector<double>>& marginals) {
  require(!marginals.empty(), "census: empty marginals");
  const std::size_t S = marginals.begin()->second.size();
  std::string out = "zone_id";
  for (std::size_t s = 0; s < S; ++s) out += ",segment_" + std::to_string(s);
  out += '\n';
  for (const auto& [zone, row] : marginals) {
    out += std::to_string(zone);
    for (double v : row) {
      out += ',';
      detail::append_fixed(out, v, 9);
    }
    out += '\n';
  }
  return out;
}

inline std::map<int, std::vector<double>> census_from_csv(const std::string& content) {
  std::map<int, std::vector<double>> out;
  std::size_t pos = 0;
  bool header_done = false;
  std::vector<std::string_view> fields;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line(content.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty()) continue;
    if (!header_done) {
      require(line.substr(0, 7) == "zone_id", "census csv: unexpected header");
      header_done = true;
      continue;
    }
    detail::split_csv_line(line, fields);
    require(fields.size() >= 2, "census csv: expected zone_id plus segments");
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i)
      row.push_back(detail::parse_double(fields[i], "segment fraction"));
    out[int(detail::parse_int(fields[0], "zone_id"))] = std::move(row);
  }
  require(header_done && !out.empty(), "census csv: empty file");
  return out;
}

// ---------------------------------------------------------------------------
// Key tables CSV: pseudo_id,role,cell_id
// ---------------------------------------------------------------------------

inline std::string key_tables_to_csv(
    const std::vector<std::pair<std::int64_t, KeyLocationTable>>& tables) {
  std::string out = "pseudo_id,role,cell_id\n";
  for (const auto& [id, table] : tables)
    for (const auto& [role, cell] : table.cells) {
      out += std::to_string(id);
      out += ',';
      out += std::to_string(role);
      out += ',';
      out += std::to_string(cell);
      out += '\n';
    }
  return out;
}

// ---------------------------------------------------------------------------
// Role sequences JSON
// ---------------------------------------------------------------------------

inline json role_sequences_to_json(const std::vector<RoleSequence>& seqs) {
  json users = json::array();
  for (const auto& s : seqs)
    users.push_back({{"user_id", s.user_id}, {"start_day", s.start_day}, {"values", s.values}});
  return json{{"format", "geoavatar-roles-v1"}, {"users", users}};
}

inline std::vector<RoleSequence> role_sequences_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-roles-v1", "roles json: unknown format");
  std::vector<RoleSequence> out;
  for (const auto& u : j.at("users")) {
    RoleSequence s;
    s.user_id = u.at("user_id").get<std::int64_t>();
    s.start_day = u.at("start_day").get<std::int64_t>();
    s.values = u.at("values").get<std::vector<int>>();
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patterns JSON
// ---------------------------------------------------------------------------

inline json patterns_to_json(const std::vector<std::pair<std::int64_t, LifePattern>>& patterns,
                             int L) {
  json users = json::array();
  for (const auto& [id, p] : patterns)
    users.push_back({{"user_id", id}, {"pi", p.pi()}, {"T", p.transitions()}});
  return json{{"format", "geoavatar-patterns-v1"}, {"L", L}, {"users", users}};
}

inline std::vector<std::pair<std::int64_t, LifePattern>> patterns_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-patterns-v1", "patterns json: unknown format");
  const int L = j.at("L").get<int>();
  std::vector<std::pair<std::int64_t, LifePattern>> out;
  for (const auto& u : j.at("users"))
    out.push_back({u.at("user_id").get<std::int64_t>(),
                   LifePattern::from_probabilities(L, u.at("pi").get<std::vector<double>>(),
                                                   u.at("T").get<std::vector<double>>())});
  return out;
}

// ---------------------------------------------------------------------------
// GAN JSON (format: geoavatar-gan-v1)
// ---------------------------------------------------------------------------

namespace detail {

inline json mlp_to_json(const nn::Mlp& net) {
  json layers = json::array();
  for (std::size_t k = 0; k < net.weights().size(); ++k) {
    const auto& W = net.weights()[k];
    // row-major dump
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(W.size()));
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) w.push_back(W(r, c));
    std::vector<double> b(net.biases()[k].data(),
                          net.biases()[k].data() + net.biases()[k].size());
    layers.push_back({{"rows", W.rows()}, {"cols", W.cols()}, {"W", w}, {"b", b}});
  }
  return layers;
}

inline nn::Mlp mlp_from_json(const json& layers) {
  std::vector<int> sizes;
  for (const auto& l : layers) {
    if (sizes.empty()) sizes.push_back(l.at("cols").get<int>());
    sizes.push_back(l.at("rows").get<int>());
  }
  Rng dummy(0);
  nn::Mlp net(sizes, dummy);
  for (std::size_t k = 0; k < net.weights().size(); ++k) {
    const auto& l = layers.at(k);
    auto w = l.at("W").get<std::vector<double>>();
    auto b = l.at("b").get<std::vector<double>>();
    auto& W = net.weights()[k];
    require(int(w.size()) == W.size() && int(b.size()) == W.rows(), "gan json: layer size mismatch");
    std::size_t idx = 0;
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) W(r, c) = w[idx++];
    for (int r = 0; r < W.rows(); ++r) net.biases()[k](r) = b[static_cast<std::size_t>(r)];
  }
  return net;
}

}  // namespace detail

inline json gan_to_json(const GeneratorModel& gen, const CriticModel& critic,
                        const TrainConfig& cfg) {
  return json{{"format", "geoavatar-gan-v1"},
              {"z_dim", gen.z_dim},
              {"L", gen.L},
              {"generator", detail::mlp_to_json(gen.net)},
              {"critic", detail::mlp_to_json(critic.net)},
              {"config",
               {{"lambda_gp", cfg.lambda_gp},
                {"n_critic", cfg.n_critic},
                {"batch", cfg.batch},
                {"epochs", cfg.epochs},
                {"lr", cfg.lr},
                {"adam_beta1", cfg.adam_beta1},
                {"adam_beta2", cfg.adam_beta2},
                {"seed", cfg.seed},
                {"gen_hidden", cfg.gen_hidden},
                {"critic_hidden", cfg.critic_hidden},
                {"z_dim", cfg.z_dim}}}};
}

inline std::pair<GeneratorModel, CriticModel> gan_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-gan-v1", "gan json: unknown format");
  GeneratorModel gen;
  gen.z_dim = j.at("z_dim").get<int>();
  gen.L = j.at("L").get<int>();
  gen.net = detail::mlp_from_json(j.at("generator"));
  CriticModel critic;
  critic.net = detail::mlp_from_json(j.at("critic"));
  return {std::move(gen), std::move(critic)};
}

// ---------------------------------------------------------------------------
// Guide JSON
// ---------------------------------------------------------------------------

inline json guide_to_json(const GuideModel& g) {
  json tables = json::array();
  for (const auto& table : g.tables()) {
    json entries = json::object();
    for (const auto& [key, entry] : table)
      entries[std::to_string(key)] = {{"next", entry.next}, {"total", entry.total}};
    tables.push_back(entries);
  }
  return json{{"format", "geoavatar-guide-v1"},
              {"L", g.alphabet_size()},
              {"order", g.order()},
              {"smoothing", g.smoothing()},
              {"backoff_gamma", g.backoff_gamma()},
              {"tables", tables}};
}

inline GuideModel guide_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-guide-v1", "guide json: unknown format");
  GuideModel g;
  g.set_params(j.at("L").get<int>(), j.at("order").get<int>(), j.at("smoothing").get<double>(),
               j.at("backoff_gamma").get<double>());
  const auto& tables = j.at("tables");
  require(tables.size() == static_cast<std::size_t>(g.order()) + 1, "guide json: table count mismatch");
  for (std::size_t k = 0; k < tables.size(); ++k) {
    for (const auto& [key, val] : tables[k].items()) {
      GuideModel::Entry e;
      e.next = val.at("next").get<std::vector<double>>();
      e.total = val.at("total").get<double>();
      g.mutable_tables()[k][std::stoll(key)] = std::move(e);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// NMF / labeler / priors JSON
// ---------------------------------------------------------------------------

inline json nmf_to_json(const NmfModel& m) {
  std::vector<double> h;
  h.reserve(static_cast<std::size_t>(m.H.size()));
  for (int r = 0; r < m.H.rows(); ++r)
    for (int c = 0; c < m.H.cols(); ++c) h.push_back(m.H(r, c));
  return json{{"format", "geoavatar-nmf-v1"},
              {"rank", m.H.rows()},
              {"input_dim", m.H.cols()},
              {"H", h}};
}

inline NmfModel nmf_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-nmf-v1", "nmf json: unknown format");
  NmfModel m;
  const int d = j.at("rank").get<int>(), M = j.at("input_dim").get<int>();
  const auto h = j.at("H").get<std::vector<double>>();
  require(int(h.size()) == d * M, "nmf json: H size mismatch");
  m.H.resize(d, M);
  std::size_t idx = 0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < M; ++c) m.H(r, c) = h[idx++];
  return m;
}

inline json labeler_to_json(const LabelerModel& m) {
  const int S = m.n_segments, d = int(m.means.cols());
  std::vector<double> means, vars;
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < d; ++k) {
      means.push_back(m.means(s, k));
      vars.push_back(m.variances(s, k));
    }
  json zones = json::object();
  for (const auto& [zone, prior] : m.zone_priors) zones[std::to_string(zone)] = prior;
  return json{{"format", "geoavatar-labeler-v1"}, {"segments", S},          {"dim", d},
              {"means", means},                   {"variances", vars},      {"zone_priors", zones},
              {"global_prior", m.global_prior}};
}

inline LabelerModel labeler_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-labeler-v1", "labeler json: unknown format");
  LabelerModel m;
  m.n_segments = j.at("segments").get<int>();
  const int d = j.at("dim").get<int>();
  const auto means = j.at("means").get<std::vector<double>>();
  const auto vars = j.at("variances").get<std::vector<double>>();
  require(int(means.size()) == m.n_segments * d && vars.size() == means.size(),
          "labeler json: size mismatch");
  m.means.resize(m.n_segments, d);
  m.variances.resize(m.n_segments, d);
  std::size_t idx = 0;
  for (int s = 0; s < m.n_segments; ++s)
    for (int k = 0; k < d; ++k) {
      m.means(s, k) = means[idx];
      m.variances(s, k) = vars[idx];
      ++idx;
    }
  for (const auto& [zone, prior] : j.at("zone_priors").items())
    m.zone_priors[std::stoi(zone)] = prior.get<std::vector<double>>();
  m.global_prior = j.at("global_prior").get<std::vector<double>>();
  return m;
}

inline json priors_to_json(const SpatialPriors& p) {
  return json{{"format", "geoavatar-priors-v1"},
              {"segments", p.n_segments},
              {"cells", p.n_cells},
              {"decay_km", p.decay_km},
              {"home_dist", p.home_dist},
              {"commute_od", p.commute_od},
              {"attractiveness", p.attractiveness}};
}

inline SpatialPriors priors_from_json(const json& j) {
  require(j.value("format", "") == "geoavatar-priors-v1", "priors json: unknown format");
  SpatialPriors p;
  p.n_segments = j.at("segments").get<int>();
  p.n_cells = j.at("cells").get<int>();
  p.decay_km = j.at("decay_km").get<double>();
  p.home_dist = j.at("home_dist").get<std::vector<std::vector<double>>>();
  p.commute_od = j.at("commute_od").get<std::vector<std::vector<double>>>();
  p.attractiveness = j.at("attractiveness").get<std::vector<double>>();
  return p;
}

}  // namespace geoavatar
