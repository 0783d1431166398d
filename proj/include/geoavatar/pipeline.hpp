// Pipeline orchestration: configuration, stage commands and run manifests.
//
// Every command reads a validated PipelineConfig, derives all randomness from
// the master seed, writes artifacts atomically into the output directory and
// records a manifest. With threads = 1 a rerun with the same config and seed
// reproduces the data artifacts byte for byte (per-user work also uses
// index-keyed RNG streams, so thread count never changes results).
#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geoavatar/baselines.hpp"
#include "geoavatar/core.hpp"
#include "geoavatar/demolabel.hpp"
#include "geoavatar/eval.hpp"
#include "geoavatar/fixture.hpp"
#include "geoavatar/ingest.hpp"
#include "geoavatar/io.hpp"
#include "geoavatar/keyloc.hpp"
#include "geoavatar/lifegen.hpp"
#include "geoavatar/seqgen.hpp"

namespace geoavatar {

inline constexpr const char* kToolVersion = "0.1.0";

struct PipelineConfig {
  // paths
  std::string input_csv;
  std::string output_dir = "out";
  std::string census_csv;

  // spatial grid
  BBox bbox = {35.65 - 0.088135, 35.65 + 0.088135, 139.70 - 0.108452, 139.70 + 0.108452};
  double cell_size_m = 1000.0;

  int L = kDefaultAlphabetSize;
  StaypointParams staypoint;
  double pattern_smoothing = 0.01;

  TrainConfig gan;

  double gwg_alpha = 0.5;
  int guide_order = 2;
  double guide_smoothing = 0.1;
  double guide_backoff_gamma = 1.0;

  int nmf_rank_label = 8;
  int nmf_rank_eval = 3;
  int n_segments = 4;
  int nmf_iters = 500;
  int em_iters = 200;
  int zone_block = 10;

  double decay_km = 3.0;
  double jitter_m = 50.0;
  double prior_smoothing = 0.5;
  double support_threshold = 1e-3;

  int n_users = 1000;
  int days = 7;
  std::int64_t start_day = 19723;

  int probability_bins = 20;
  int bins_per_dim = 10;
  int eval_nmf_iters = 300;
  // Metric-side ingestion threshold. Generated corpora carry one record per
  // hour, so a positive span threshold would blind the activity metrics to
  // one-hour visits; 0 keeps evaluate generator-agnostic.
  std::int64_t eval_min_stay_s = 0;
  std::vector<int> n_list{1, 2, 3, 5, 8, 10, 12, 15, 20};

  FixtureConfig fixture;

  std::uint64_t seed = 7;
  int threads = 1;

  Grid grid() const { return build_grid(bbox, cell_size_m); }
};

inline json config_to_json(const PipelineConfig& c) {
  return json{
      {"paths",
       {{"input_csv", c.input_csv}, {"output_dir", c.output_dir}, {"census_csv", c.census_csv}}},
      {"grid",
       {{"lat_min", c.bbox.lat_min},
        {"lat_max", c.bbox.lat_max},
        {"lon_min", c.bbox.lon_min},
        {"lon_max", c.bbox.lon_max},
        {"cell_size_m", c.cell_size_m}}},
      {"alphabet", {{"L", c.L}}},
      {"staypoint",
       {{"dist_m", c.staypoint.dist_m},
        {"min_stay_s", c.staypoint.min_stay_s},
        {"merge_radius_m", c.staypoint.merge_radius_m}}},
      {"pattern", {{"smoothing", c.pattern_smoothing}}},
      {"gan",
       {{"lambda_gp", c.gan.lambda_gp},
        {"n_critic", c.gan.n_critic},
        {"batch", c.gan.batch},
        {"epochs", c.gan.epochs},
        {"lr", c.gan.lr},
        {"adam_beta1", c.gan.adam_beta1},
        {"adam_beta2", c.gan.adam_beta2},
        {"z_dim", c.gan.z_dim},
        {"gen_hidden", c.gan.gen_hidden},
        {"critic_hidden", c.gan.critic_hidden}}},
      {"gwg",
       {{"alpha", c.gwg_alpha},
        {"order", c.guide_order},
        {"smoothing", c.guide_smoothing},
        {"backoff_gamma", c.guide_backoff_gamma}}},
      {"demolabel",
       {{"rank_label", c.nmf_rank_label},
        {"rank_eval", c.nmf_rank_eval},
        {"segments", c.n_segments},
        {"nmf_iters", c.nmf_iters},
        {"em_iters", c.em_iters},
        {"zone_block", c.zone_block}}},
      {"keyloc",
       {{"decay_km", c.decay_km},
        {"jitter_m", c.jitter_m},
        {"prior_smoothing", c.prior_smoothing},
        {"support_threshold", c.support_threshold}}},
      {"generate",
       {{"n_users", c.n_users}, {"days", c.days}, {"start_day", c.start_day}}},
      {"metrics",
       {{"probability_bins", c.probability_bins},
        {"bins_per_dim", c.bins_per_dim},
        {"eval_nmf_iters", c.eval_nmf_iters},
        {"eval_min_stay_s", c.eval_min_stay_s},
        {"n_list", c.n_list}}},
      {"fixture",
       {{"profile", c.fixture.profile},
        {"n_users", c.fixture.n_users},
        {"days", c.fixture.days},
        {"start_day", c.fixture.start_day},
        {"seed", c.fixture.seed},
        {"jitter_m", c.fixture.jitter_m},
        {"records_per_hour", c.fixture.records_per_hour},
        {"heavy_tail_places", c.fixture.heavy_tail_places},
        {"heavy_tail_zipf", c.fixture.heavy_tail_zipf}}},
      {"seed", c.seed},
      {"threads", c.threads}};
}

inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  auto sec = [&](const char* name) { return j.contains(name) ? j.at(name) : json::object(); };
  {
    const json p = sec("paths");
    c.input_csv = p.value("input_csv", c.input_csv);
    c.output_dir = p.value("output_dir", c.output_dir);
    c.census_csv = p.value("census_csv", c.census_csv);
  }
  {
    const json g = sec("grid");
    c.bbox.lat_min = g.value("lat_min", c.bbox.lat_min);
    c.bbox.lat_max = g.value("lat_max", c.bbox.lat_max);
    c.bbox.lon_min = g.value("lon_min", c.bbox.lon_min);
    c.bbox.lon_max = g.value("lon_max", c.bbox.lon_max);
    c.cell_size_m = g.value("cell_size_m", c.cell_size_m);
  }
  c.L = sec("alphabet").value("L", c.L);
  {
    const json s = sec("staypoint");
    c.staypoint.dist_m = s.value("dist_m", c.staypoint.dist_m);
    c.staypoint.min_stay_s = s.value("min_stay_s", c.staypoint.min_stay_s);
    c.staypoint.merge_radius_m = s.value("merge_radius_m", c.staypoint.merge_radius_m);
  }
  c.pattern_smoothing = sec("pattern").value("smoothing", c.pattern_smoothing);
  {
    const json g = sec("gan");
    c.gan.lambda_gp = g.value("lambda_gp", c.gan.lambda_gp);
    c.gan.n_critic = g.value("n_critic", c.gan.n_critic);
    c.gan.batch = g.value("batch", c.gan.batch);
    c.gan.epochs = g.value("epochs", c.gan.epochs);
    c.gan.lr = g.value("lr", c.gan.lr);
    c.gan.adam_beta1 = g.value("adam_beta1", c.gan.adam_beta1);
    c.gan.adam_beta2 = g.value("adam_beta2", c.gan.adam_beta2);
    c.gan.z_dim = g.value("z_dim", c.gan.z_dim);
    c.gan.gen_hidden = g.value("gen_hidden", c.gan.gen_hidden);
    c.gan.critic_hidden = g.value("critic_hidden", c.gan.critic_hidden);
  }
  {
    const json g = sec("gwg");
    c.gwg_alpha = g.value("alpha", c.gwg_alpha);
    c.guide_order = g.value("order", c.guide_order);
    c.guide_smoothing = g.value("smoothing", c.guide_smoothing);
    c.guide_backoff_gamma = g.value("backoff_gamma", c.guide_backoff_gamma);
  }
  {
    const json d = sec("demolabel");
    c.nmf_rank_label = d.value("rank_label", c.nmf_rank_label);
    c.nmf_rank_eval = d.value("rank_eval", c.nmf_rank_eval);
    c.n_segments = d.value("segments", c.n_segments);
    c.nmf_iters = d.value("nmf_iters", c.nmf_iters);
    c.em_iters = d.value("em_iters", c.em_iters);
    c.zone_block = d.value("zone_block", c.zone_block);
  }
  {
    const json k = sec("keyloc");
    c.decay_km = k.value("decay_km", c.decay_km);
    c.jitter_m = k.value("jitter_m", c.jitter_m);
    c.prior_smoothing = k.value("prior_smoothing", c.prior_smoothing);
    c.support_threshold = k.value("support_threshold", c.support_threshold);
  }
  {
    const json g = sec("generate");
    c.n_users = g.value("n_users", c.n_users);
    c.days = g.value("days", c.days);
    c.start_day = g.value("start_day", c.start_day);
  }
  {
    const json m = sec("metrics");
    c.probability_bins = m.value("probability_bins", c.probability_bins);
    c.bins_per_dim = m.value("bins_per_dim", c.bins_per_dim);
    c.eval_nmf_iters = m.value("eval_nmf_iters", c.eval_nmf_iters);
    c.eval_min_stay_s = m.value("eval_min_stay_s", c.eval_min_stay_s);
    c.n_list = m.value("n_list", c.n_list);
  }
  {
    const json f = sec("fixture");
    c.fixture.profile = f.value("profile", c.fixture.profile);
    c.fixture.n_users = f.value("n_users", c.fixture.n_users);
    c.fixture.days = f.value("days", c.fixture.days);
    c.fixture.start_day = f.value("start_day", c.fixture.start_day);
    c.fixture.seed = f.value("seed", c.fixture.seed);
    c.fixture.jitter_m = f.value("jitter_m", c.fixture.jitter_m);
    c.fixture.records_per_hour = f.value("records_per_hour", c.fixture.records_per_hour);
    c.fixture.heavy_tail_places = f.value("heavy_tail_places", c.fixture.heavy_tail_places);
    c.fixture.heavy_tail_zipf = f.value("heavy_tail_zipf", c.fixture.heavy_tail_zipf);
  }
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config: cannot parse " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

// Hash of the canonical config dump; covers every parameter that affects any
// output byte.
inline std::string config_hash(const PipelineConfig& c) {
  const std::uint64_t h = fnv1a(config_to_json(c).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Manifests and stage timing
// ---------------------------------------------------------------------------

class RunManifest {
 public:
  RunManifest(const PipelineConfig& cfg, std::string command)
      : command_(std::move(command)), hash_(config_hash(cfg)), seed_(cfg.seed) {}

  void add_input(const std::string& path) { inputs_.push_back(path); }
  void add_artifact(const std::string& path) { artifacts_.push_back(path); }

  template <typename F>
  void stage(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    timings_[name] = std::chrono::duration<double>(t1 - t0).count();
  }

  void write(const std::filesystem::path& out_dir) const {
    json j{{"format", "geoavatar-manifest-v1"},
           {"tool_version", kToolVersion},
           {"command", command_},
           {"config_hash", hash_},
           {"seed", seed_},
           {"inputs", inputs_},
           {"artifacts", artifacts_},
           {"stage_seconds", timings_}};
    atomic_write(out_dir / ("manifest_" + command_ + ".json"), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string hash_;
  std::uint64_t seed_;
  std::vector<std::string> inputs_;
  std::vector<std::string> artifacts_;
  std::map<std::string, double> timings_;
};

namespace detail {

inline std::filesystem::path out_path(const PipelineConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.output_dir) / name;
}

inline void ensure_output_dir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
}

inline void require_artifact(const std::filesystem::path& p, const std::string& producer) {
  if (!std::filesystem::exists(p))
    throw ConfigError("missing artifact " + p.string() + "; run `geoavatar " + producer +
                      "` first");
}

inline int zone_of_cell(const Grid& grid, CellId cell, int zone_block) {
  const int zone_cols = (grid.n_cols + zone_block - 1) / zone_block;
  return (grid.row_of(cell) / zone_block) * zone_cols + grid.col_of(cell) / zone_block;
}

// ingest window: whole days covering the corpus
inline std::pair<std::int64_t, int> corpus_window(const std::vector<Trajectory>& trajs) {
  require(!trajs.empty(), "corpus is empty");
  std::int64_t lo = trajs.front().records.front().ts, hi = lo;
  for (const auto& t : trajs) {
    require(!t.records.empty(), "corpus has a user with no records");
    lo = std::min(lo, t.records.front().ts);
    hi = std::max(hi, t.records.back().ts);
  }
  const std::int64_t day0 = day_of(lo);
  const int days = int(day_of(hi) - day0) + 1;
  return {day0, days};
}

inline std::vector<IngestedUser> ingest_corpus(const std::vector<Trajectory>& trajs,
                                               const PipelineConfig& cfg) {
  const auto [day0, days] = corpus_window(trajs);
  std::vector<IngestedUser> users(trajs.size());
  parallel_for(trajs.size(), cfg.threads, [&](std::size_t i) {
    users[i] = ingest_user(trajs[i], cfg.staypoint, cfg.L, day0, days, cfg.pattern_smoothing);
  });
  return users;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_fixture(const PipelineConfig& cfg) {
  detail::ensure_output_dir(cfg);
  RunManifest manifest(cfg, "fixture");
  FixtureOutput fx;
  manifest.stage("generate", [&] { fx = make_fixture(cfg.fixture); });
  manifest.stage("write", [&] {
    atomic_write(detail::out_path(cfg, "fixture.csv"), trajectories_to_csv(fx.trajectories));
    manifest.add_artifact("fixture.csv");
    // seeded half split for closed-loop runs
    std::vector<std::size_t> idx(fx.trajectories.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(cfg.fixture.seed, "fixture-split"));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    std::vector<Trajectory> half_a, half_b;
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < idx.size() / 2 ? half_a : half_b).push_back(fx.trajectories[idx[i]]);
    auto by_id = [](const Trajectory& a, const Trajectory& b) { return a.user_id < b.user_id; };
    std::sort(half_a.begin(), half_a.end(), by_id);
    std::sort(half_b.begin(), half_b.end(), by_id);
    atomic_write(detail::out_path(cfg, "fixture_a.csv"), trajectories_to_csv(half_a));
    atomic_write(detail::out_path(cfg, "fixture_b.csv"), trajectories_to_csv(half_b));
    manifest.add_artifact("fixture_a.csv");
    manifest.add_artifact("fixture_b.csv");
    if (!fx.census.empty()) {
      atomic_write(detail::out_path(cfg, "census.csv"), census_to_csv(fx.census));
      manifest.add_artifact("census.csv");
    }
    json meta{{"format", "geoavatar-fixture-v1"},
              {"profile", cfg.fixture.profile},
              {"n_users", cfg.fixture.n_users},
              {"days", cfg.fixture.days},
              {"start_day", cfg.fixture.start_day},
              {"grid_rows", fx.grid.n_rows},
              {"grid_cols", fx.grid.n_cols},
              {"n_segments", fx.n_segments},
              {"zone_block", fx.zone_block}};
    atomic_write(detail::out_path(cfg, "fixture_meta.json"), meta.dump(2) + "\n");
    manifest.add_artifact("fixture_meta.json");
  });
  manifest.write(cfg.output_dir);
}

inline void cmd_ingest(const PipelineConfig& cfg) {
  require_config(!cfg.input_csv.empty(), "ingest: paths.input_csv is required");
  detail::require_artifact(cfg.input_csv, "fixture (or provide your own trajectory csv)");
  detail::ensure_output_dir(cfg);
  RunManifest manifest(cfg, "ingest");
  manifest.add_input(cfg.input_csv);

  std::vector<Trajectory> trajs;
  manifest.stage("read", [&] { trajs = trajectories_from_csv(read_file(cfg.input_csv)); });
  std::vector<IngestedUser> users;
  manifest.stage("ingest", [&] { users = detail::ingest_corpus(trajs, cfg); });
  manifest.stage("write", [&] {
    std::vector<SignificantPlace> places;
    std::vector<RoleSequence> roles;
    std::vector<std::pair<std::int64_t, LifePattern>> patterns;
    for (const auto& u : users) {
      for (const auto& p : u.extraction.places) places.push_back(p);
      roles.push_back(u.roles);
      patterns.push_back({u.user_id, u.pattern});
    }
    atomic_write(detail::out_path(cfg, "places.csv"), places_to_csv(places));
    atomic_write(detail::out_path(cfg, "roles.json"), role_sequences_to_json(roles).dump() + "\n");
    atomic_write(detail::out_path(cfg, "patterns.json"),
                 patterns_to_json(patterns, cfg.L).dump() + "\n");
    manifest.add_artifact("places.csv");
    manifest.add_artifact("roles.json");
    manifest.add_artifact("patterns.json");
  });
  manifest.write(cfg.output_dir);
}

namespace detail {

struct IngestArtifacts {
  std::vector<SignificantPlace> places;
  std::vector<RoleSequence> roles;
  std::vector<std::pair<std::int64_t, LifePattern>> patterns;
  std::map<std::int64_t, std::vector<SignificantPlace>> places_by_user;
};

inline IngestArtifacts load_ingest_artifacts(const PipelineConfig& cfg) {
  require_artifact(out_path(cfg, "places.csv"), "ingest");
  require_artifact(out_path(cfg, "roles.json"), "ingest");
  require_artifact(out_path(cfg, "patterns.json"), "ingest");
  IngestArtifacts a;
  a.places = places_from_csv(read_file(out_path(cfg, "places.csv")));
  a.roles = role_sequences_from_json(json::parse(read_file(out_path(cfg, "roles.json"))));
  a.patterns = patterns_from_json(json::parse(read_file(out_path(cfg, "patterns.json"))));
  for (const auto& p : a.places) a.places_by_user[p.user_id].push_back(p);
  return a;
}

}  // namespace detail

inline void cmd_train(const PipelineConfig& cfg) {
  detail::ensure_output_dir(cfg);
  RunManifest manifest(cfg, "train");
  const auto art = detail::load_ingest_artifacts(cfg);
  const Grid grid = cfg.grid();
  const int M = pattern_dim(cfg.L);

  // GAN over vectorized patterns
  TrainResult gan;
  manifest.stage("gan", [&] {
    nn::Mat corpus(M, long(art.patterns.size()));
    for (std::size_t i = 0; i < art.patterns.size(); ++i) {
      const auto v = vectorize(art.patterns[i].second);
      corpus.col(long(i)) = Eigen::Map<const nn::Vec>(v.data(), M);
    }
    TrainConfig tc = cfg.gan;
    tc.seed = derive_seed(cfg.seed, "train-gan");
    gan = train_wgan(corpus, cfg.L, tc);
    atomic_write(detail::out_path(cfg, "gan.json"),
                 gan_to_json(gan.generator, gan.critic, tc).dump() + "\n");
    std::string log = "epoch,wasserstein,critic_loss,penalty\n";
    for (const auto& e : gan.log) {
      log += std::to_string(e.epoch) + ",";
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", e.wasserstein, e.critic_loss, e.penalty);
      log += buf;
    }
    atomic_write(detail::out_path(cfg, "train_log.csv"), log);
  });
  manifest.add_artifact("gan.json");
  manifest.add_artifact("train_log.csv");

  // sequence guide
  manifest.stage("guide", [&] {
    const auto guide = fit_guide(art.roles, cfg.L, cfg.guide_order, cfg.guide_smoothing,
                                 cfg.guide_backoff_gamma);
    atomic_write(detail::out_path(cfg, "guide.json"), guide_to_json(guide).dump() + "\n");
  });
  manifest.add_artifact("guide.json");

  // NMF + census-pinned labeler
  NmfModel nmf;
  LabelerModel labeler;
  manifest.stage("labeler", [&] {
    require_config(!cfg.census_csv.empty(), "train: paths.census_csv is required");
    detail::require_artifact(cfg.census_csv, "fixture (census marginals)");
    const auto census = census_from_csv(read_file(cfg.census_csv));
    manifest.add_input(cfg.census_csv);

    nn::Mat X(long(art.patterns.size()), M);
    for (std::size_t i = 0; i < art.patterns.size(); ++i) {
      const auto v = vectorize(art.patterns[i].second);
      X.row(long(i)) = Eigen::Map<const nn::Vec>(v.data(), M).transpose();
    }
    const auto nmf_res = fit_nmf(X, cfg.nmf_rank_label, cfg.nmf_iters,
                                 derive_seed(cfg.seed, "train-nmf"));
    nmf = nmf_res.model;

    std::vector<int> zones;
    Matrix F(long(art.patterns.size()), cfg.nmf_rank_label);
    for (std::size_t i = 0; i < art.patterns.size(); ++i) {
      F.row(long(i)) = nmf_res.W.row(long(i));
      const auto& user_places = art.places_by_user.at(art.patterns[i].first);
      const SignificantPlace* home = nullptr;
      for (const auto& p : user_places)
        if (p.role == kRoleHome) home = &p;
      require(home != nullptr, "train: user without a HOME place");
      const auto cell = grid.locate(home->lat, home->lon);
      require(cell.has_value(), "train: HOME place outside the grid bbox");
      zones.push_back(detail::zone_of_cell(grid, *cell, cfg.zone_block));
    }
    labeler = fit_labeler(F, zones, census, cfg.n_segments,
                          derive_seed(cfg.seed, "train-labeler"), cfg.em_iters);
    atomic_write(detail::out_path(cfg, "nmf.json"), nmf_to_json(nmf).dump() + "\n");
    atomic_write(detail::out_path(cfg, "labeler.json"), labeler_to_json(labeler).dump() + "\n");
  });
  manifest.add_artifact("nmf.json");
  manifest.add_artifact("labeler.json");

  // spatial priors from labeled truth users
  manifest.stage("priors", [&] {
    std::vector<UserPlacesForPriors> users;
    for (const auto& [uid, pattern] : art.patterns) {
      UserPlacesForPriors u;
      const auto& user_places = art.places_by_user.at(uid);
      for (const auto& p : user_places) {
        const auto cell = grid.locate(p.lat, p.lon);
        if (!cell) continue;
        if (p.role == kRoleHome)
          u.home = *cell;
        else if (p.role == kRoleWork)
          u.work = *cell;
        else
          u.others.push_back({*cell, double(p.total_dwell_s)});
      }
      if (!u.home) continue;
      const int zone = detail::zone_of_cell(grid, *u.home, cfg.zone_block);
      u.segment = label(pattern, nmf, labeler, zone).segment;
      users.push_back(std::move(u));
    }
    const auto priors =
        fit_spatial_priors(users, grid, cfg.n_segments, cfg.decay_km, cfg.prior_smoothing);
    atomic_write(detail::out_path(cfg, "priors.json"), priors_to_json(priors).dump() + "\n");
  });
  manifest.add_artifact("priors.json");
  manifest.write(cfg.output_dir);
}

inline void cmd_generate(const PipelineConfig& cfg) {
  detail::ensure_output_dir(cfg);
  for (const char* artifact : {"gan.json", "guide.json", "nmf.json", "labeler.json", "priors.json"})
    detail::require_artifact(detail::out_path(cfg, artifact), "train");
  RunManifest manifest(cfg, "generate");
  const Grid grid = cfg.grid();

  GeneratorModel gen_model;
  GuideModel guide;
  NmfModel nmf;
  LabelerModel labeler;
  SpatialPriors priors;
  manifest.stage("load", [&] {
    auto [g, c] = gan_from_json(json::parse(read_file(detail::out_path(cfg, "gan.json"))));
    gen_model = std::move(g);
    guide = guide_from_json(json::parse(read_file(detail::out_path(cfg, "guide.json"))));
    nmf = nmf_from_json(json::parse(read_file(detail::out_path(cfg, "nmf.json"))));
    labeler = labeler_from_json(json::parse(read_file(detail::out_path(cfg, "labeler.json"))));
    priors = priors_from_json(json::parse(read_file(detail::out_path(cfg, "priors.json"))));
  });
  require_config(gen_model.L == cfg.L, "generate: model alphabet does not match config");
  require(priors.n_cells == grid.cell_count(), "generate: priors grid does not match config");

  std::vector<Trajectory> trajs(static_cast<std::size_t>(cfg.n_users));
  std::vector<std::pair<std::int64_t, KeyLocationTable>> tables(static_cast<std::size_t>(cfg.n_users));
  manifest.stage("generate", [&] {
    parallel_for(static_cast<std::size_t>(cfg.n_users), cfg.threads, [&](std::size_t i) {
      const std::int64_t pseudo_id = std::int64_t(i) + 1;
      Rng rng(derive_seed(cfg.seed, "generate-user", std::uint64_t(i)));
      std::vector<double> z(static_cast<std::size_t>(gen_model.z_dim));
      for (auto& v : z) v = rng.normal();
      const LifePattern pattern = generator_forward(gen_model, z);
      const auto profile = label_global(pattern, nmf, labeler);
      KeyLocationTable table =
          sample_key_table(profile.segment, priors, pattern, grid, rng, cfg.support_threshold);
      GwgConfig gwg{cfg.gwg_alpha, cfg.days, 0};
      RoleSequence seq = gwg_sample(pattern, guide, gwg, rng, pseudo_id, cfg.start_day);
      // cover roles the walk visited below the support threshold
      for (int role : seq.values)
        if (!table.has(role)) {
          std::set<CellId> used;
          std::vector<CellId> anchors;
          for (const auto& [r, c] : table.cells) {
            used.insert(c);
            anchors.push_back(c);
          }
          const auto w = other_cell_weights(priors, grid, anchors, used);
          table.cells[role] = CellId(rng.categorical(w));
        }
      trajs[i] = geocode_sequence(seq, table, grid, cfg.jitter_m, rng);
      tables[i] = {pseudo_id, std::move(table)};
    });
  });
  manifest.stage("write", [&] {
    atomic_write(detail::out_path(cfg, "gen.csv"), trajectories_to_csv(trajs));
    atomic_write(detail::out_path(cfg, "key_tables.csv"), key_tables_to_csv(tables));
  });
  manifest.add_artifact("gen.csv");
  manifest.add_artifact("key_tables.csv");
  manifest.write(cfg.output_dir);
}

inline void cmd_baseline(const PipelineConfig& cfg, const std::string& which) {
  require_config(which == "fem" || which == "timegeo", "baseline: which must be fem or timegeo");
  detail::ensure_output_dir(cfg);
  RunManifest manifest(cfg, "baseline_" + which);
  const auto art = detail::load_ingest_artifacts(cfg);
  const Grid grid = cfg.grid();

  std::vector<Trajectory> trajs;
  if (which == "fem") {
    manifest.stage("fem", [&] {
      std::map<std::int64_t, const RoleSequence*> roles_by_user;
      for (const auto& r : art.roles) roles_by_user[r.user_id] = &r;
      trajs.resize(art.patterns.size());
      std::vector<std::int64_t> ids;
      for (const auto& [uid, pattern] : art.patterns) ids.push_back(uid);
      parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
        const std::int64_t uid = ids[i];
        const auto model = fem_fit(*roles_by_user.at(uid), art.places_by_user.at(uid), grid);
        Rng rng(derive_seed(cfg.seed, "baseline-fem", std::uint64_t(i)));
        trajs[i] = fem_generate(model, grid, cfg.days, cfg.start_day, rng);
      });
    });
  } else {
    manifest.stage("timegeo", [&] {
      // hourly cell sequences from the ingested roles and places
      std::vector<std::vector<std::pair<std::int64_t, CellId>>> cells;
      std::vector<CellId> homes;
      std::map<std::int64_t, const RoleSequence*> roles_by_user;
      for (const auto& r : art.roles) roles_by_user[r.user_id] = &r;
      for (const auto& [uid, pattern] : art.patterns) {
        const auto& places = art.places_by_user.at(uid);
        std::map<int, CellId> role_cell;
        for (const auto& p : places)
          if (auto c = grid.locate(p.lat, p.lon)) role_cell[p.role] = *c;
        const auto* seq = roles_by_user.at(uid);
        std::vector<std::pair<std::int64_t, CellId>> user_cells;
        for (std::size_t t = 0; t < seq->values.size(); ++t) {
          auto it = role_cell.find(seq->values[t]);
          if (it == role_cell.end()) continue;
          user_cells.push_back({seq->start_day * kHoursPerDay + std::int64_t(t), it->second});
        }
        if (user_cells.empty()) continue;
        cells.push_back(std::move(user_cells));
        if (role_cell.count(kRoleHome)) homes.push_back(role_cell[kRoleHome]);
      }
      const auto params = timegeo_fit(cells, grid);
      atomic_write(detail::out_path(cfg, "timegeo_params.json"),
                   json{{"format", "geoavatar-timegeo-v1"},
                        {"rho", params.rho},
                        {"gamma", params.gamma},
                        {"alpha_rank", params.alpha_rank},
                        {"n_w", params.n_w},
                        {"beta1", params.beta1},
                        {"beta2", params.beta2},
                        {"degenerate_fallback", params.degenerate_fallback},
                        {"rhythm", params.rhythm}}
                           .dump() +
                       "\n");
      manifest.add_artifact("timegeo_params.json");
      require(!homes.empty(), "timegeo: no home cells in the ingested corpus");
      trajs.resize(static_cast<std::size_t>(cfg.n_users));
      parallel_for(static_cast<std::size_t>(cfg.n_users), cfg.threads, [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, "baseline-timegeo", std::uint64_t(i)));
        const CellId home = homes[rng.uniform_int(homes.size())];
        trajs[i] = timegeo_generate(params, home, cfg.days, cfg.start_day, grid, rng);
        trajs[i].user_id = std::int64_t(i) + 1;
      });
    });
  }
  manifest.stage("write", [&] {
    atomic_write(detail::out_path(cfg, which + ".csv"), trajectories_to_csv(trajs));
  });
  manifest.add_artifact(which + ".csv");
  manifest.write(cfg.output_dir);
}

struct EvaluateResult {
  MetricReport report;
};

inline MetricReport evaluate_corpora(const PipelineConfig& cfg,
                                     const std::vector<Trajectory>& gen,
                                     const std::vector<Trajectory>& truth,
                                     const std::vector<Trajectory>* truth2) {
  const Grid grid = cfg.grid();
  MetricReport rep;
  rep.probability_bins = cfg.probability_bins;
  rep.nmf_dim = cfg.nmf_rank_eval;
  rep.spatial_bins_per_dim = cfg.bins_per_dim;

  // physical law
  rep.ks_jump = ks_statistic(jump_sizes(gen), jump_sizes(truth));
  rep.ks_daily_visits = ks_statistic(daily_visit_counts(gen, grid), daily_visit_counts(truth, grid));

  // activity features need role sequences; derive them from both corpora with
  // the same ingestion settings so the comparison is generator-agnostic
  PipelineConfig eval_cfg = cfg;
  eval_cfg.staypoint.min_stay_s = cfg.eval_min_stay_s;
  const auto gen_users = detail::ingest_corpus(gen, eval_cfg);
  const auto truth_users = detail::ingest_corpus(truth, eval_cfg);
  std::vector<RoleSequence> gen_roles, truth_roles;
  std::vector<LifePattern> gen_patterns, truth_patterns;
  for (const auto& u : gen_users) {
    gen_roles.push_back(u.roles);
    gen_patterns.push_back(u.pattern);
  }
  for (const auto& u : truth_users) {
    truth_roles.push_back(u.roles);
    truth_patterns.push_back(u.pattern);
  }
  rep.activity_mae = activity_mae(activity_profile(gen_roles, cfg.L),
                                  activity_profile(truth_roles, cfg.L));
  const auto js_home = hourly_user_distribution_js(gen_roles, truth_roles, kRoleHome,
                                                   cfg.probability_bins);
  const auto js_work = hourly_user_distribution_js(gen_roles, truth_roles, kRoleWork,
                                                   cfg.probability_bins);
  rep.hourly_js = 0.5 * (js_home.mean + js_work.mean);
  rep.hourly_js_home = js_home.per_hour;
  rep.hourly_js_work = js_work.per_hour;
  rep.pattern_js_3d =
      pattern_distribution_js(gen_patterns, truth_patterns, cfg.nmf_rank_eval, cfg.bins_per_dim,
                              derive_seed(cfg.seed, "eval-nmf"), cfg.eval_nmf_iters);

  // spatio-temporal
  rep.grid_r2 = compare_grid_population(gen, truth, grid);
  rep.od_r2 = compare_od(gen, truth, grid);
  if (truth2 != nullptr) {
    rep.natural_grid_r2 = compare_grid_population(truth, *truth2, grid);
    rep.natural_od_r2 = compare_od(truth, *truth2, grid);
  } else {
    const auto [g, o] = natural_fluctuation(truth, grid, derive_seed(cfg.seed, "eval-split"));
    rep.natural_grid_r2 = g;
    rep.natural_od_r2 = o;
  }
  return rep;
}

inline json report_to_json(const MetricReport& r) {
  return json{{"format", "geoavatar-report-v1"},
              {"ks_jump", r.ks_jump},
              {"ks_daily_visits", r.ks_daily_visits},
              {"activity_mae", r.activity_mae},
              {"hourly_js", r.hourly_js},
              {"pattern_js_3d", r.pattern_js_3d},
              {"grid_r2", r.grid_r2},
              {"od_r2", r.od_r2},
              {"natural_grid_r2", r.natural_grid_r2},
              {"natural_od_r2", r.natural_od_r2},
              {"hourly_js_home", r.hourly_js_home},
              {"hourly_js_work", r.hourly_js_work},
              {"params",
               {{"probability_bins", r.probability_bins},
                {"nmf_dim", r.nmf_dim},
                {"spatial_bins_per_dim", r.spatial_bins_per_dim}}}};
}

inline MetricReport cmd_evaluate(const PipelineConfig& cfg, const std::string& gen_path,
                                 const std::string& truth_path,
                                 const std::string& truth2_path = "") {
  detail::require_artifact(gen_path, "generate (or baseline)");
  detail::require_artifact(truth_path, "fixture");
  detail::ensure_output_dir(cfg);
  RunManifest manifest(cfg, "evaluate");
  manifest.add_input(gen_path);
  manifest.add_input(truth_path);

  std::vector<Trajectory> gen, truth, truth2;
  manifest.stage("read", [&] {
    gen = trajectories_from_csv(read_file(gen_path));
    truth = trajectories_from_csv(read_file(truth_path));
    if (!truth2_path.empty()) {
      detail::require_artifact(truth2_path, "fixture");
      truth2 = trajectories_from_csv(read_file(truth2_path));
      manifest.add_input(truth2_path);
    }
  });
  MetricReport rep;
  manifest.stage("metrics", [&] {
    rep = evaluate_corpora(cfg, gen, truth, truth2_path.empty() ? nullptr : &truth2);
  });
  manifest.stage("write", [&] {
    atomic_write(detail::out_path(cfg, "report.json"), report_to_json(rep).dump(2) + "\n");
    // plot data: jump-size quantiles and daily-visit histograms
    auto quantile_csv = [&](std::vector<double> a, std::vector<double> b) {
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      std::string out = "q,gen,truth\n";
      for (int q = 0; q <= 1000; ++q) {
        const double frac = q / 1000.0;
        auto pick = [&](const std::vector<double>& v) {
          if (v.empty()) return 0.0;
          const std::size_t i = std::min(v.size() - 1, static_cast<std::size_t>(frac * double(v.size())));
          return v[i];
        };
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.3f,%.9g,%.9g\n", frac, pick(a), pick(b));
        out += buf;
      }
      return out;
    };
    atomic_write(detail::out_path(cfg, "jump_quantiles.csv"),
                 quantile_csv(jump_sizes(gen), jump_sizes(truth)));
    const Grid grid = cfg.grid();
    auto hist_csv = [&](const std::vector<double>& a, const std::vector<double>& b) {
      std::map<int, std::pair<double, double>> h;
      for (double v : a) h[int(v)].first += 1.0;
      for (double v : b) h[int(v)].second += 1.0;
      std::string out = "cells,gen,truth\n";
      for (const auto& [k, v] : h)
        out += std::to_string(k) + "," + std::to_string(v.first) + "," +
               std::to_string(v.second) + "\n";
      return out;
    };
    atomic_write(detail::out_path(cfg, "daily_visits_hist.csv"),
                 hist_csv(daily_visit_counts(gen, grid), daily_visit_counts(truth, grid)));
    manifest.add_artifact("report.json");
    manifest.add_artifact("jump_quantiles.csv");
    manifest.add_artifact("daily_visits_hist.csv");
  });
  manifest.write(cfg.output_dir);
  return rep;
}

inline std::vector<ReconstructionRow> cmd_reconstruct(const PipelineConfig& cfg) {
  require_config(!cfg.input_csv.empty(), "reconstruct: paths.input_csv is required");
  require_config(!cfg.n_list.empty(), "reconstruct: metrics.n_list is empty");
  detail::require_artifact(cfg.input_csv, "fixture");
  detail::ensure_output_dir(cfg);
  RunManifest manifest(cfg, "reconstruct");
  manifest.add_input(cfg.input_csv);

  std::vector<Trajectory> trajs;
  manifest.stage("read", [&] { trajs = trajectories_from_csv(read_file(cfg.input_csv)); });
  std::vector<ReconstructionRow> rows;
  manifest.stage("experiment", [&] {
    rows = reconstruction_experiment(trajs, cfg.grid(), cfg.n_list, cfg.staypoint);
  });
  manifest.stage("write", [&] {
    std::string out = "N,static_r2,static_mse,dynamic_r2,dynamic_mse\n";
    for (const auto& r : rows) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", r.n, r.static_r2, r.static_mse,
                    r.dynamic_r2, r.dynamic_mse);
      out += buf;
    }
    atomic_write(detail::out_path(cfg, "reconstruction.csv"), out);
  });
  manifest.add_artifact("reconstruction.csv");
  manifest.write(cfg.output_dir);
  return rows;
}

}  // namespace geoavatar
