#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aqe/apps.hpp"
#include "aqe/config.hpp"
#include "aqe/dataset.hpp"
#include "aqe/eval.hpp"
#include "aqe/model.hpp"
#include "aqe/synth.hpp"
#include "aqe/world.hpp"

namespace aqe {

namespace fs = std::filesystem;

/// File names inside a dataset directory.
namespace dataset_files {
inline constexpr const char* kManifest = "manifest.csv";
inline constexpr const char* kTrain = "train.csv";
inline constexpr const char* kEval = "eval.csv";
inline constexpr const char* kGlobal = "global.csv";
inline constexpr const char* kInfo = "dataset.txt";
}  // namespace dataset_files

inline World open_world(const EngineConfig& cfg) {
  return World(load_world(cfg.data_dir, cfg.hampel_window, cfg.hampel_k));
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  fn(out);
  if (!out) throw Error("io", "write failed for " + path.string());
}

inline std::vector<DataRow> read_dataset(const fs::path& path, std::vector<std::string>* names = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open dataset " + path.string());
  std::vector<DataRow> rows;
  auto n = parse_dataset(in, rows, path.string());
  if (names) *names = std::move(n);
  return rows;
}

/// Stratified sample when every exposure category has rows; otherwise the
/// rows themselves, in order.
inline std::vector<DataRow> training_sample(std::span<const DataRow> rows, std::size_t per_category,
                                            std::uint64_t seed) {
  const auto h = category_histogram(rows);
  for (auto c : h)
    if (c == 0) {
      log_warn("an exposure category is empty; training on all " + std::to_string(rows.size()) + " rows");
      return {rows.begin(), rows.end()};
    }
  return stratified_sample(rows, per_category, seed);
}

// synth ----------------------------------------------------------------------------

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t hours = 336;
  std::size_t stations = 60;
  std::size_t sparse_stations = 5;  // 0: no sparse region
  std::size_t sparse_record_hours = 200;
};

/// Two-region default world: a dense metro area and a sparse region whose
/// few stations have a short record.
inline WorldSpec synth_spec(const SynthOptions& o) {
  WorldSpec spec;
  spec.seed = o.seed;
  spec.hours = o.hours;
  spec.regions.front().stations = o.stations;
  if (o.sparse_stations > 0) {
    RegionSpec sp;
    sp.name = "sparse";
    sp.center_lat = 45.76;
    sp.center_lon = 4.84;
    sp.stations = o.sparse_stations;
    sp.road_count = 220;
    sp.industry_zones = 1;
    sp.power_plants = 0;
    sp.emission_scale = 1.2;
    sp.background_scale = 0.85;
    sp.record_hours = o.sparse_record_hours;
    spec.regions.push_back(sp);
  }
  return spec;
}

inline void cmd_synth(const SynthOptions& o, const fs::path& out_dir) {
  const auto spec = synth_spec(o);
  auto sw = generate_synthetic_world(spec);
  save_world(out_dir, sw.data);
  log_info("wrote synthetic world with " + std::to_string(sw.data.stations.size()) + " stations to " +
           out_dir.string());
}

// build-dataset ----------------------------------------------------------------------

struct DatasetSummary {
  std::string region;
  FeaturePreset preset = FeaturePreset::Full;
  std::size_t train_rows = 0, eval_rows = 0, global_rows = 0;
};

/// Training station ids of every region with enough stations to split.
inline std::vector<std::string> all_training_stations(const World& world, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& r : world.regions()) {
    std::vector<std::string> in_region;
    for (auto i : world.stations_in_region(r.name)) in_region.push_back(world.stations()[i].id);
    if (in_region.size() < 5) {
      log_warn("region '" + r.name + "' has fewer than 5 stations and is left out of the global dataset");
      continue;
    }
    auto s = split_stations(std::move(in_region), seed);
    ids.insert(ids.end(), s.train.begin(), s.train.end());
  }
  return ids;
}

inline DatasetSummary cmd_build_dataset(const EngineConfig& cfg, const std::string& region, const fs::path& out_dir) {
  cfg.validate();
  const World world = open_world(cfg);
  const auto& reg = world.region(region);
  const auto bp = cfg.load_breakpoints_or_default();
  const FeatureLayout layout(cfg.features(reg.preset));
  const auto split = split_region(world, region, cfg.split_seed);
  const auto hours = all_hours(world);
  const auto train = build_rows(world, split.train, hours, layout, bp);
  const auto eval = build_rows(world, split.eval, hours, layout, bp);

  namespace df = dataset_files;
  DatasetSummary sum{region, reg.preset, train.size(), eval.size(), 0};
  write_file(out_dir / df::kManifest, [&](std::ostream& o) {
    o << "station_id,set,region\n";
    for (const auto& id : split.train) o << id << ",train," << region << '\n';
    for (const auto& id : split.eval) o << id << ",eval," << region << '\n';
  });
  write_file(out_dir / df::kTrain, [&](std::ostream& o) { write_dataset(o, layout.names(), train); });
  write_file(out_dir / df::kEval, [&](std::ostream& o) { write_dataset(o, layout.names(), eval); });
  std::error_code ec;
  fs::remove(out_dir / df::kGlobal, ec);
  if (train.size() < cfg.transfer_threshold) {
    const auto ids = all_training_stations(world, cfg.split_seed);
    const auto global = build_rows(world, ids, hours, layout, bp);
    sum.global_rows = global.size();
    write_file(out_dir / df::kGlobal, [&](std::ostream& o) { write_dataset(o, layout.names(), global); });
  }
  write_file(out_dir / df::kInfo, [&](std::ostream& o) {
    o << "region = " << region << "\npreset = " << to_string(reg.preset) << "\nsplit_seed = " << cfg.split_seed
      << "\ntrain_rows = " << sum.train_rows << "\neval_rows = " << sum.eval_rows
      << "\nglobal_rows = " << sum.global_rows << "\nconfig = " << cfg.fingerprint() << '\n';
  });
  return sum;
}

struct Manifest {
  std::vector<std::string> train, eval;
  std::string region;
};

inline Manifest read_manifest(const fs::path& dataset_dir) {
  const auto path = dataset_dir / dataset_files::kManifest;
  Manifest m;
  auto in = detail::open_in(path);
  detail::read_csv(in, path.string(), "station_id,set,region", [&](const std::vector<std::string_view>& f, std::size_t line) {
    detail::check_fields(f, 3, path.string(), line);
    if (f[1] == "train") m.train.emplace_back(f[0]);
    else if (f[1] == "eval") m.eval.emplace_back(f[0]);
    else throw IngestionError(path.string(), line, "set must be train or eval");
    m.region = std::string(f[2]);
  });
  return m;
}

// train --------------------------------------------------------------------------------

struct TrainSummary {
  bool transfer = false;
  std::string fingerprint;
  std::string frozen_fingerprint;
  std::string global_frozen_fingerprint;  // set on the transfer path
  std::vector<double> loss_trace;
};

/// Only the full preset has a traffic feature.
inline FeaturePreset preset_of(const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (n.starts_with("Traffic_")) return FeaturePreset::Full;
  return FeaturePreset::Reduced;
}

inline void write_trace(const fs::path& path, const std::vector<double>& trace) {
  write_file(path, [&](std::ostream& o) {
    o << "epoch,loss\n";
    for (std::size_t e = 0; e < trace.size(); ++e) o << e + 1 << ',' << format_double(trace[e]) << '\n';
  });
}

/// Trains a regional model, or a global model plus output-layer transfer when
/// the regional training set is smaller than the configured threshold.
inline TrainSummary cmd_train(const EngineConfig& cfg, const fs::path& dataset_dir, const fs::path& model_out) {
  namespace df = dataset_files;
  std::vector<std::string> names;
  const auto rows = read_dataset(dataset_dir / df::kTrain, &names);
  if (rows.empty()) throw UndefinedInput("training dataset is empty");
  const auto preset = preset_of(names);
  const auto regional = training_sample(rows, cfg.samples_per_category, cfg.sample_seed);
  TrainSummary s;
  if (rows.size() >= cfg.transfer_threshold) {
    log_info("direct training on " + std::to_string(rows.size()) + " regional rows");
    auto res = train(regional, cfg.train(cfg.epochs), names, preset);
    save_model(model_out, res.model);
    s.loss_trace = std::move(res.loss_trace);
    s.fingerprint = model_fingerprint(res.model);
    s.frozen_fingerprint = frozen_fingerprint(res.model);
  } else {
    std::vector<std::string> gnames;
    const auto grows = read_dataset(dataset_dir / df::kGlobal, &gnames);
    if (gnames != names) throw DimensionMismatch("global and regional datasets have different features");
    log_info("transfer path: " + std::to_string(rows.size()) + " regional rows is below the threshold of " +
             std::to_string(cfg.transfer_threshold));
    auto global = train(training_sample(grows, cfg.samples_per_category, cfg.sample_seed), cfg.train(cfg.epochs),
                        names, preset);
    auto global_path = model_out;
    global_path += ".global";
    save_model(global_path, global.model);
    write_trace(global_path.string() + ".trace.csv", global.loss_trace);
    auto res = transfer_fit(global.model, regional, cfg.train(cfg.transfer_epochs), names);
    save_model(model_out, res.model);
    s.transfer = true;
    s.loss_trace = std::move(res.loss_trace);
    s.fingerprint = model_fingerprint(res.model);
    s.frozen_fingerprint = frozen_fingerprint(res.model);
    s.global_frozen_fingerprint = frozen_fingerprint(global.model);
    log_info("frozen layers " + s.frozen_fingerprint + " (global " + s.global_frozen_fingerprint + ")");
  }
  write_trace(model_out.string() + ".trace.csv", s.loss_trace);
  return s;
}

// eval -------------------------------------------------------------------------------------

inline EvalReport cmd_eval(const EngineConfig& cfg, const fs::path& dataset_dir, const fs::path& model_path,
                           const fs::path& report_out) {
  cfg.validate();
  const auto model = load_model(model_path);
  std::vector<std::string> names;
  const auto rows = read_dataset(dataset_dir / dataset_files::kEval, &names);
  if (!model.feature_names.empty() && names != model.feature_names)
    throw DimensionMismatch("model features do not match the evaluation dataset");
  const auto manifest = read_manifest(dataset_dir);
  const World world = open_world(cfg);
  auto rep = evaluate(world, model, rows, manifest.train);
  rep.config_fingerprint = cfg.fingerprint();
  write_file(report_out, [&](std::ostream& o) { write_report_csv(o, rep); });
  auto text = report_out;
  text.replace_extension(".txt");
  write_file(text, [&](std::ostream& o) { write_report_text(o, rep); });
  return rep;
}

// map / route / pdp ---------------------------------------------------------------------------

inline FeatureLayout layout_for(const EngineConfig& cfg, const MLPModel& model) {
  FeatureLayout layout(cfg.features(model.preset));
  check_model_layout(model, layout);
  return layout;
}

inline std::size_t hour_for(const World& world, const std::string& time) {
  if (world.hours().empty()) throw UndefinedInput("the world has no timestamps");
  if (time.empty()) return world.hours().size() - 1;
  auto h = parse_hour_rounded(time);
  if (!h) throw InvalidParameter("bad time '" + time + "' (expected YYYY-MM-DDTHH:MMZ)");
  return *world.nearest_hour_index(*h);
}

inline GridMap cmd_map(const EngineConfig& cfg, const fs::path& model_path, const std::string& region,
                       const std::string& time, const fs::path& out, std::optional<BoundingBox> bbox = std::nullopt) {
  cfg.validate();
  const auto model = load_model(model_path);
  const auto layout = layout_for(cfg, model);
  const World world = open_world(cfg);
  const auto box = bbox ? *bbox : world.region(region).bbox;
  auto g = render_grid(world, model, layout, box, cfg.cell_m, hour_for(world, time), cfg.load_breakpoints_or_default());
  write_file(out, [&](std::ostream& o) { write_grid_csv(o, g); });
  return g;
}

/// Road graph of the segments whose midpoints lie in the region.
inline RoadGraph region_graph(const World& world, const std::string& region) {
  const auto& box = world.region(region).bbox;
  std::vector<RoadSegment> segs;
  for (std::size_t i = 0; i < world.roads().size(); ++i)
    if (box.contains(world.road_midpoints()[i])) segs.push_back(world.roads()[i]);
  return build_graph(segs);
}

inline RoutePlan cmd_route(const EngineConfig& cfg, const fs::path& model_path, const std::string& region,
                           const std::string& time, const GeoPoint& from, const GeoPoint& to, const fs::path& out) {
  cfg.validate();
  const auto model = load_model(model_path);
  const auto layout = layout_for(cfg, model);
  const World world = open_world(cfg);
  auto g = region_graph(world, region);
  annotate_paqi(g, world, model, layout, hour_for(world, time), cfg.load_breakpoints_or_default());
  const auto plan = route(g, g.nearest_node(from), g.nearest_node(to));
  write_file(out, [&](std::ostream& o) { o << route_geojson(g, plan).dump(2) << '\n'; });
  return plan;
}

inline PdpCurve cmd_pdp(const EngineConfig& cfg, const fs::path& dataset_dir, const fs::path& model_path,
                        const std::string& feature, const fs::path& out) {
  const auto model = load_model(model_path);
  const auto rows = read_dataset(dataset_dir / dataset_files::kEval);
  auto c = partial_dependence(model, rows, feature, cfg.pdp_points, cfg.pdp_rows, cfg.pdp_seed);
  write_file(out, [&](std::ostream& o) { write_pdp_csv(o, c); });
  return c;
}

}  // namespace aqe
