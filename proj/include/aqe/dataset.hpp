#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "aqe/core.hpp"
#include "aqe/features.hpp"
#include "aqe/random.hpp"
#include "aqe/world.hpp"

namespace aqe {

// Index ------------------------------------------------------------------------

enum class ExposureCategory : int { Low = 0, Moderate = 1, High = 2, VeryHigh = 3 };

inline constexpr std::array<ExposureCategory, 4> kCategories = {ExposureCategory::Low, ExposureCategory::Moderate,
                                                                ExposureCategory::High, ExposureCategory::VeryHigh};

inline std::string_view name_of(ExposureCategory c) noexcept {
  switch (c) {
    case ExposureCategory::Low: return "Low";
    case ExposureCategory::Moderate: return "Moderate";
    case ExposureCategory::High: return "High";
    case ExposureCategory::VeryHigh: return "VeryHigh";
  }
  return "Low";
}

inline std::optional<ExposureCategory> parse_category(std::string_view s) {
  for (auto c : kCategories)
    if (s == name_of(c)) return c;
  return std::nullopt;
}

/// Piecewise-linear per-pollutant index plus the category thresholds.
struct AqiBreakpoints {
  using Nodes = std::vector<std::pair<double, double>>;  // (µg/m³, index)
  std::array<Nodes, kNumPollutants> nodes;
  std::array<double, 3> thresholds{20.0, 50.0, 100.0};  // Low | Moderate | High | VeryHigh

  /// Guideline value mapped to index 50, anchored at zero, continued with the same slope.
  static AqiBreakpoints who_default() {
    AqiBreakpoints b;
    const std::array<double, kNumPollutants> guideline{40.0, 100.0, 25.0, 50.0};
    for (std::size_t p = 0; p < kNumPollutants; ++p)
      b.nodes[p] = {{0.0, 0.0}, {guideline[p], 50.0}, {2 * guideline[p], 100.0}};
    return b;
  }

  void validate() const {
    for (std::size_t p = 0; p < kNumPollutants; ++p) {
      const auto& n = nodes[p];
      const std::string who(name_of(kPollutants[p]));
      if (n.size() < 2) throw InvalidParameter(who + ": at least two breakpoints required");
      if (n.front().first != 0.0 || n.front().second != 0.0)
        throw InvalidParameter(who + ": first breakpoint must be (0, 0)");
      for (std::size_t i = 1; i < n.size(); ++i)
        if (!(n[i].first > n[i - 1].first) || !(n[i].second > n[i - 1].second))
          throw InvalidParameter(who + ": breakpoints must increase strictly in both coordinates");
    }
    if (!(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2]))
      throw InvalidParameter("category thresholds must increase");
  }
};

/// Reads the breakpoints file: `key = value` lines, `#` comments.
///   no2 = 0:0, 40:50, 80:100          (one line per pollutant, concentration:index)
///   thresholds = 20, 50, 100
/// Missing pollutants keep their default nodes.
inline AqiBreakpoints parse_breakpoints(std::istream& in, const std::string& name = "breakpoints") {
  auto b = AqiBreakpoints::who_default();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto sv = trim(std::string_view(line).substr(0, line.find('#')));
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) throw IngestionError(name, lineno, "expected key = value");
    const auto key = trim(sv.substr(0, eq));
    const auto items = detail::split_csv(trim(sv.substr(eq + 1)));
    if (key == "thresholds") {
      if (items.size() != 3) throw IngestionError(name, lineno, "thresholds needs three values");
      for (std::size_t i = 0; i < 3; ++i) b.thresholds[i] = detail::require_double(items[i], name, lineno, "threshold");
      continue;
    }
    Pollutant p;
    try {
      p = parse_pollutant(key);
    } catch (const InvalidParameter&) {
      throw IngestionError(name, lineno, "unknown key '" + std::string(key) + "'");
    }
    AqiBreakpoints::Nodes nodes;
    for (auto item : items) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) throw IngestionError(name, lineno, "breakpoint must be concentration:index");
      nodes.emplace_back(detail::require_double(item.substr(0, colon), name, lineno, "concentration"),
                         detail::require_double(item.substr(colon + 1), name, lineno, "index"));
    }
    b.nodes[index_of(p)] = std::move(nodes);
  }
  try {
    b.validate();
  } catch (const InvalidParameter& e) {
    throw IngestionError(name, lineno, e.what());
  }
  return b;
}

inline AqiBreakpoints load_breakpoints(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_breakpoints(in, path.string());
}

inline void write_breakpoints(std::ostream& out, const AqiBreakpoints& b) {
  for (auto p : kPollutants) {
    out << column_of(p) << " = ";
    const auto& n = b.nodes[index_of(p)];
    for (std::size_t i = 0; i < n.size(); ++i)
      out << (i ? ", " : "") << format_double(n[i].first) << ':' << format_double(n[i].second);
    out << '\n';
  }
  out << "thresholds = " << format_double(b.thresholds[0]) << ", " << format_double(b.thresholds[1]) << ", "
      << format_double(b.thresholds[2]) << '\n';
}

/// Index of one pollutant: linear between nodes, last slope beyond the last node.
inline double pollutant_aqi(const AqiBreakpoints& b, Pollutant p, double concentration) {
  if (!(concentration >= 0.0)) throw InvalidParameter("concentration must be >= 0");
  const auto& n = b.nodes[index_of(p)];
  std::size_t i = 1;
  while (i + 1 < n.size() && concentration > n[i].first) ++i;
  const auto [c0, i0] = n[i - 1];
  const auto [c1, i1] = n[i];
  return i0 + (concentration - c0) * (i1 - i0) / (c1 - c0);
}

/// Global index: max over present pollutants.
inline double paqi(const AqiBreakpoints& b, const MaybeConcentrations& c) {
  std::optional<double> best;
  for (auto p : kPollutants) {
    const auto& v = c[index_of(p)];
    if (!v) continue;
    const double a = pollutant_aqi(b, p, *v);
    if (!best || a > *best) best = a;
  }
  if (!best) throw UndefinedInput("paqi needs at least one present pollutant");
  return *best;
}

inline double paqi(const AqiBreakpoints& b, const Concentrations& c) {
  MaybeConcentrations m;
  for (std::size_t i = 0; i < kNumPollutants; ++i) m[i] = c[i];
  return paqi(b, m);
}

/// Left-closed threshold lookup.
inline ExposureCategory categorize(const AqiBreakpoints& b, double index) {
  if (index < b.thresholds[0]) return ExposureCategory::Low;
  if (index < b.thresholds[1]) return ExposureCategory::Moderate;
  if (index < b.thresholds[2]) return ExposureCategory::High;
  return ExposureCategory::VeryHigh;
}

// Rows -------------------------------------------------------------------------

struct DataRow {
  FeatureVector features;
  MaybeConcentrations targets;
  std::string station_id;
  Hour timestamp;
  std::string region;
  ExposureCategory category = ExposureCategory::Low;

  bool operator==(const DataRow&) const = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> eval;
  std::uint64_t seed = 0;
};

/// Seeded shuffle of the station ids; the first round(0.8 n) go to training.
inline DatasetSplit split_stations(std::vector<std::string> station_ids, std::uint64_t seed) {
  if (station_ids.size() < 5) throw InvalidParameter("split needs at least 5 stations, got " + std::to_string(station_ids.size()));
  std::sort(station_ids.begin(), station_ids.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(station_ids));
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(station_ids.size())));
  DatasetSplit s;
  s.seed = seed;
  s.train.assign(station_ids.begin(), station_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.eval.assign(station_ids.begin() + static_cast<std::ptrdiff_t>(n_train), station_ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.eval.begin(), s.eval.end());
  return s;
}

inline DatasetSplit split_region(const World& world, const std::string& region, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (auto i : world.stations_in_region(region)) ids.push_back(world.stations()[i].id);
  return split_stations(std::move(ids), seed);
}

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Each index
/// must write only its own output slot.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// One row per (station, hour) with at least one present target; station
/// features leave the row's own station out. Rows are ordered by the station
/// list, then by hour.
inline std::vector<DataRow> build_rows(const World& world, std::span<const std::string> station_ids,
                                       std::span<const std::size_t> hour_indices, const FeatureLayout& layout,
                                       const AqiBreakpoints& breakpoints) {
  std::vector<std::vector<DataRow>> per_station(station_ids.size());
  parallel_for(station_ids.size(), [&](std::size_t k) {
    const auto si = world.station_index_of(station_ids[k]);
    if (!si) throw NotFound("unknown station '" + station_ids[k] + "'");
    const auto& st = world.stations()[*si];
    const std::array<std::size_t, 1> excluded{*si};
    LocationFeatures loc(world, layout, st.location, excluded);
    for (auto h : hour_indices) {
      const auto& targets = world.values_at(h)[*si];
      if (!any_present(targets)) continue;
      DataRow row;
      row.features = loc.evaluate(world, layout, h);
      row.targets = targets;
      row.station_id = st.id;
      row.timestamp = world.hours()[h];
      row.region = st.region;
      row.category = categorize(breakpoints, paqi(breakpoints, targets));
      per_station[k].push_back(std::move(row));
    }
  });
  std::vector<DataRow> out;
  for (auto& v : per_station)
    for (auto& r : v) out.push_back(std::move(r));
  return out;
}

inline std::vector<std::size_t> all_hours(const World& world) {
  std::vector<std::size_t> h(world.hours().size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = i;
  return h;
}

/// Draws exactly n rows with replacement from each category, category by
/// category. Returns indices into `rows`.
inline std::vector<std::size_t> stratified_sample_indices(std::span<const DataRow> rows, std::size_t n_per_category,
                                                          std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 4> by_cat;
  for (std::size_t i = 0; i < rows.size(); ++i) by_cat[static_cast<std::size_t>(rows[i].category)].push_back(i);
  for (auto c : kCategories)
    if (by_cat[static_cast<std::size_t>(c)].empty())
      throw InvalidParameter("exposure category " + std::string(name_of(c)) + " has no rows");
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(4 * n_per_category);
  for (const auto& pool : by_cat)
    for (std::size_t k = 0; k < n_per_category; ++k) out.push_back(pool[rng.index(pool.size())]);
  return out;
}

inline std::vector<DataRow> stratified_sample(std::span<const DataRow> rows, std::size_t n_per_category,
                                              std::uint64_t seed) {
  std::vector<DataRow> out;
  for (auto i : stratified_sample_indices(rows, n_per_category, seed)) out.push_back(rows[i]);
  return out;
}

inline std::array<std::size_t, 4> category_histogram(std::span<const DataRow> rows) {
  std::array<std::size_t, 4> h{};
  for (const auto& r : rows) ++h[static_cast<std::size_t>(r.category)];
  return h;
}

// Dataset CSV --------------------------------------------------------------------

inline void write_dataset(std::ostream& out, const std::vector<std::string>& feature_names, std::span<const DataRow> rows) {
  for (const auto& n : feature_names) out << n << ',';
  for (auto p : kPollutants) out << "target_" << column_of(p) << ',';
  out << "station_id,timestamp,region,category\n";
  for (const auto& r : rows) {
    if (r.features.size() != feature_names.size()) throw DimensionMismatch("row feature count differs from header");
    for (std::size_t i = 0; i < r.features.size(); ++i) {
      if (!r.features.na[i]) out << format_double(r.features.values[i]);
      out << ',';
    }
    for (const auto& t : r.targets) {
      if (t) out << format_double(*t);
      out << ',';
    }
    out << r.station_id << ',' << format_hour(r.timestamp) << ',' << r.region << ',' << name_of(r.category) << '\n';
  }
}

/// Reads a dataset written by write_dataset. Returns the feature names.
inline std::vector<std::string> parse_dataset(std::istream& in, std::vector<DataRow>& rows,
                                              const std::string& name = "dataset") {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> names;
  std::size_t nf = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto sv = trim(line);
    if (sv.empty()) continue;
    auto f = detail::split_csv(sv);
    if (names.empty() && nf == 0 && lineno == 1) {
      if (f.size() < kNumPollutants + 4) throw IngestionError(name, lineno, "bad dataset header");
      nf = f.size() - kNumPollutants - 4;
      for (std::size_t i = 0; i < nf; ++i) names.emplace_back(f[i]);
      for (std::size_t p = 0; p < kNumPollutants; ++p)
        if (f[nf + p] != "target_" + std::string(column_of(kPollutants[p])))
          throw IngestionError(name, lineno, "bad target column '" + std::string(f[nf + p]) + "'");
      continue;
    }
    detail::check_fields(f, nf + kNumPollutants + 4, name, lineno);
    DataRow r;
    r.features.values.resize(nf);
    r.features.na.assign(nf, 0);
    for (std::size_t i = 0; i < nf; ++i) {
      if (f[i].empty()) {
        r.features.values[i] = kNaN;
        r.features.na[i] = 1;
      } else {
        r.features.values[i] = detail::require_double(f[i], name, lineno, "feature");
      }
    }
    for (std::size_t p = 0; p < kNumPollutants; ++p)
      if (!f[nf + p].empty()) r.targets[p] = detail::require_double(f[nf + p], name, lineno, "target");
    r.station_id = std::string(f[nf + 4]);
    r.timestamp = detail::require_hour(f[nf + 5], name, lineno);
    r.region = std::string(f[nf + 6]);
    auto cat = parse_category(f[nf + 7]);
    if (!cat) throw IngestionError(name, lineno, "unknown category '" + std::string(f[nf + 7]) + "'");
    r.category = *cat;
    rows.push_back(std::move(r));
  }
  return names;
}

}  // namespace aqe
