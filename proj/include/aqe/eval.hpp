#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "aqe/dataset.hpp"
#include "aqe/model.hpp"
#include "aqe/world.hpp"

namespace aqe {

/// Value of the nearest station among `candidates` (station indices) that
/// reports pollutant p at the given hour. Ties go to the smaller station id.
inline std::optional<double> nearest_station_value(const World& world, std::size_t hour_idx, const GeoPoint& l,
                                                   Pollutant p, std::span<const std::size_t> candidates) {
  const auto values = world.values_at(hour_idx);
  const auto pi = index_of(p);
  std::optional<double> best;
  double best_d = 0;
  const std::string* best_id = nullptr;
  for (auto s : candidates) {
    const auto& v = values[s][pi];
    if (!v) continue;
    const auto& st = world.stations()[s];
    const double d = distance_km(l, st.location);
    if (!best || d < best_d || (d == best_d && st.id < *best_id)) {
      best = v;
      best_d = d;
      best_id = &st.id;
    }
  }
  return best;
}

inline std::vector<std::size_t> station_indices(const World& world, std::span<const std::string> ids) {
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    auto i = world.station_index_of(id);
    if (!i) throw NotFound("unknown station '" + id + "'");
    out.push_back(*i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// 100·(model − benchmark)/benchmark. Negative means the model is better.
inline double improvement_pct(double model_msle, double benchmark_msle) {
  if (!(benchmark_msle > 0.0)) throw UndefinedInput("benchmark MSLE must be positive to compute an improvement");
  return 100.0 * (model_msle - benchmark_msle) / benchmark_msle;
}

struct PollutantScore {
  std::size_t n = 0;            // paired (row, pollutant) cases
  std::size_t skipped = 0;      // target present but no benchmark value
  double model_msle = kNaN;
  double benchmark_msle = kNaN;
  double improvement = kNaN;
};

struct RegionScores {
  std::string region;
  std::array<PollutantScore, kNumPollutants> per_pollutant{};
  PollutantScore overall;  // pooled over all pollutants
};

struct EvalReport {
  std::string config_fingerprint;
  std::vector<RegionScores> regions;  // sorted by name
  RegionScores all;                   // every row, region "ALL"
};

namespace detail {

struct ScoreSums {
  std::array<double, kNumPollutants> model{}, bench{};
  double model_all = 0, bench_all = 0;
};

inline void finish_score(PollutantScore& s, double model_sum, double bench_sum) {
  if (s.n == 0) return;
  s.model_msle = model_sum / static_cast<double>(s.n);
  s.benchmark_msle = bench_sum / static_cast<double>(s.n);
  if (s.benchmark_msle > 0.0) s.improvement = improvement_pct(s.model_msle, s.benchmark_msle);
}

inline void finish_region(RegionScores& r, const ScoreSums& sums) {
  for (std::size_t p = 0; p < kNumPollutants; ++p) finish_score(r.per_pollutant[p], sums.model[p], sums.bench[p]);
  finish_score(r.overall, sums.model_all, sums.bench_all);
}

}  // namespace detail

/// Scores model predictions against the nearest-training-station benchmark on
/// held-out rows. Cases where the benchmark has no value are left out of both
/// scores.
inline EvalReport evaluate(const World& world, std::span<const Concentrations> predictions,
                           std::span<const DataRow> rows, std::span<const std::string> train_station_ids) {
  if (rows.empty()) throw UndefinedInput("evaluation set is empty");
  if (predictions.size() != rows.size()) throw DimensionMismatch("one prediction per row is required");
  const auto candidates = station_indices(world, train_station_ids);
  std::vector<MaybeConcentrations> bench(rows.size());
  parallel_for(rows.size(), [&](std::size_t r) {
    const auto& row = rows[r];
    const auto si = world.station_index_of(row.station_id);
    const auto hi = world.hour_index(row.timestamp);
    if (!si || !hi) throw NotFound("row references an unknown station or hour");
    const auto& loc = world.stations()[*si].location;
    for (auto p : kPollutants)
      if (row.targets[index_of(p)]) bench[r][index_of(p)] = nearest_station_value(world, *hi, loc, p, candidates);
  });

  std::map<std::string, std::pair<RegionScores, detail::ScoreSums>> by_region;
  EvalReport rep;
  rep.all.region = "ALL";
  detail::ScoreSums all_sums;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& [reg, sums] = by_region[rows[r].region];
    reg.region = rows[r].region;
    for (std::size_t p = 0; p < kNumPollutants; ++p) {
      const auto& y = rows[r].targets[p];
      if (!y) continue;
      if (!bench[r][p]) {
        ++reg.per_pollutant[p].skipped, ++reg.overall.skipped;
        ++rep.all.per_pollutant[p].skipped, ++rep.all.overall.skipped;
        continue;
      }
      const double me = squared_log_error(predictions[r][p], *y);
      const double be = squared_log_error(*bench[r][p], *y);
      for (auto* s : {&sums, &all_sums}) {
        s->model[p] += me;
        s->bench[p] += be;
        s->model_all += me;
        s->bench_all += be;
      }
      ++reg.per_pollutant[p].n, ++reg.overall.n;
      ++rep.all.per_pollutant[p].n, ++rep.all.overall.n;
    }
  }
  for (auto& [name, entry] : by_region) {
    detail::finish_region(entry.first, entry.second);
    rep.regions.push_back(entry.first);
  }
  detail::finish_region(rep.all, all_sums);
  return rep;
}

inline std::vector<Concentrations> predict_rows(const MLPModel& model, std::span<const DataRow> rows) {
  std::vector<Concentrations> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t r) { out[r] = predict(model, rows[r].features.values); });
  return out;
}

inline EvalReport evaluate(const World& world, const MLPModel& model, std::span<const DataRow> rows,
                           std::span<const std::string> train_station_ids) {
  const auto preds = predict_rows(model, rows);
  return evaluate(world, preds, rows, train_station_ids);
}

/// Masked MSLE of the model on rows (no benchmark pairing).
inline double model_msle(const MLPModel& model, std::span<const DataRow> rows) {
  std::vector<RawOutputs> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t r) { out[r] = forward(model, rows[r].features.values); });
  std::vector<MaybeConcentrations> targets;
  targets.reserve(rows.size());
  for (const auto& r : rows) targets.push_back(r.targets);
  return msle_loss(out, targets);
}

inline constexpr std::string_view kReportHeader =
    "region,pollutant,n,skipped,model_msle,benchmark_msle,improvement_pct,config";

inline void write_report_csv(std::ostream& out, const EvalReport& rep) {
  out << kReportHeader << '\n';
  auto block = [&](const RegionScores& r) {
    auto line = [&](std::string_view name, const PollutantScore& s) {
      out << r.region << ',' << name << ',' << s.n << ',' << s.skipped << ',' << format_double(s.model_msle) << ','
          << format_double(s.benchmark_msle) << ',' << format_double(s.improvement) << ',' << rep.config_fingerprint
          << '\n';
    };
    for (auto p : kPollutants) line(name_of(p), r.per_pollutant[index_of(p)]);
    line("ALL", r.overall);
  };
  for (const auto& r : rep.regions) block(r);
  if (rep.regions.size() != 1) block(rep.all);
}

inline void write_report_text(std::ostream& out, const EvalReport& rep) {
  char buf[200];
  auto block = [&](const RegionScores& r) {
    std::snprintf(buf, sizeof buf, "%-12s %-9s %8s %12s %12s %10s\n", "region", "pollutant", "n", "model", "nearest",
                  "change%");
    out << buf;
    auto line = [&](std::string_view name, const PollutantScore& s) {
      auto num = [](double v, const char* fmt) {
        char b[40];
        if (std::isnan(v)) return std::string("n/a");
        std::snprintf(b, sizeof b, fmt, v);
        return std::string(b);
      };
      std::snprintf(buf, sizeof buf, "%-12s %-9s %8zu %12s %12s %10s\n", r.region.c_str(), std::string(name).c_str(),
                    s.n, num(s.model_msle, "%.4f").c_str(), num(s.benchmark_msle, "%.4f").c_str(),
                    num(s.improvement, "%+.1f").c_str());
      out << buf;
    };
    for (auto p : kPollutants) line(name_of(p), r.per_pollutant[index_of(p)]);
    line("ALL", r.overall);
  };
  for (const auto& r : rep.regions) block(r);
  if (rep.regions.size() != 1) block(rep.all);
  if (!rep.config_fingerprint.empty()) out << "config " << rep.config_fingerprint << '\n';
}

// Transfer comparison ------------------------------------------------------------

enum class ModelChoice { Global, Regional, Transfer };

inline std::string_view name_of(ModelChoice c) noexcept {
  switch (c) {
    case ModelChoice::Global: return "global";
    case ModelChoice::Regional: return "regional";
    case ModelChoice::Transfer: return "transfer";
  }
  return "?";
}

/// Lowest MSLE wins; on ties transfer is preferred, then regional.
inline ModelChoice compare_transfer(double global_msle, double regional_msle, double transfer_msle) {
  for (double v : {global_msle, regional_msle, transfer_msle})
    if (!std::isfinite(v)) throw UndefinedInput("compare_transfer needs finite scores");
  if (transfer_msle <= global_msle && transfer_msle <= regional_msle) return ModelChoice::Transfer;
  if (regional_msle <= global_msle) return ModelChoice::Regional;
  return ModelChoice::Global;
}

// Partial dependence ---------------------------------------------------------------

struct PdpCurve {
  std::string feature;
  std::vector<double> levels;   // quantile level of each grid point
  std::vector<double> grid;     // feature value
  std::vector<Concentrations> mean_prediction;
};

/// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw UndefinedInput("quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean prediction with one feature forced to each point of a quantile grid
/// (levels k/(points-1)), over a seeded subsample of at most `max_rows` rows.
inline PdpCurve partial_dependence(const MLPModel& model, std::span<const DataRow> rows, const std::string& feature,
                                   std::size_t points = 20, std::size_t max_rows = 2000, std::uint64_t seed = 7) {
  if (points < 2) throw InvalidParameter("partial dependence needs at least 2 grid points");
  auto it = std::find(model.feature_names.begin(), model.feature_names.end(), feature);
  if (it == model.feature_names.end()) throw NotFound("model has no feature '" + feature + "'");
  const auto f = static_cast<std::size_t>(it - model.feature_names.begin());
  if (rows.empty()) throw UndefinedInput("partial dependence needs rows");

  std::vector<std::size_t> idx(rows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (idx.size() > max_rows) {
    Rng rng(seed);
    rng.shuffle(std::span(idx));
    idx.resize(max_rows);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<double> present;
  for (auto i : idx)
    if (!std::isnan(rows[i].features.values[f])) present.push_back(rows[i].features.values[f]);
  if (present.empty()) throw UndefinedInput("feature '" + feature + "' is never present");
  std::sort(present.begin(), present.end());

  PdpCurve c;
  c.feature = feature;
  for (std::size_t k = 0; k < points; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(points - 1);
    c.levels.push_back(q);
    c.grid.push_back(quantile_sorted(present, q));
  }
  c.mean_prediction.assign(points, Concentrations{});
  std::vector<std::array<double, kNumPollutants>> sums(points * idx.size());
  parallel_for(idx.size(), [&](std::size_t r) {
    std::vector<double> x = rows[idx[r]].features.values;
    for (std::size_t k = 0; k < points; ++k) {
      x[f] = c.grid[k];
      sums[r * points + k] = predict(model, x);
    }
  });
  for (std::size_t k = 0; k < points; ++k) {
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t p = 0; p < kNumPollutants; ++p) c.mean_prediction[k][p] += sums[r * points + k][p];
    for (auto& v : c.mean_prediction[k]) v /= static_cast<double>(idx.size());
  }
  return c;
}

inline void write_pdp_csv(std::ostream& out, const PdpCurve& c) {
  out << "feature,level,value,no2,o3,pm25,pm10\n";
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    out << c.feature << ',' << format_double(c.levels[k]) << ',' << format_double(c.grid[k]);
    for (double v : c.mean_prediction[k]) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace aqe
