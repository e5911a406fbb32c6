#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "aqe/geo.hpp"
#include "aqe/ingest.hpp"
#include "aqe/world.hpp"

namespace aqe {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct FeatureConfig {
  FeaturePreset preset = FeaturePreset::Full;
  std::vector<double> station_distances_km{1.0, 10.0, 100.0};
  double counter_distance_km = 10.0;
  double activity_distance_km = 0.1;
  KernelMode mode = KernelMode::Truncated;
  bool power_plants = false;
  double power_plant_distance_km = 10.0;

  void validate() const {
    if (station_distances_km.empty()) throw InvalidParameter("at least one station distance is required");
    for (double d : station_distances_km)
      if (!(d > 0.0)) throw InvalidParameter("station distances must be > 0");
    if (!(counter_distance_km > 0.0) || !(activity_distance_km > 0.0) || !(power_plant_distance_km > 0.0))
      throw InvalidParameter("feature distances must be > 0");
  }
};

/// Fuel weighting of plant capacity for the emission proxy.
inline double fuel_factor(Fuel f) noexcept {
  switch (f) {
    case Fuel::Coal: return 1.0;
    case Fuel::Oil: return 0.6;
    case Fuel::Gas: return 0.3;
  }
  return 1.0;
}

// Layout -----------------------------------------------------------------------

/// What a feature slot computes.
struct FeatureSpec {
  enum class Kind { Measures, Counter, CounterAny, Atmospheric, Traffic, Roads, MajorRoads, Land, Plants };
  Kind kind;
  double distance_km = 0;
  Pollutant pollutant = Pollutant::NO2;
  LandCover land = LandCover::Other;
  std::string name;
};

class FeatureLayout {
 public:
  explicit FeatureLayout(const FeatureConfig& cfg) : config_(cfg) {
    cfg.validate();
    using K = FeatureSpec::Kind;
    auto dist = [](double d) { return format_double(d); };
    for (double d : cfg.station_distances_km)
      for (auto p : kPollutants)
        add({K::Measures, d, p, {}, "StationsMeasures_" + dist(d) + "_" + std::string(name_of(p))});
    const double cd = cfg.counter_distance_km;
    if (cfg.preset == FeaturePreset::Full) {
      for (auto p : kPollutants)
        add({K::Counter, cd, p, {}, "StationsCounters_" + dist(cd) + "_" + std::string(name_of(p))});
    } else {
      add({K::CounterAny, cd, {}, {}, "StationsCounters_" + dist(cd)});
    }
    for (auto p : kPollutants) add({K::Atmospheric, 0, p, {}, "AtmosphericModel_" + std::string(name_of(p))});
    const double ad = cfg.activity_distance_km;
    const std::string suffix = "_" + dist(ad);
    if (cfg.preset == FeaturePreset::Full) add({K::Traffic, ad, {}, {}, "Traffic" + suffix});
    add({K::Roads, ad, {}, {}, "Roads" + suffix});
    add({K::MajorRoads, ad, {}, {}, "MajorRoads" + suffix});
    if (cfg.preset == FeaturePreset::Full) add({K::Land, ad, {}, LandCover::Industry, "Industry" + suffix});
    add({K::Land, ad, {}, LandCover::Residential, "Residential" + suffix});
    add({K::Land, ad, {}, LandCover::Green, "Green" + suffix});
    if (cfg.power_plants)
      add({K::Plants, cfg.power_plant_distance_km, {}, {}, "PowerPlants_" + dist(cfg.power_plant_distance_km)});
  }

  const FeatureConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return specs_.size(); }
  const std::vector<FeatureSpec>& specs() const noexcept { return specs_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

 private:
  void add(FeatureSpec s) {
    names_.push_back(s.name);
    specs_.push_back(std::move(s));
  }

  FeatureConfig config_;
  std::vector<FeatureSpec> specs_;
  std::vector<std::string> names_;
};

/// Feature values in layout order. NA slots hold NaN until imputed; `na` marks
/// every slot whose raw value was NA.
struct FeatureVector {
  std::vector<double> values;
  std::vector<std::uint8_t> na;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const FeatureVector& o) const {
    if (na != o.na || values.size() != o.values.size()) return false;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!(values[i] == o.values[i] || (std::isnan(values[i]) && std::isnan(o.values[i])))) return false;
    return true;
  }
};

/// Replaces NA slots by the given per-feature means.
inline void impute(FeatureVector& fv, std::span<const double> means) {
  if (means.size() != fv.size()) throw DimensionMismatch("imputation means do not match feature count");
  for (std::size_t i = 0; i < fv.size(); ++i)
    if (fv.na[i]) fv.values[i] = means[i];
}

// Individual features -------------------------------------------------------------

namespace detail {
inline bool is_excluded(std::size_t idx, std::span<const std::size_t> excluded) noexcept {
  return std::find(excluded.begin(), excluded.end(), idx) != excluded.end();
}
}  // namespace detail

/// Kernel-weighted mean of station measurements of p at one hour. NA when no
/// non-excluded station reports p.
inline std::optional<double> stations_measures(const World& world, std::size_t hour_idx, const GeoPoint& l,
                                               double d_km, Pollutant p, std::span<const std::size_t> excluded = {},
                                               KernelMode mode = KernelMode::Exact) {
  const auto values = world.values_at(hour_idx);
  double num = 0, den = 0;
  auto counts = [&](std::size_t i) { return values[i][index_of(p)] && !detail::is_excluded(i, excluded); };
  world.station_index().for_each_weighted(
      l, d_km, mode,
      [&](std::size_t i, double w) {
        if (!counts(i)) return;
        num += w * *values[i][index_of(p)];
        den += w;
      },
      counts);
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

/// Kernel weight mass of the stations reporting p at one hour.
inline double stations_counters(const World& world, std::size_t hour_idx, const GeoPoint& l, double d_km,
                                Pollutant p, std::span<const std::size_t> excluded = {},
                                KernelMode mode = KernelMode::Exact) {
  const auto values = world.values_at(hour_idx);
  double den = 0;
  auto counts = [&](std::size_t i) { return values[i][index_of(p)] && !detail::is_excluded(i, excluded); };
  world.station_index().for_each_weighted(
      l, d_km, mode, [&](std::size_t i, double w) { den += counts(i) ? w : 0.0; }, counts);
  return den;
}

/// Kernel weight mass of the stations reporting any pollutant at one hour.
inline double stations_counters_any(const World& world, std::size_t hour_idx, const GeoPoint& l, double d_km,
                                    std::span<const std::size_t> excluded = {}, KernelMode mode = KernelMode::Exact) {
  const auto values = world.values_at(hour_idx);
  double den = 0;
  auto counts = [&](std::size_t i) { return any_present(values[i]) && !detail::is_excluded(i, excluded); };
  world.station_index().for_each_weighted(
      l, d_km, mode, [&](std::size_t i, double w) { den += counts(i) ? w : 0.0; }, counts);
  return den;
}

inline bool grid_covers(const AtmosphericGrid& g, const GeoPoint& l) noexcept {
  return l.lat() >= g.lat0 && l.lat() <= g.max_lat() && l.lon() >= g.lon0 && l.lon() <= g.max_lon();
}

/// Bilinear interpolation inside the grid; NA outside. Edge and single-row or
/// single-column grids reduce to linear interpolation.
inline std::optional<double> bilinear(const AtmosphericGrid& g, const GeoPoint& l) {
  if (!grid_covers(g, l)) return std::nullopt;
  auto axis = [](double x, double x0, double dx, std::size_t n) {
    double f = (x - x0) / dx;
    if (std::abs(f - std::round(f)) < 1e-9) f = std::round(f);
    auto i0 = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(f))), n - 1);
    auto i1 = std::min(i0 + 1, n - 1);
    double t = i1 == i0 ? 0.0 : std::clamp(f - static_cast<double>(i0), 0.0, 1.0);
    return std::tuple{i0, i1, t};
  };
  auto [r0, r1, ty] = axis(l.lat(), g.lat0, g.dlat, g.nrows);
  auto [c0, c1, tx] = axis(l.lon(), g.lon0, g.dlon, g.ncols);
  const double v00 = g.at(r0, c0), v01 = g.at(r0, c1), v10 = g.at(r1, c0), v11 = g.at(r1, c1);
  return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
}

/// Picks the covering grid with the finest resolution (then smallest cell area,
/// then source id) and interpolates it.
inline std::optional<double> atmospheric_model_at(std::span<const AtmosphericGrid* const> grids, const GeoPoint& l) {
  const AtmosphericGrid* best = nullptr;
  for (const auto* g : grids) {
    if (!grid_covers(*g, l)) continue;
    if (!best) {
      best = g;
      continue;
    }
    auto key = [](const AtmosphericGrid* x) { return std::tuple(x->resolution_km, x->dlat * x->dlon, x->source_id); };
    if (key(g) < key(best)) best = g;
  }
  if (!best) return std::nullopt;
  return bilinear(*best, l);
}

inline std::optional<double> atmospheric_model_at(const World& world, std::size_t hour_idx, const GeoPoint& l,
                                                  Pollutant p) {
  std::vector<const AtmosphericGrid*> cands;
  for (auto gi : world.grids_at(hour_idx, p)) cands.push_back(&world.grids()[gi]);
  return atmospheric_model_at(cands, l);
}

/// Σ k_d(l, mid) · jam · length · functional class; unobserved segments add 0.
inline double traffic_feature(const World& world, std::size_t hour_idx, const GeoPoint& l, double d_km,
                              KernelMode mode = KernelMode::Exact) {
  const auto jam = world.jam_at(hour_idx);
  const auto& roads = world.roads();
  double sum = 0;
  auto counts = [&](std::size_t j) { return !std::isnan(jam[j]) && jam[j] > 0.0; };
  world.road_index().for_each_weighted(
      l, d_km, mode,
      [&](std::size_t j, double w) {
        if (counts(j)) sum += w * jam[j] * roads[j].length_km * roads[j].functional_class;
      },
      counts);
  return sum;
}

/// Kernel-weighted road length, optionally major roads only.
inline double road_density(const World& world, const GeoPoint& l, double d_km, bool major_only,
                           KernelMode mode = KernelMode::Exact) {
  const auto& roads = world.roads();
  double sum = 0;
  auto counts = [&](std::size_t j) { return !major_only || roads[j].major; };
  world.road_index().for_each_weighted(
      l, d_km, mode, [&](std::size_t j, double w) { sum += counts(j) ? w * roads[j].length_km : 0.0; }, counts);
  return sum;
}

/// Kernel-weighted share of land samples in `category`. NA when no sample lies
/// within the truncation radius of l.
inline std::optional<double> land_share(const World& world, const GeoPoint& l, double d_km, LandCover category,
                                        KernelMode mode = KernelMode::Exact) {
  bool any_near = false;
  world.land_index().for_each_within(l, kTruncationFactor * d_km, [&](std::size_t, double) { any_near = true; });
  if (!any_near) return std::nullopt;
  const auto& samples = world.land_cover();
  double num = 0, den = 0;
  auto in_category = [&](std::size_t s) { return samples[s].category == category; };
  world.land_index().for_each_weighted(l, d_km, mode, [&](std::size_t, double w) { den += w; });
  world.land_index().for_each_weighted(
      l, d_km, mode, [&](std::size_t s, double w) { num += in_category(s) ? w : 0.0; }, in_category);
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

/// Σ k_d(l, plant) · capacity · fuel factor.
inline double power_plant_feature(const World& world, const GeoPoint& l, double d_km,
                                  KernelMode mode = KernelMode::Exact) {
  const auto& plants = world.power_plants();
  double sum = 0;
  world.plant_index().for_each_weighted(l, d_km, mode, [&](std::size_t i, double w) {
    sum += w * plants[i].capacity_mw * fuel_factor(plants[i].fuel);
  });
  return sum;
}

// Feature vectors ----------------------------------------------------------------

/// Time-independent part of a location's features: kernel weights to stations
/// and traffic segments plus every static feature value.
class LocationFeatures {
 public:
  /// `excluded` stations are left out of every station feature.
  LocationFeatures(const World& world, const FeatureLayout& layout, const GeoPoint& l,
                   std::span<const std::size_t> excluded = {})
      : location_(l), excluded_(excluded.begin(), excluded.end()) {
    const auto& cfg = layout.config();
    const auto mode = cfg.mode;
    auto station_weights = [&](double d) {
      for (const auto& [dd, w] : station_w_)
        if (dd == d) return;
      std::vector<std::pair<std::size_t, double>> ws;
      auto counts = [&](std::size_t i) { return !detail::is_excluded(i, excluded_); };
      world.station_index().for_each_weighted(
          l, d, mode,
          [&](std::size_t i, double w) {
            if (counts(i)) ws.emplace_back(i, w);
          },
          counts);
      std::sort(ws.begin(), ws.end());
      station_w_.emplace_back(d, std::move(ws));
    };
    using K = FeatureSpec::Kind;
    static_.assign(layout.size(), kNaN);
    const auto& roads = world.roads();
    for (std::size_t f = 0; f < layout.size(); ++f) {
      const auto& s = layout.specs()[f];
      switch (s.kind) {
        case K::Measures:
        case K::Counter:
        case K::CounterAny: station_weights(s.distance_km); break;
        case K::Traffic:
          traffic_w_.clear();
          world.road_index().for_each_weighted(l, s.distance_km, mode, [&](std::size_t j, double w) {
            traffic_w_.emplace_back(j, w * roads[j].length_km * roads[j].functional_class);
          });
          std::sort(traffic_w_.begin(), traffic_w_.end());
          break;
        case K::Roads: static_[f] = road_density(world, l, s.distance_km, false, mode); break;
        case K::MajorRoads: static_[f] = road_density(world, l, s.distance_km, true, mode); break;
        case K::Land: static_[f] = land_share(world, l, s.distance_km, s.land, mode).value_or(kNaN); break;
        case K::Plants: static_[f] = power_plant_feature(world, l, s.distance_km, mode); break;
        case K::Atmospheric: break;
      }
    }
  }

  const GeoPoint& location() const noexcept { return location_; }

  /// Full feature vector at one hour.
  FeatureVector evaluate(const World& world, const FeatureLayout& layout, std::size_t hour_idx) const {
    using K = FeatureSpec::Kind;
    FeatureVector fv;
    fv.values.resize(layout.size());
    fv.na.assign(layout.size(), 0);
    const auto values = world.values_at(hour_idx);
    for (std::size_t f = 0; f < layout.size(); ++f) {
      const auto& s = layout.specs()[f];
      double v = kNaN;
      switch (s.kind) {
        case K::Measures: {
          double num = 0, den = 0;
          for (const auto& [i, w] : weights(s.distance_km)) {
            const auto& m = values[i][index_of(s.pollutant)];
            if (!m) continue;
            num += w * *m;
            den += w;
          }
          if (den > 0) v = num / den;
          break;
        }
        case K::Counter: {
          double den = 0;
          for (const auto& [i, w] : weights(s.distance_km))
            if (values[i][index_of(s.pollutant)]) den += w;
          v = den;
          break;
        }
        case K::CounterAny: {
          double den = 0;
          for (const auto& [i, w] : weights(s.distance_km))
            if (any_present(values[i])) den += w;
          v = den;
          break;
        }
        case K::Atmospheric: v = atmospheric_model_at(world, hour_idx, location_, s.pollutant).value_or(kNaN); break;
        case K::Traffic: {
          const auto jam = world.jam_at(hour_idx);
          double sum = 0;
          for (const auto& [j, w] : traffic_w_)
            if (!std::isnan(jam[j])) sum += w * jam[j];
          v = sum;
          break;
        }
        default: v = static_[f]; break;
      }
      fv.values[f] = v;
      fv.na[f] = std::isnan(v) ? 1 : 0;
    }
    return fv;
  }

 private:
  const std::vector<std::pair<std::size_t, double>>& weights(double d) const {
    for (const auto& [dd, w] : station_w_)
      if (dd == d) return w;
    throw InvalidParameter("station weights missing for distance " + format_double(d));
  }

  GeoPoint location_;
  std::vector<std::size_t> excluded_;
  std::vector<std::pair<double, std::vector<std::pair<std::size_t, double>>>> station_w_;
  std::vector<std::pair<std::size_t, double>> traffic_w_;
  std::vector<double> static_;
};

/// Assembles the layout's features at (l, hour). NA slots are filled from
/// `means` when given, otherwise left as NaN; the `na` mask is set either way.
inline FeatureVector compute_feature_vector(const World& world, const GeoPoint& l, std::size_t hour_idx,
                                            const FeatureLayout& layout, std::span<const std::size_t> excluded = {},
                                            std::span<const double> means = {}) {
  LocationFeatures loc(world, layout, l, excluded);
  auto fv = loc.evaluate(world, layout, hour_idx);
  if (!means.empty()) impute(fv, means);
  return fv;
}

}  // namespace aqe
