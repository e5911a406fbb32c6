#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "aqe/core.hpp"
#include "aqe/geo.hpp"
#include "aqe/ingest.hpp"
#include "aqe/random.hpp"
#include "aqe/world.hpp"

namespace aqe {

/// One region of a synthetic world: a square of `size_km` around `center` with
/// a gridded city core in the middle.
struct RegionSpec {
  std::string name = "metro";
  double center_lat = 48.85;
  double center_lon = 2.35;
  double size_km = 30.0;
  std::size_t stations = 60;
  std::size_t road_count = 840;  // street segments of the city grid (rounded down to a full grid)
  std::size_t industry_zones = 2;
  std::size_t power_plants = 1;
  FeaturePreset preset = FeaturePreset::Full;
  double emission_scale = 1.0;    // multiplies road and industry emissions
  double background_scale = 1.0;  // multiplies regional background
  std::size_t record_hours = 0;   // stations report only the last N hours; 0 = whole period
};

struct WorldSpec {
  std::uint64_t seed = 1;
  std::vector<RegionSpec> regions{RegionSpec{}};
  std::size_t hours = 168;
  Hour start{424392};  // 2018-06-01T00:00Z
  double grid_resolution_km = 10.0;
  std::size_t grid_lattice = 40;  // ground-truth samples per cell edge for grid averaging
  double land_spacing_km = 0.1;
  double street_spacing_km = 0.2;
  double noise_sigma = 0.15;       // lognormal measurement noise
  double na_fraction = 0.03;       // random NA cells among monitored pollutants
  double outlier_fraction = 0.002; // spikes injected into measurements
  double monitor_probability = 0.8;
  double traffic_missing_fraction = 0.02;

  void validate() const {
    if (regions.empty()) throw InvalidParameter("world needs at least one region");
    if (hours == 0) throw InvalidParameter("hours must be > 0");
    for (const auto& r : regions) {
      if (r.stations == 0) throw InvalidParameter("region '" + r.name + "' needs at least one station");
      if (!(r.size_km > 0.0) || r.size_km > 500.0) throw InvalidParameter("region size must be in (0, 500] km");
      if (!(r.emission_scale > 0.0) || !(r.background_scale > 0.0))
        throw InvalidParameter("region scales must be > 0");
    }
    if (!(grid_resolution_km > 0.0) || grid_lattice == 0) throw InvalidParameter("bad grid resolution");
    if (!(land_spacing_km > 0.0) || !(street_spacing_km > 0.0)) throw InvalidParameter("bad spacing");
    auto frac = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!(noise_sigma >= 0.0) || !frac(na_fraction) || !frac(outlier_fraction) || !frac(monitor_probability) ||
        !frac(traffic_missing_fraction))
      throw InvalidParameter("noise and fraction parameters out of range");
  }
};

/// Static per-location inputs of the ground-truth field.
struct TruthComponents {
  double background = 1;  // primary-pollutant background shape
  double ozone = 1;       // ozone background shape
  double traffic = 0;     // traffic emission exposure
  double roads = 0;       // road density (resuspension)
  double industry = 0;    // industrial and power-plant exposure
};

/// The hidden concentration field the synthetic observations are drawn from.
class GroundTruth {
 public:
  struct Bump {
    double north_km, east_km, sigma_km, amplitude;
  };
  struct Zone {
    double north_km, east_km, strength;
  };
  struct RegionField {
    BoundingBox bbox;
    GeoPoint origin;  // south-west corner
    double emission_scale = 1, background_scale = 1;
    double phase_a = 0, phase_b = 0, phase_c = 0;
    std::vector<Bump> background, ozone;
    std::vector<Zone> industry;
  };
  struct RoadSource {
    GeoPoint mid;
    double weight;  // length * class * typical jam / 5
    double length;
  };
  struct PlantSource {
    GeoPoint location;
    double strength;
  };

  static constexpr double kRoadScaleKm = 0.12;
  static constexpr double kRoadCutoffKm = 1.5;

  GroundTruth() = default;
  GroundTruth(Hour start, std::vector<RegionField> regions, std::vector<RoadSource> roads,
              std::vector<PlantSource> plants)
      : start_(start), regions_(std::move(regions)), roads_(std::move(roads)), plants_(std::move(plants)) {
    std::vector<SpatialIndex::Entry> e;
    for (std::size_t i = 0; i < roads_.size(); ++i) e.push_back({roads_[i].mid, i});
    road_index_ = SpatialIndex(std::move(e), 0.5);
  }

  const std::vector<RegionField>& regions() const noexcept { return regions_; }

  /// Region whose box contains l, else the one with the nearest centre.
  std::size_t region_of(const GeoPoint& l) const {
    for (std::size_t i = 0; i < regions_.size(); ++i)
      if (regions_[i].bbox.contains(l)) return i;
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      const double d = distance_km(l, regions_[i].bbox.center());
      if (d < best_d) best_d = d, best = i;
    }
    return best;
  }

  TruthComponents components(const GeoPoint& l) const { return components(l, region_of(l)); }

  TruthComponents components(const GeoPoint& l, std::size_t region) const {
    const auto& rf = regions_[region];
    const double north = (l.lat() - rf.origin.lat()) * kKmPerDegLat;
    const double east = (l.lon() - rf.origin.lon()) * kKmPerDegLonEquator *
                        std::cos((l.lat() + rf.origin.lat()) * 0.5 * std::numbers::pi / 180.0);
    TruthComponents c;
    auto bumps = [&](const std::vector<Bump>& bs) {
      double s = 1.0;
      for (const auto& b : bs) {
        const double dn = north - b.north_km, de = east - b.east_km;
        s += b.amplitude * std::exp(-(dn * dn + de * de) / (2 * b.sigma_km * b.sigma_km));
      }
      return s;
    };
    c.background = bumps(rf.background);
    c.ozone = bumps(rf.ozone);
    road_index_.for_each_within(l, kRoadCutoffKm, [&](std::size_t j, double dist) {
      const double k = std::exp(-dist / kRoadScaleKm);
      c.traffic += k * roads_[j].weight;
      c.roads += k * roads_[j].length;
    });
    c.traffic *= 0.5;
    for (const auto& z : rf.industry) {
      const double dn = north - z.north_km, de = east - z.east_km;
      c.industry += z.strength * std::exp(-std::sqrt(dn * dn + de * de) / 1.5);
    }
    for (const auto& p : plants_) c.industry += p.strength * std::exp(-distance_km(l, p.location) / 4.0);
    return c;
  }

  /// Synoptic (weather) factor shared by a region.
  double weather(std::size_t region, Hour t) const {
    const auto& rf = regions_[region];
    const double h = static_cast<double>(t.value - start_.value);
    return std::exp(0.45 * std::sin(2 * std::numbers::pi * h / (24 * 6.3) + rf.phase_a) +
                    0.30 * std::sin(2 * std::numbers::pi * h / (24 * 2.7) + rf.phase_b));
  }

  /// Local solar hour in [0, 24).
  double local_hour(std::size_t region, Hour t) const {
    double h = hour_of_day(t) + regions_[region].origin.lon() / 15.0;
    h = std::fmod(h, 24.0);
    return h < 0 ? h + 24.0 : h;
  }

  /// Diurnal traffic intensity, about 0.4 at night to 1.6 at rush hour.
  double traffic_cycle(std::size_t region, Hour t) const {
    const double h = local_hour(region, t);
    auto g = [](double x, double mu, double s) { return std::exp(-(x - mu) * (x - mu) / (2 * s * s)); };
    return 0.4 + 0.85 * g(h, 8.5, 1.5) + 0.75 * g(h, 18.0, 2.0) + ((h >= 7 && h <= 21) ? 0.3 : 0.0);
  }

  /// Photochemical ozone cycle peaking mid-afternoon.
  double ozone_cycle(std::size_t region, Hour t) const {
    const double h = local_hour(region, t);
    return 0.35 + 1.1 * std::exp(-(h - 15.0) * (h - 15.0) / (2 * 3.5 * 3.5));
  }

  struct TimeFactors {
    double weather, traffic, ozone;
  };

  TimeFactors factors(std::size_t region, Hour t) const {
    return {weather(region, t), traffic_cycle(region, t), ozone_cycle(region, t)};
  }

  Concentrations from_components(const TruthComponents& c, std::size_t region, const TimeFactors& f) const {
    const auto& rf = regions_[region];
    const double s = f.weather;
    const double dt = f.traffic;
    const double e = rf.emission_scale, b = rf.background_scale;
    Concentrations out{};
    const double no2_local = e * (75.0 * c.traffic * dt + 20.0 * c.roads * dt + 12.0 * c.industry * s);
    const double no2 = b * 7.0 * c.background * s + no2_local;
    out[index_of(Pollutant::NO2)] = no2;
    const double o3_bg = b * 70.0 * c.ozone * std::sqrt(s) * f.ozone;
    out[index_of(Pollutant::O3)] = o3_bg / (1.0 + 0.02 * no2);
    const double pm25 = b * 8.0 * c.background * s + e * (8.0 * c.traffic * dt + 10.0 * c.industry * s);
    out[index_of(Pollutant::PM25)] = pm25;
    out[index_of(Pollutant::PM10)] = 1.45 * pm25 + b * 4.0 * c.background * s + e * 3.0 * c.roads * dt;
    return out;
  }

  Concentrations from_components(const TruthComponents& c, std::size_t region, Hour t) const {
    return from_components(c, region, factors(region, t));
  }

  Concentrations at(const GeoPoint& l, Hour t) const {
    const auto r = region_of(l);
    return from_components(components(l, r), r, t);
  }

  /// Expected jam factor of a segment with the given typical jam.
  double expected_jam(double typical, std::size_t region, Hour t) const {
    return std::clamp(typical * traffic_cycle(region, t), 0.0, 10.0);
  }

 private:
  Hour start_{};
  std::vector<RegionField> regions_;
  std::vector<RoadSource> roads_;
  std::vector<PlantSource> plants_;
  SpatialIndex road_index_;
};

struct SyntheticWorld {
  WorldData data;
  GroundTruth truth;
};

namespace detail {

inline std::string padded(std::string_view prefix, std::size_t i, int width = 4) {
  std::string n = std::to_string(i);
  if (n.size() < static_cast<std::size_t>(width)) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return std::string(prefix) + n;
}

}  // namespace detail

/// Builds a synthetic world. Deterministic in spec (including seed).
inline SyntheticWorld generate_synthetic_world(const WorldSpec& spec) {
  spec.validate();
  SyntheticWorld out;
  auto& w = out.data;
  std::vector<GroundTruth::RegionField> fields;
  std::vector<GroundTruth::RoadSource> road_sources;
  std::vector<GroundTruth::PlantSource> plant_sources;
  std::vector<double> typical_jam;          // per road
  std::vector<std::size_t> road_region;     // per road
  std::vector<std::size_t> station_region;  // per station

  for (std::size_t ri = 0; ri < spec.regions.size(); ++ri) {
    const auto& rs = spec.regions[ri];
    Rng rng(mix_seed(spec.seed, 100 + ri));
    const GeoPoint center(rs.center_lat, rs.center_lon);
    const double half = rs.size_km / 2;
    const GeoPoint sw = offset_km(center, -half, -half);
    const GeoPoint ne = offset_km(center, half, half);
    Region region{rs.name, BoundingBox(GeoPoint(sw.lat(), sw.lon()), GeoPoint(ne.lat(), ne.lon())), rs.preset};
    w.regions.push_back(region);

    GroundTruth::RegionField rf;
    rf.bbox = region.bbox;
    rf.origin = sw;
    rf.emission_scale = rs.emission_scale;
    rf.background_scale = rs.background_scale;
    rf.phase_a = rng.uniform(0, 2 * std::numbers::pi);
    rf.phase_b = rng.uniform(0, 2 * std::numbers::pi);
    rf.phase_c = rng.uniform(0, 2 * std::numbers::pi);
    for (int k = 0; k < 4; ++k)
      rf.background.push_back({rng.uniform(0, rs.size_km), rng.uniform(0, rs.size_km),
                               rng.uniform(0.12, 0.4) * rs.size_km, rng.uniform(0.2, 1.0)});
    for (int k = 0; k < 3; ++k)
      rf.ozone.push_back({rng.uniform(0, rs.size_km), rng.uniform(0, rs.size_km),
                          rng.uniform(0.15, 0.4) * rs.size_km, rng.uniform(0.05, 0.3)});

    // City street grid centred in the region.
    std::size_t m = 1;
    while (2 * (m + 1) * (m + 2) <= rs.road_count) ++m;
    if (rs.road_count < 4) m = 0;
    const double sp = spec.street_spacing_km;
    const double city = static_cast<double>(m) * sp;
    const double c0 = half - city / 2;  // city south/west edge, km from sw
    auto at_km = [&](double north, double east) { return offset_km(sw, north, east); };
    auto is_major_line = [&](std::size_t i) { return m > 0 && (i % 5 == 0 || i == m / 2); };
    const std::size_t road_base = w.roads.size();
    if (m > 0) {
      for (int dir = 0; dir < 2; ++dir) {
        for (std::size_t line = 0; line <= m; ++line) {
          const bool major = is_major_line(line);
          const int fc = line == m / 2 ? 5 : major ? 4 : 1 + static_cast<int>(rng.index(3));
          for (std::size_t k = 0; k < m; ++k) {
            RoadSegment s;
            s.id = rs.name + "-r" + std::to_string(w.roads.size() - road_base);
            const double a = c0 + static_cast<double>(line) * sp;
            const double b0 = c0 + static_cast<double>(k) * sp;
            if (dir == 0) s.polyline = {at_km(a, b0), at_km(a, b0 + sp)};  // east-west street
            else s.polyline = {at_km(b0, a), at_km(b0 + sp, a)};           // north-south street
            s.length_km = polyline_length_km(s.polyline);
            s.functional_class = fc;
            s.major = major;
            const double tj = fc >= 5 ? rng.uniform(3.5, 5.5) : fc == 4 ? rng.uniform(2.5, 4.5) : rng.uniform(0.5, 2.5);
            typical_jam.push_back(tj);
            road_region.push_back(ri);
            road_sources.push_back({polyline_midpoint(s.polyline), s.length_km * fc * tj / 5.0, s.length_km});
            w.roads.push_back(std::move(s));
          }
        }
      }
    }

    // Industry zones and power plants outside the city core.
    auto outside_city = [&](double margin) {
      for (int attempt = 0; attempt < 10000; ++attempt) {
        const double n = rng.uniform(1.0, rs.size_km - 1.0), e = rng.uniform(1.0, rs.size_km - 1.0);
        if (n < c0 - margin || n > c0 + city + margin || e < c0 - margin || e > c0 + city + margin) return std::pair{n, e};
      }
      throw InvalidParameter("region '" + rs.name + "' is too small to place sources outside its city core");
    };
    for (std::size_t z = 0; z < rs.industry_zones; ++z) {
      auto [n, e] = outside_city(1.0);
      rf.industry.push_back({n, e, rng.uniform(0.6, 1.2)});
    }
    for (std::size_t p = 0; p < rs.power_plants; ++p) {
      auto [n, e] = outside_city(3.0);
      const Fuel fuel = std::array{Fuel::Coal, Fuel::Gas, Fuel::Oil}[rng.index(3)];
      PowerPlant pp{at_km(n, e), rng.uniform(100.0, 1000.0), fuel};
      w.power_plants.push_back(pp);
      plant_sources.push_back({pp.location, pp.capacity_mw * (fuel == Fuel::Coal ? 1.0 : fuel == Fuel::Oil ? 0.6 : 0.3) / 1000.0});
    }

    // Land cover lattice.
    struct Patch {
      double n, e, r;
    };
    std::vector<Patch> parks, forests;
    for (int k = 0; k < 3 && m > 0; ++k)
      parks.push_back({c0 + rng.uniform(0, city), c0 + rng.uniform(0, city), rng.uniform(0.15, 0.5)});
    for (int k = 0; k < 8; ++k)
      forests.push_back({rng.uniform(0, rs.size_km), rng.uniform(0, rs.size_km), rng.uniform(1.0, 3.5)});
    const auto nl = static_cast<std::size_t>(rs.size_km / spec.land_spacing_km);
    for (std::size_t i = 0; i < nl; ++i) {
      for (std::size_t j = 0; j < nl; ++j) {
        const double n = (static_cast<double>(i) + 0.5) * spec.land_spacing_km;
        const double e = (static_cast<double>(j) + 0.5) * spec.land_spacing_km;
        auto in = [&](const Patch& p) { return (n - p.n) * (n - p.n) + (e - p.e) * (e - p.e) <= p.r * p.r; };
        LandCover cat = LandCover::Other;
        bool industrial = false;
        for (const auto& z : rf.industry)
          if (std::abs(n - z.north_km) <= 0.6 && std::abs(e - z.east_km) <= 0.9) industrial = true;
        const bool in_city = m > 0 && n >= c0 && n <= c0 + city && e >= c0 && e <= c0 + city;
        if (industrial) cat = LandCover::Industry;
        else if (in_city) cat = std::any_of(parks.begin(), parks.end(), in) ? LandCover::Green : LandCover::Residential;
        else if (std::any_of(forests.begin(), forests.end(), in)) cat = LandCover::Green;
        w.land_cover.push_back({at_km(n, e), cat});
      }
    }

    // Stations: roadside, urban background, regional.
    for (std::size_t k = 0; k < rs.stations; ++k) {
      double n = 0, e = 0;
      const double u = rng.uniform();
      if (m > 0 && u < 0.4) {
        const double line = c0 + static_cast<double>(rng.index(m + 1)) * sp + rng.uniform(-0.03, 0.03);
        const double along = c0 + rng.uniform(0, city);
        if (rng.bernoulli(0.5)) n = line, e = along;
        else n = along, e = line;
      } else if (m > 0 && u < 0.7) {
        n = c0 + rng.uniform(0, city), e = c0 + rng.uniform(0, city);
      } else {
        n = rng.uniform(0.2, rs.size_km - 0.2), e = rng.uniform(0.2, rs.size_km - 0.2);
      }
      n = std::clamp(n, 0.01, rs.size_km - 0.01);
      e = std::clamp(e, 0.01, rs.size_km - 0.01);
      w.stations.push_back({detail::padded(rs.name + "-s", k), at_km(n, e), rs.name});
      station_region.push_back(ri);
    }
    fields.push_back(std::move(rf));
  }

  out.truth = GroundTruth(spec.start, fields, road_sources, plant_sources);
  const auto& truth = out.truth;

  // Measurements.
  {
    Rng rng(mix_seed(spec.seed, 1));
    for (std::size_t si = 0; si < w.stations.size(); ++si) {
      const auto& st = w.stations[si];
      std::array<bool, kNumPollutants> monitors{};
      for (auto& b : monitors) b = rng.bernoulli(spec.monitor_probability);
      if (std::none_of(monitors.begin(), monitors.end(), [](bool b) { return b; })) monitors[rng.index(kNumPollutants)] = true;
      const auto comp = truth.components(st.location, station_region[si]);
      const auto record = spec.regions[station_region[si]].record_hours;
      const std::size_t first = record > 0 && record < spec.hours ? spec.hours - record : 0;
      for (std::size_t h = 0; h < spec.hours; ++h) {
        const Hour t{spec.start.value + static_cast<std::int64_t>(h)};
        const auto c = truth.from_components(comp, station_region[si], t);
        StationMeasurement m{st.id, t, {}};
        for (std::size_t p = 0; p < kNumPollutants; ++p) {
          const double z = rng.normal();
          const double u_na = rng.uniform();
          const double u_out = rng.uniform();
          const double spike = rng.uniform(8.0, 15.0);
          if (!monitors[p] || h < first || u_na < spec.na_fraction) continue;
          double v = c[p] * std::exp(spec.noise_sigma * z);
          if (u_out < spec.outlier_fraction) v *= spike;
          m.values[p] = v;
        }
        if (any_present(m.values)) w.measurements.push_back(std::move(m));
      }
    }
  }

  // Traffic observations.
  {
    Rng rng(mix_seed(spec.seed, 2));
    w.traffic.reserve(w.roads.size() * spec.hours);
    for (std::size_t h = 0; h < spec.hours; ++h) {
      const Hour t{spec.start.value + static_cast<std::int64_t>(h)};
      for (std::size_t j = 0; j < w.roads.size(); ++j) {
        const double z = rng.normal();
        if (rng.uniform() < spec.traffic_missing_fraction) continue;
        const double jam = std::clamp(truth.expected_jam(typical_jam[j], road_region[j], t) * std::exp(0.15 * z), 0.0, 10.0);
        w.traffic.push_back({w.roads[j].id, t, jam});
      }
    }
  }

  // Atmospheric grids: each node holds the mean of the truth over the cell centred on it.
  for (std::size_t ri = 0; ri < w.regions.size(); ++ri) {
    const auto& bb = w.regions[ri].bbox;
    const double dlat = spec.grid_resolution_km / kKmPerDegLat;
    const double dlon = spec.grid_resolution_km /
                        (kKmPerDegLonEquator * std::cos(bb.center().lat() * std::numbers::pi / 180.0));
    const double lat0 = bb.min().lat() - dlat / 2, lon0 = bb.min().lon() - dlon / 2;
    const auto nrows = static_cast<std::size_t>(std::ceil((bb.max().lat() - lat0) / dlat)) + 1;
    const auto ncols = static_cast<std::size_t>(std::ceil((bb.max().lon() - lon0) / dlon)) + 1;
    const std::size_t L = spec.grid_lattice;
    // Truth components on every node's lattice.
    std::vector<std::vector<TruthComponents>> lattice(nrows * ncols);
    for (std::size_t r = 0; r < nrows; ++r)
      for (std::size_t c = 0; c < ncols; ++c) {
        auto& cell = lattice[r * ncols + c];
        cell.reserve(L * L);
        const double clat = lat0 + static_cast<double>(r) * dlat, clon = lon0 + static_cast<double>(c) * dlon;
        for (std::size_t a = 0; a < L; ++a)
          for (std::size_t b = 0; b < L; ++b) {
            const double lat = clat - dlat / 2 + (static_cast<double>(a) + 0.5) * dlat / static_cast<double>(L);
            const double lon = clon - dlon / 2 + (static_cast<double>(b) + 0.5) * dlon / static_cast<double>(L);
            cell.push_back(truth.components(GeoPoint(lat, lon), ri));
          }
      }
    for (std::size_t h = 0; h < spec.hours; ++h) {
      const Hour t{spec.start.value + static_cast<std::int64_t>(h)};
      std::array<AtmosphericGrid, kNumPollutants> gs;
      for (auto p : kPollutants) {
        auto& g = gs[index_of(p)];
        g.pollutant = p;
        g.timestamp = t;
        g.lat0 = lat0, g.lon0 = lon0, g.dlat = dlat, g.dlon = dlon;
        g.nrows = nrows, g.ncols = ncols;
        g.resolution_km = spec.grid_resolution_km;
        g.source_id = w.regions[ri].name;
        g.values.assign(nrows * ncols, 0.0);
      }
      const auto tf = truth.factors(ri, t);
      for (std::size_t k = 0; k < lattice.size(); ++k) {
        Concentrations sum{};
        for (const auto& comp : lattice[k]) {
          const auto c = truth.from_components(comp, ri, tf);
          for (std::size_t p = 0; p < kNumPollutants; ++p) sum[p] += c[p];
        }
        for (std::size_t p = 0; p < kNumPollutants; ++p) gs[p].values[k] = sum[p] / static_cast<double>(lattice[k].size());
      }
      for (auto& g : gs) w.grids.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace aqe
