#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "aqe/geo.hpp"
#include "aqe/ingest.hpp"

namespace aqe {

/// Everything the loaders (or the synthetic generator) produce, as plain values.
struct WorldData {
  std::vector<Region> regions;
  std::vector<Station> stations;
  std::vector<StationMeasurement> measurements;
  std::vector<AtmosphericGrid> grids;
  std::vector<RoadSegment> roads;
  std::vector<TrafficObservation> traffic;
  std::vector<LandCoverSample> land_cover;
  std::vector<PowerPlant> power_plants;
};

/// File names inside a world directory.
namespace world_files {
inline constexpr const char* kRegions = "regions.csv";
inline constexpr const char* kStations = "stations.csv";
inline constexpr const char* kMeasurements = "measurements.csv";
inline constexpr const char* kGridDir = "grids";
inline constexpr const char* kRoads = "roads.geojson";
inline constexpr const char* kTraffic = "traffic.csv";
inline constexpr const char* kLandCover = "land_cover.csv";
inline constexpr const char* kPowerPlants = "power_plants.csv";
}  // namespace world_files

inline std::string grid_file_name(const AtmosphericGrid& g) {
  std::string ts = format_hour(g.timestamp);
  std::replace(ts.begin(), ts.end(), ':', '-');
  return std::string(column_of(g.pollutant)) + "_" + ts + "_" + (g.source_id.empty() ? "model" : g.source_id) + ".csv";
}

/// Writes a world directory. Grid source ids are rewritten to their file stems.
inline void save_world(const std::filesystem::path& dir, const WorldData& w) {
  namespace fs = std::filesystem;
  namespace wf = world_files;
  fs::create_directories(dir / wf::kGridDir);
  save_with(dir / wf::kRegions, [](auto& o, const auto& d) { write_regions(o, d); }, w.regions);
  save_with(dir / wf::kStations, [](auto& o, const auto& d) { write_stations(o, d); }, w.stations);
  save_with(dir / wf::kMeasurements, [](auto& o, const auto& d) { write_measurements(o, d); }, w.measurements);
  save_with(dir / wf::kRoads, [](auto& o, const auto& d) { write_roads(o, d); }, w.roads);
  save_with(dir / wf::kTraffic, [](auto& o, const auto& d) { write_traffic(o, d); }, w.traffic);
  save_with(dir / wf::kLandCover, [](auto& o, const auto& d) { write_land_cover(o, d); }, w.land_cover);
  save_with(dir / wf::kPowerPlants, [](auto& o, const auto& d) { write_power_plants(o, d); }, w.power_plants);
  for (const auto& g : w.grids)
    save_with(dir / wf::kGridDir / grid_file_name(g), [](auto& o, const auto& d) { write_atmospheric_grid(o, d); }, g);
}

/// Loads a world directory. Measurements are cleaned with the Hampel filter
/// unless `hampel_window` is zero.
inline WorldData load_world(const std::filesystem::path& dir, std::size_t hampel_window = 48, double hampel_k = 6.0) {
  namespace fs = std::filesystem;
  namespace wf = world_files;
  WorldData w;
  w.regions = load_regions(dir / wf::kRegions);
  w.stations = load_stations(dir / wf::kStations);
  w.measurements = load_measurements(dir / wf::kMeasurements);
  if (hampel_window > 0) {
    auto removed = clean_measurements(w.measurements, hampel_window, hampel_k);
    log_info("hampel filter removed " + std::to_string(removed) + " values");
  }
  w.roads = load_roads(dir / wf::kRoads);
  w.traffic = load_traffic(dir / wf::kTraffic);
  w.land_cover = load_land_cover(dir / wf::kLandCover);
  w.power_plants = load_power_plants(dir / wf::kPowerPlants);
  std::vector<fs::path> grid_paths;
  if (fs::exists(dir / wf::kGridDir))
    for (const auto& e : fs::directory_iterator(dir / wf::kGridDir))
      if (e.is_regular_file()) grid_paths.push_back(e.path());
  std::sort(grid_paths.begin(), grid_paths.end());
  for (const auto& p : grid_paths) w.grids.push_back(load_atmospheric_grid(p));
  return w;
}

/// Indexed, immutable view of a WorldData. Safe for concurrent readers.
class World {
 public:
  explicit World(WorldData data) : data_(std::move(data)) {
    const auto& d = data_;
    for (std::size_t i = 0; i < d.stations.size(); ++i) {
      if (!station_by_id_.emplace(d.stations[i].id, i).second)
        throw InvalidParameter("station id '" + d.stations[i].id + "' appears twice");
    }
    for (std::size_t i = 0; i < d.regions.size(); ++i) region_by_name_.emplace(d.regions[i].name, i);

    // Hour axis: union of every timestamped source.
    std::vector<Hour> hs;
    for (const auto& m : d.measurements) hs.push_back(m.timestamp);
    for (const auto& g : d.grids) hs.push_back(g.timestamp);
    for (const auto& t : d.traffic) hs.push_back(t.timestamp);
    std::sort(hs.begin(), hs.end());
    hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
    hours_ = std::move(hs);

    const auto ns = d.stations.size();
    values_.assign(hours_.size() * ns, MaybeConcentrations{});
    for (const auto& m : d.measurements) {
      auto it = station_by_id_.find(m.station_id);
      if (it == station_by_id_.end()) {
        ++unknown_station_rows_;
        continue;
      }
      auto& slot = values_[*hour_index(m.timestamp) * ns + it->second];
      for (std::size_t p = 0; p < kNumPollutants; ++p)
        if (m.values[p]) slot[p] = m.values[p];
    }
    if (unknown_station_rows_ > 0)
      log_warn(std::to_string(unknown_station_rows_) + " measurement rows reference unknown stations");

    std::vector<SpatialIndex::Entry> st;
    for (std::size_t i = 0; i < ns; ++i) st.push_back({d.stations[i].location, i});
    station_index_ = SpatialIndex(std::move(st), 5.0);

    grids_by_slot_.resize(hours_.size() * kNumPollutants);
    for (std::size_t i = 0; i < d.grids.size(); ++i)
      grids_by_slot_[*hour_index(d.grids[i].timestamp) * kNumPollutants + index_of(d.grids[i].pollutant)].push_back(i);

    std::unordered_map<std::string, std::size_t> road_by_id;
    std::vector<SpatialIndex::Entry> rd;
    for (std::size_t i = 0; i < d.roads.size(); ++i) {
      road_mid_.push_back(polyline_midpoint(d.roads[i].polyline));
      rd.push_back({road_mid_.back(), i});
      road_by_id.emplace(d.roads[i].id, i);
    }
    road_index_ = SpatialIndex(std::move(rd), 0.5);

    jam_.assign(hours_.size() * d.roads.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& t : d.traffic) {
      auto it = road_by_id.find(t.segment_id);
      if (it == road_by_id.end()) continue;
      jam_[*hour_index(t.timestamp) * d.roads.size() + it->second] = t.jam_factor;
    }

    std::vector<SpatialIndex::Entry> lc;
    for (std::size_t i = 0; i < d.land_cover.size(); ++i) lc.push_back({d.land_cover[i].location, i});
    land_index_ = SpatialIndex(std::move(lc), 0.5);

    std::vector<SpatialIndex::Entry> pp;
    for (std::size_t i = 0; i < d.power_plants.size(); ++i) pp.push_back({d.power_plants[i].location, i});
    plant_index_ = SpatialIndex(std::move(pp), 10.0);
  }

  const WorldData& data() const noexcept { return data_; }
  const std::vector<Station>& stations() const noexcept { return data_.stations; }
  const std::vector<Region>& regions() const noexcept { return data_.regions; }
  const std::vector<RoadSegment>& roads() const noexcept { return data_.roads; }
  const std::vector<GeoPoint>& road_midpoints() const noexcept { return road_mid_; }
  const std::vector<LandCoverSample>& land_cover() const noexcept { return data_.land_cover; }
  const std::vector<PowerPlant>& power_plants() const noexcept { return data_.power_plants; }
  const std::vector<AtmosphericGrid>& grids() const noexcept { return data_.grids; }
  const std::vector<Hour>& hours() const noexcept { return hours_; }

  const SpatialIndex& station_index() const noexcept { return station_index_; }
  const SpatialIndex& road_index() const noexcept { return road_index_; }
  const SpatialIndex& land_index() const noexcept { return land_index_; }
  const SpatialIndex& plant_index() const noexcept { return plant_index_; }

  std::optional<std::size_t> hour_index(Hour h) const noexcept {
    auto it = std::lower_bound(hours_.begin(), hours_.end(), h);
    if (it == hours_.end() || *it != h) return std::nullopt;
    return static_cast<std::size_t>(it - hours_.begin());
  }

  /// Index of the loaded hour closest to h (earlier hour on ties).
  std::optional<std::size_t> nearest_hour_index(Hour h) const noexcept {
    if (hours_.empty()) return std::nullopt;
    auto it = std::lower_bound(hours_.begin(), hours_.end(), h);
    if (it == hours_.end()) return hours_.size() - 1;
    if (it == hours_.begin()) return 0;
    auto prev = it - 1;
    return static_cast<std::size_t>((h.value - prev->value <= it->value - h.value ? prev : it) - hours_.begin());
  }

  std::optional<std::size_t> station_index_of(const std::string& id) const {
    auto it = station_by_id_.find(id);
    if (it == station_by_id_.end()) return std::nullopt;
    return it->second;
  }

  const Region& region(const std::string& name) const {
    auto it = region_by_name_.find(name);
    if (it == region_by_name_.end()) throw NotFound("unknown region '" + name + "'");
    return data_.regions[it->second];
  }

  /// Station indices whose region column equals `name`, ascending.
  std::vector<std::size_t> stations_in_region(const std::string& name) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data_.stations.size(); ++i)
      if (data_.stations[i].region == name) out.push_back(i);
    return out;
  }

  /// All station values at one hour, indexed like stations().
  std::span<const MaybeConcentrations> values_at(std::size_t hour_idx) const {
    const auto ns = data_.stations.size();
    return std::span<const MaybeConcentrations>(values_).subspan(hour_idx * ns, ns);
  }

  /// Jam factors at one hour, indexed like roads(); NaN when unobserved.
  std::span<const double> jam_at(std::size_t hour_idx) const {
    const auto nr = data_.roads.size();
    return std::span<const double>(jam_).subspan(hour_idx * nr, nr);
  }

  /// Indices into grids() for one (hour, pollutant).
  const std::vector<std::size_t>& grids_at(std::size_t hour_idx, Pollutant p) const {
    return grids_by_slot_[hour_idx * kNumPollutants + index_of(p)];
  }

 private:
  WorldData data_;
  std::unordered_map<std::string, std::size_t> station_by_id_;
  std::unordered_map<std::string, std::size_t> region_by_name_;
  std::vector<Hour> hours_;
  std::vector<MaybeConcentrations> values_;
  std::size_t unknown_station_rows_ = 0;
  SpatialIndex station_index_;
  std::vector<std::vector<std::size_t>> grids_by_slot_;
  std::vector<GeoPoint> road_mid_;
  SpatialIndex road_index_;
  std::vector<double> jam_;
  SpatialIndex land_index_;
  SpatialIndex plant_index_;
};

}  // namespace aqe
