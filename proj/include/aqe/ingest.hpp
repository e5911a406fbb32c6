#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqe/core.hpp"
#include "aqe/geo.hpp"

namespace aqe {

// Records --------------------------------------------------------------------

struct Station {
  std::string id;
  GeoPoint location;
  std::string region;
  friend bool operator==(const Station&, const Station&) = default;
};

struct StationMeasurement {
  std::string station_id;
  Hour timestamp;
  MaybeConcentrations values;
  friend bool operator==(const StationMeasurement&, const StationMeasurement&) = default;
};

struct AtmosphericGrid {
  Pollutant pollutant = Pollutant::NO2;
  Hour timestamp;
  double lat0 = 0, lon0 = 0;
  double dlat = 1, dlon = 1;
  std::size_t nrows = 0, ncols = 0;
  std::vector<double> values;  // row-major, row 0 at lat0
  double resolution_km = 0;
  std::string source_id;  // tie-break key; file stem when loaded from disk

  double at(std::size_t row, std::size_t col) const { return values[row * ncols + col]; }
  double max_lat() const noexcept { return lat0 + dlat * static_cast<double>(nrows - 1); }
  double max_lon() const noexcept { return lon0 + dlon * static_cast<double>(ncols - 1); }

  friend bool operator==(const AtmosphericGrid&, const AtmosphericGrid&) = default;
};

struct RoadSegment {
  std::string id;
  std::vector<GeoPoint> polyline;
  double length_km = 0;
  int functional_class = 1;  // 1 small .. 5 large
  bool major = false;
  friend bool operator==(const RoadSegment&, const RoadSegment&) = default;
};

struct TrafficObservation {
  std::string segment_id;
  Hour timestamp;
  double jam_factor = 0;  // [0, 10]
  friend bool operator==(const TrafficObservation&, const TrafficObservation&) = default;
};

enum class LandCover { Industry, Residential, Green, Other };

inline constexpr std::array<LandCover, 4> kLandCovers = {LandCover::Industry, LandCover::Residential,
                                                         LandCover::Green, LandCover::Other};

inline std::string_view name_of(LandCover c) noexcept {
  switch (c) {
    case LandCover::Industry: return "Industry";
    case LandCover::Residential: return "Residential";
    case LandCover::Green: return "Green";
    case LandCover::Other: return "Other";
  }
  return "Other";
}

inline std::optional<LandCover> parse_land_cover(std::string_view s) {
  for (auto c : kLandCovers)
    if (s == name_of(c)) return c;
  return std::nullopt;
}

struct LandCoverSample {
  GeoPoint location;
  LandCover category = LandCover::Other;
  friend bool operator==(const LandCoverSample&, const LandCoverSample&) = default;
};

enum class Fuel { Coal, Gas, Oil };

inline std::string_view name_of(Fuel f) noexcept {
  switch (f) {
    case Fuel::Coal: return "coal";
    case Fuel::Gas: return "gas";
    case Fuel::Oil: return "oil";
  }
  return "coal";
}

struct PowerPlant {
  GeoPoint location;
  double capacity_mw = 0;
  Fuel fuel = Fuel::Coal;
  friend bool operator==(const PowerPlant&, const PowerPlant&) = default;
};

struct Region {
  std::string name;
  BoundingBox bbox;
  FeaturePreset preset = FeaturePreset::Full;
  friend bool operator==(const Region&, const Region&) = default;
};

// CSV plumbing ---------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

/// Iterates non-empty lines, checking the header. fn(fields, line_number).
template <typename Fn>
void read_csv(std::istream& in, const std::string& name, std::string_view header, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    if (!have_header) {
      if (sv != header) throw IngestionError(name, lineno, "expected header '" + std::string(header) + "'");
      have_header = true;
      continue;
    }
    fn(split_csv(sv), lineno);
  }
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), 0, "cannot open file");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  return out;
}

inline double require_double(std::string_view s, const std::string& name, std::size_t line,
                             std::string_view what) {
  auto v = parse_double(s);
  if (!v) throw IngestionError(name, line, "cannot parse " + std::string(what) + " '" + std::string(s) + "'");
  return *v;
}

inline GeoPoint require_point(std::string_view lat, std::string_view lon, const std::string& name,
                              std::size_t line) {
  try {
    return GeoPoint(require_double(lat, name, line, "lat"), require_double(lon, name, line, "lon"));
  } catch (const InvalidParameter& e) {
    throw IngestionError(name, line, e.what());
  }
}

inline Hour require_hour(std::string_view s, const std::string& name, std::size_t line) {
  auto h = parse_hour(s);
  if (!h) throw IngestionError(name, line, "bad hour timestamp '" + std::string(s) + "'");
  return *h;
}

inline void check_fields(const std::vector<std::string_view>& f, std::size_t n, const std::string& name,
                         std::size_t line) {
  if (f.size() != n)
    throw IngestionError(name, line, "expected " + std::to_string(n) + " fields, got " + std::to_string(f.size()));
}

}  // namespace detail

// Stations -------------------------------------------------------------------

inline constexpr std::string_view kStationsHeader = "station_id,lat,lon,region";

inline std::vector<Station> parse_stations(std::istream& in, const std::string& name = "stations") {
  std::vector<Station> out;
  std::unordered_set<std::string> seen;
  detail::read_csv(in, name, kStationsHeader, [&](const auto& f, std::size_t line) {
    detail::check_fields(f, 4, name, line);
    Station s{std::string(f[0]), detail::require_point(f[1], f[2], name, line), std::string(f[3])};
    if (s.id.empty()) throw IngestionError(name, line, "empty station id");
    if (!seen.insert(s.region + '\x1f' + s.id).second)
      throw IngestionError(name, line, "duplicate station id '" + s.id + "' in region '" + s.region + "'");
    out.push_back(std::move(s));
  });
  return out;
}

inline void write_stations(std::ostream& out, std::span<const Station> stations) {
  out << kStationsHeader << '\n';
  for (const auto& s : stations)
    out << s.id << ',' << format_double(s.location.lat()) << ',' << format_double(s.location.lon()) << ','
        << s.region << '\n';
}

// Measurements ---------------------------------------------------------------

inline constexpr std::string_view kMeasurementsHeader = "station_id,timestamp,no2,o3,pm25,pm10";

struct LoadStats {
  std::size_t rows = 0;
  std::size_t invalid_values = 0;  // negative or non-finite cells turned into NA
};

inline std::vector<StationMeasurement> parse_measurements(std::istream& in, const std::string& name = "measurements",
                                                          LoadStats* stats = nullptr) {
  std::vector<StationMeasurement> out;
  LoadStats local;
  detail::read_csv(in, name, kMeasurementsHeader, [&](const auto& f, std::size_t line) {
    detail::check_fields(f, 6, name, line);
    StationMeasurement m{std::string(f[0]), detail::require_hour(f[1], name, line), {}};
    if (m.station_id.empty()) throw IngestionError(name, line, "empty station id");
    for (std::size_t i = 0; i < kNumPollutants; ++i) {
      if (f[2 + i].empty()) continue;
      auto v = parse_double(f[2 + i]);
      if (!v) {
        // "nan"/"inf" parse fine; anything else is malformed
        throw IngestionError(name, line, "cannot parse concentration '" + std::string(f[2 + i]) + "'");
      }
      if (!std::isfinite(*v) || *v < 0.0) {
        ++local.invalid_values;
        continue;
      }
      m.values[i] = *v;
    }
    out.push_back(std::move(m));
  });
  local.rows = out.size();
  if (local.invalid_values > 0)
    log_warn(name + ": " + std::to_string(local.invalid_values) + " negative or non-finite values set to NA");
  if (stats) *stats = local;
  return out;
}

inline void write_measurements(std::ostream& out, std::span<const StationMeasurement> rows) {
  out << kMeasurementsHeader << '\n';
  for (const auto& m : rows) {
    out << m.station_id << ',' << format_hour(m.timestamp);
    for (const auto& v : m.values) {
      out << ',';
      if (v) out << format_double(*v);
    }
    out << '\n';
  }
}

// Hampel filter ---------------------------------------------------------------

namespace detail {
inline double median_inplace(std::vector<double>& v) {
  const auto n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return (lo + hi) / 2.0;
}
}  // namespace detail

inline constexpr double kMadToSigma = 1.4826;

/// Removes (sets NA) every value x with |x - median(W)| > k * 1.4826 * MAD(W), W
/// being the present values in the window of `window` hours centred on x.
/// Windows with fewer than three present values pass through untouched.
inline std::vector<std::optional<double>> hampel_filter(std::span<const std::optional<double>> series,
                                                        std::size_t window, double k) {
  if (window < 3) throw InvalidParameter("hampel window must be >= 3");
  if (!(k > 0.0)) throw InvalidParameter("hampel k must be > 0");
  std::vector<std::optional<double>> out(series.begin(), series.end());
  const std::size_t half = window / 2;
  std::vector<double> w, dev;
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (!series[t]) continue;
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(series.size() - 1, t + half);
    w.clear();
    for (std::size_t i = lo; i <= hi; ++i)
      if (series[i]) w.push_back(*series[i]);
    if (w.size() < 3) continue;
    const double med = detail::median_inplace(w);
    dev.clear();
    for (double x : w) dev.push_back(std::abs(x - med));
    const double mad = detail::median_inplace(dev);
    if (std::abs(*series[t] - med) > k * kMadToSigma * mad) out[t].reset();
  }
  return out;
}

/// Applies hampel_filter per station and pollutant over each station's hourly
/// series. Returns the number of removed values.
inline std::size_t clean_measurements(std::vector<StationMeasurement>& rows, std::size_t window = 48,
                                      double k = 6.0) {
  std::map<std::string, std::vector<std::size_t>> by_station;
  for (std::size_t i = 0; i < rows.size(); ++i) by_station[rows[i].station_id].push_back(i);
  std::size_t removed = 0;
  for (auto& [id, idx] : by_station) {
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return rows[a].timestamp < rows[b].timestamp; });
    const auto t0 = rows[idx.front()].timestamp.value;
    const auto span_h = static_cast<std::size_t>(rows[idx.back()].timestamp.value - t0 + 1);
    for (std::size_t p = 0; p < kNumPollutants; ++p) {
      std::vector<std::optional<double>> series(span_h);
      for (auto i : idx) series[static_cast<std::size_t>(rows[i].timestamp.value - t0)] = rows[i].values[p];
      auto cleaned = hampel_filter(series, window, k);
      for (auto i : idx) {
        auto& v = rows[i].values[p];
        const auto& c = cleaned[static_cast<std::size_t>(rows[i].timestamp.value - t0)];
        if (v && !c) {
          v.reset();
          ++removed;
        }
      }
    }
  }
  return removed;
}

// Atmospheric grids -------------------------------------------------------------

inline constexpr std::string_view kGridHeader = "pollutant,timestamp,lat0,lon0,dlat,dlon,nrows,ncols,resolution_km";

inline void validate_grid(const AtmosphericGrid& g, const std::string& name) {
  if (!(g.dlat > 0.0) || !(g.dlon > 0.0)) throw IngestionError(name, 2, "dlat and dlon must be > 0");
  if (g.nrows == 0 || g.ncols == 0) throw IngestionError(name, 2, "grid must have at least one cell");
  if (g.values.size() != g.nrows * g.ncols) throw DimensionMismatch(name + ": grid value count mismatch");
  for (double v : g.values)
    if (!std::isfinite(v) || v < 0.0) throw IngestionError(name, 0, "grid values must be finite and >= 0");
}

inline AtmosphericGrid parse_atmospheric_grid(std::istream& in, const std::string& name = "grid") {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::optional<std::string_view> {
    while (std::getline(in, line)) {
      ++lineno;
      auto sv = trim(line);
      if (!sv.empty()) return sv;
    }
    return std::nullopt;
  };
  auto hdr = next();
  if (!hdr) throw IngestionError(name, lineno, "empty grid file");
  std::string meta_line(*hdr);
  if (meta_line == kGridHeader) {
    auto m = next();
    if (!m) throw IngestionError(name, lineno, "missing grid metadata line");
    meta_line = std::string(*m);
  }
  auto f = detail::split_csv(meta_line);
  detail::check_fields(f, 9, name, lineno);
  AtmosphericGrid g;
  try {
    g.pollutant = parse_pollutant(f[0]);
  } catch (const InvalidParameter& e) {
    throw IngestionError(name, lineno, e.what());
  }
  g.timestamp = detail::require_hour(f[1], name, lineno);
  g.lat0 = detail::require_double(f[2], name, lineno, "lat0");
  g.lon0 = detail::require_double(f[3], name, lineno, "lon0");
  g.dlat = detail::require_double(f[4], name, lineno, "dlat");
  g.dlon = detail::require_double(f[5], name, lineno, "dlon");
  const double nr = detail::require_double(f[6], name, lineno, "nrows");
  const double nc = detail::require_double(f[7], name, lineno, "ncols");
  if (nr < 1 || nc < 1 || nr != std::floor(nr) || nc != std::floor(nc))
    throw IngestionError(name, lineno, "nrows/ncols must be positive integers");
  g.nrows = static_cast<std::size_t>(nr);
  g.ncols = static_cast<std::size_t>(nc);
  g.resolution_km = detail::require_double(f[8], name, lineno, "resolution_km");
  g.values.reserve(g.nrows * g.ncols);
  std::size_t rows_read = 0;
  while (auto row = next()) {
    auto cells = detail::split_csv(*row);
    if (cells.size() != g.ncols)
      throw DimensionMismatch(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(g.ncols) +
                              " columns, got " + std::to_string(cells.size()));
    for (auto c : cells) g.values.push_back(detail::require_double(c, name, lineno, "grid value"));
    ++rows_read;
  }
  if (rows_read != g.nrows)
    throw DimensionMismatch(name + ": expected " + std::to_string(g.nrows) + " rows, got " + std::to_string(rows_read));
  validate_grid(g, name);
  g.source_id = name;
  return g;
}

inline void write_atmospheric_grid(std::ostream& out, const AtmosphericGrid& g) {
  out << kGridHeader << '\n';
  out << name_of(g.pollutant) << ',' << format_hour(g.timestamp) << ',' << format_double(g.lat0) << ','
      << format_double(g.lon0) << ',' << format_double(g.dlat) << ',' << format_double(g.dlon) << ','
      << g.nrows << ',' << g.ncols << ',' << format_double(g.resolution_km) << '\n';
  for (std::size_t r = 0; r < g.nrows; ++r) {
    for (std::size_t c = 0; c < g.ncols; ++c) {
      if (c) out << ',';
      out << format_double(g.at(r, c));
    }
    out << '\n';
  }
}

inline AtmosphericGrid load_atmospheric_grid(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  auto g = parse_atmospheric_grid(in, path.string());
  g.source_id = path.stem().string();
  return g;
}

// Roads (GeoJSON) ---------------------------------------------------------------

inline double polyline_length_km(std::span<const GeoPoint> pts) {
  double len = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance_km(pts[i - 1], pts[i]);
  return len;
}

/// Point halfway along the polyline by arc length.
inline GeoPoint polyline_midpoint(std::span<const GeoPoint> pts) {
  if (pts.size() == 1) return pts.front();
  const double half = polyline_length_km(pts) / 2.0;
  double acc = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance_km(pts[i - 1], pts[i]);
    if (acc + seg >= half && seg > 0) {
      const double f = (half - acc) / seg;
      return {pts[i - 1].lat() + f * (pts[i].lat() - pts[i - 1].lat()),
              pts[i - 1].lon() + f * (pts[i].lon() - pts[i - 1].lon())};
    }
    acc += seg;
  }
  return pts.back();
}

inline std::vector<RoadSegment> parse_roads(std::istream& in, const std::string& name = "roads") {
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (trim(text).empty()) return {};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(name, 0, std::string("invalid GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array())
    throw IngestionError(name, 0, "expected a GeoJSON FeatureCollection");
  std::vector<RoadSegment> out;
  std::unordered_set<std::string> seen;
  std::size_t idx = 0;
  for (const auto& feat : doc["features"]) {
    ++idx;  // features are reported 1-based, as "records"
    try {
      const auto& geom = feat.at("geometry");
      if (geom.at("type") != "LineString") throw IngestionError(name, idx, "geometry must be a LineString");
      const auto& props = feat.at("properties");
      RoadSegment s;
      s.id = props.at("id").is_string() ? props.at("id").get<std::string>() : props.at("id").dump();
      s.functional_class = props.at("functional_class").get<int>();
      s.major = props.at("major").get<bool>();
      for (const auto& c : geom.at("coordinates")) {
        if (!c.is_array() || c.size() < 2) throw IngestionError(name, idx, "bad coordinate");
        s.polyline.emplace_back(c[1].get<double>(), c[0].get<double>());
      }
      if (s.polyline.size() < 2) throw IngestionError(name, idx, "LineString needs at least 2 points");
      if (s.functional_class < 1 || s.functional_class > 5)
        throw IngestionError(name, idx, "functional_class must be in 1..5");
      const double poly_len = polyline_length_km(s.polyline);
      s.length_km = props.contains("length_km") ? props["length_km"].get<double>() : poly_len;
      if (!(s.length_km > 0.0) || std::abs(s.length_km - poly_len) > 0.01 * poly_len)
        throw IngestionError(name, idx, "length_km must be > 0 and within 1% of the polyline length");
      if (!seen.insert(s.id).second) throw IngestionError(name, idx, "duplicate segment id '" + s.id + "'");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(name, idx, std::string("bad road feature: ") + e.what());
    } catch (const InvalidParameter& e) {
      throw IngestionError(name, idx, e.what());
    }
  }
  return out;
}

inline void write_roads(std::ostream& out, std::span<const RoadSegment> roads) {
  // Written by hand so that coordinates keep their shortest round-trip spelling.
  out << "{\"type\":\"FeatureCollection\",\"features\":[";
  for (std::size_t i = 0; i < roads.size(); ++i) {
    const auto& s = roads[i];
    if (i) out << ',';
    out << "\n{\"type\":\"Feature\",\"properties\":{\"id\":" << nlohmann::json(s.id).dump()
        << ",\"functional_class\":" << s.functional_class << ",\"major\":" << (s.major ? "true" : "false")
        << ",\"length_km\":" << format_double(s.length_km) << "},\"geometry\":{\"type\":\"LineString\",\"coordinates\":[";
    for (std::size_t k = 0; k < s.polyline.size(); ++k) {
      if (k) out << ',';
      out << '[' << format_double(s.polyline[k].lon()) << ',' << format_double(s.polyline[k].lat()) << ']';
    }
    out << "]}}";
  }
  out << "\n]}\n";
}

// Traffic ---------------------------------------------------------------------

inline constexpr std::string_view kTrafficHeader = "segment_id,timestamp,jam_factor";

inline std::vector<TrafficObservation> parse_traffic(std::istream& in, const std::string& name = "traffic") {
  std::vector<TrafficObservation> out;
  detail::read_csv(in, name, kTrafficHeader, [&](const auto& f, std::size_t line) {
    detail::check_fields(f, 3, name, line);
    TrafficObservation t{std::string(f[0]), detail::require_hour(f[1], name, line),
                         detail::require_double(f[2], name, line, "jam_factor")};
    if (!(t.jam_factor >= 0.0 && t.jam_factor <= 10.0))
      throw IngestionError(name, line, "jam_factor must be in [0, 10]");
    out.push_back(std::move(t));
  });
  return out;
}

inline void write_traffic(std::ostream& out, std::span<const TrafficObservation> rows) {
  out << kTrafficHeader << '\n';
  for (const auto& t : rows)
    out << t.segment_id << ',' << format_hour(t.timestamp) << ',' << format_double(t.jam_factor) << '\n';
}

// Land cover ------------------------------------------------------------------

inline constexpr std::string_view kLandCoverHeader = "lat,lon,category";

inline std::vector<LandCoverSample> parse_land_cover(std::istream& in, const std::string& name = "land_cover") {
  std::vector<LandCoverSample> out;
  detail::read_csv(in, name, kLandCoverHeader, [&](const auto& f, std::size_t line) {
    detail::check_fields(f, 3, name, line);
    auto cat = parse_land_cover(f[2]);
    if (!cat) throw IngestionError(name, line, "unknown land cover category '" + std::string(f[2]) + "'");
    out.push_back({detail::require_point(f[0], f[1], name, line), *cat});
  });
  return out;
}

inline void write_land_cover(std::ostream& out, std::span<const LandCoverSample> rows) {
  out << kLandCoverHeader << '\n';
  for (const auto& s : rows)
    out << format_double(s.location.lat()) << ',' << format_double(s.location.lon()) << ','
        << name_of(s.category) << '\n';
}

// Power plants ----------------------------------------------------------------

inline constexpr std::string_view kPowerPlantsHeader = "lat,lon,capacity_mw,fuel";

inline std::vector<PowerPlant> parse_power_plants(std::istream& in, const std::string& name = "power_plants") {
  std::vector<PowerPlant> out;
  detail::read_csv(in, name, kPowerPlantsHeader, [&](const auto& f, std::size_t line) {
    detail::check_fields(f, 4, name, line);
    PowerPlant p{detail::require_point(f[0], f[1], name, line),
                 detail::require_double(f[2], name, line, "capacity_mw"), Fuel::Coal};
    if (!std::isfinite(p.capacity_mw) || p.capacity_mw <= 0.0)
      throw IngestionError(name, line, "capacity_mw must be positive and finite");
    if (f[3] == "coal") p.fuel = Fuel::Coal;
    else if (f[3] == "gas") p.fuel = Fuel::Gas;
    else if (f[3] == "oil") p.fuel = Fuel::Oil;
    else throw IngestionError(name, line, "unknown fuel '" + std::string(f[3]) + "'");
    out.push_back(p);
  });
  return out;
}

inline void write_power_plants(std::ostream& out, std::span<const PowerPlant> rows) {
  out << kPowerPlantsHeader << '\n';
  for (const auto& p : rows)
    out << format_double(p.location.lat()) << ',' << format_double(p.location.lon()) << ','
        << format_double(p.capacity_mw) << ',' << name_of(p.fuel) << '\n';
}

// Regions ---------------------------------------------------------------------

inline constexpr std::string_view kRegionsHeader = "name,min_lat,min_lon,max_lat,max_lon,preset";

inline std::vector<Region> parse_regions(std::istream& in, const std::string& name = "regions") {
  std::vector<Region> out;
  std::unordered_set<std::string> seen;
  detail::read_csv(in, name, kRegionsHeader, [&](const auto& f, std::size_t line) {
    detail::check_fields(f, 6, name, line);
    Region r;
    r.name = std::string(f[0]);
    try {
      r.bbox = BoundingBox(detail::require_point(f[1], f[2], name, line), detail::require_point(f[3], f[4], name, line));
      r.preset = parse_preset(f[5]);
    } catch (const InvalidParameter& e) {
      throw IngestionError(name, line, e.what());
    }
    if (!seen.insert(r.name).second) throw IngestionError(name, line, "duplicate region '" + r.name + "'");
    out.push_back(std::move(r));
  });
  return out;
}

inline void write_regions(std::ostream& out, std::span<const Region> regions) {
  out << kRegionsHeader << '\n';
  for (const auto& r : regions)
    out << r.name << ',' << format_double(r.bbox.min().lat()) << ',' << format_double(r.bbox.min().lon()) << ','
        << format_double(r.bbox.max().lat()) << ',' << format_double(r.bbox.max().lon()) << ','
        << to_string(r.preset) << '\n';
}

// Path-based wrappers -----------------------------------------------------------

#define AQE_PATH_LOADER(fn, parse, T)                                         \
  inline std::vector<T> fn(const std::filesystem::path& path) {              \
    auto in = detail::open_in(path);                                          \
    return parse(in, path.string());                                          \
  }
AQE_PATH_LOADER(load_stations, parse_stations, Station)
AQE_PATH_LOADER(load_roads, parse_roads, RoadSegment)
AQE_PATH_LOADER(load_traffic, parse_traffic, TrafficObservation)
AQE_PATH_LOADER(load_land_cover, parse_land_cover, LandCoverSample)
AQE_PATH_LOADER(load_power_plants, parse_power_plants, PowerPlant)
AQE_PATH_LOADER(load_regions, parse_regions, Region)
#undef AQE_PATH_LOADER

inline std::vector<StationMeasurement> load_measurements(const std::filesystem::path& path,
                                                         LoadStats* stats = nullptr) {
  auto in = detail::open_in(path);
  return parse_measurements(in, path.string(), stats);
}

template <typename Writer, typename Data>
void save_with(const std::filesystem::path& path, Writer&& writer, const Data& data) {
  auto out = detail::open_out(path);
  writer(out, data);
  if (!out) throw Error("io", "failed writing " + path.string());
}

}  // namespace aqe
