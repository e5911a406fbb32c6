#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "aqe/world.hpp"
#include "aqe/random.hpp"
#include "support.hpp"

using namespace aqe;

TEST(Time, ParseAndFormat) {
  auto h = parse_hour("2018-06-01T00:00Z");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->value, 424392);
  EXPECT_EQ(format_hour(*h), "2018-06-01T00:00Z");
  EXPECT_EQ(parse_hour("2018-06-01T05:00:00+00:00")->value, 424397);
  EXPECT_FALSE(parse_hour("2018-06-01T05:30Z"));
  EXPECT_FALSE(parse_hour("2018-02-30T05:00Z"));
  EXPECT_FALSE(parse_hour("2018-06-01 05:00Z"));
  EXPECT_FALSE(parse_hour("2018-06-01T05:00+02:00"));
  EXPECT_EQ(format_hour(Hour{0}), "1970-01-01T00:00Z");
  EXPECT_EQ(format_hour(Hour{-1}), "1969-12-31T23:00Z");
}

TEST(Time, RoundedParse) {
  EXPECT_EQ(parse_hour_rounded("2018-06-01T05:29:59Z")->value, 424397);
  EXPECT_EQ(parse_hour_rounded("2018-06-01T05:30Z")->value, 424398);
  EXPECT_EQ(parse_hour_rounded("2018-06-01T23:45Z")->value, 424392 + 24);
  EXPECT_FALSE(parse_hour_rounded("noon"));
}

TEST(Time, FormatRoundTripsOverYears) {
  for (std::int64_t v = 0; v < 24 * 366 * 60; v += 997) {
    const Hour h{v};
    EXPECT_EQ(parse_hour(format_hour(h))->value, v);
  }
}

TEST(Numbers, ShortestRoundTrip) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal(0, 1e3);
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_FALSE(parse_double("1.2.3"));
  EXPECT_FALSE(parse_double(""));
}

TEST(Stations, RoundTripAndErrors) {
  std::vector<Station> st{{"a", {45, 4}, "r1"}, {"b", {45.5, 4.25}, "r1"}, {"a", {46, 5}, "r2"}};
  std::stringstream ss;
  write_stations(ss, st);
  EXPECT_EQ(parse_stations(ss), st);

  std::stringstream dup("station_id,lat,lon,region\na,45,4,r\na,45,4,r\n");
  try {
    parse_stations(dup, "s.csv");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.kind(), "ingestion");
  }
  std::stringstream bad_lat("station_id,lat,lon,region\na,95,4,r\n");
  EXPECT_THROW(parse_stations(bad_lat), IngestionError);
  std::stringstream bad_header("id,lat,lon,region\n");
  EXPECT_THROW(parse_stations(bad_header), IngestionError);
}

TEST(Measurements, NaHandling) {
  std::stringstream ss(
      "station_id,timestamp,no2,o3,pm25,pm10\n"
      "a,2018-06-01T00:00Z,10,,-3,nan\n"
      "a,2018-06-01T01:00Z,11,20,5,6\n");
  LoadStats stats;
  auto rows = parse_measurements(ss, "m", &stats);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].values[0], 10.0);
  EXPECT_FALSE(rows[0].values[1]);
  EXPECT_FALSE(rows[0].values[2]);
  EXPECT_FALSE(rows[0].values[3]);
  EXPECT_EQ(stats.invalid_values, 2u);

  std::stringstream out;
  write_measurements(out, rows);
  std::stringstream back(out.str());
  EXPECT_EQ(parse_measurements(back), rows);

  std::stringstream junk("station_id,timestamp,no2,o3,pm25,pm10\na,2018-06-01T00:00Z,ten,,,\n");
  EXPECT_THROW(parse_measurements(junk), IngestionError);
}

namespace {

// Direct restatement of the filter: sorted copies, textbook median.
double ref_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::vector<std::optional<double>> ref_hampel(const std::vector<std::optional<double>>& s, std::size_t window,
                                              double k) {
  auto out = s;
  const long half = static_cast<long>(window / 2);
  for (long t = 0; t < static_cast<long>(s.size()); ++t) {
    if (!s[t]) continue;
    std::vector<double> w;
    for (long i = t - half; i <= t + half; ++i)
      if (i >= 0 && i < static_cast<long>(s.size()) && s[i]) w.push_back(*s[i]);
    if (w.size() < 3) continue;
    const double med = ref_median(w);
    std::vector<double> dev;
    for (double x : w) dev.push_back(std::abs(x - med));
    if (std::abs(*s[t] - med) > k * 1.4826 * ref_median(dev)) out[t].reset();
  }
  return out;
}

}  // namespace

TEST(Hampel, MatchesReference) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::optional<double>> s(200);
    for (auto& v : s) {
      if (rng.bernoulli(0.1)) continue;
      v = 30 + rng.normal(0, 3);
      if (rng.bernoulli(0.02)) *v *= 10;
    }
    const std::size_t window = 3 + rng.index(60);
    const double k = rng.uniform(1, 8);
    EXPECT_EQ(hampel_filter(s, window, k), ref_hampel(s, window, k));
  }
}

TEST(Hampel, RemovesSpikeKeepsSmoothSeries) {
  std::vector<std::optional<double>> s;
  for (int i = 0; i < 100; ++i) s.push_back(20.0 + 0.1 * (i % 7));
  s[50] = 500.0;
  auto out = hampel_filter(s, 48, 6.0);
  EXPECT_FALSE(out[50]);
  for (int i = 0; i < 100; ++i)
    if (i != 50) EXPECT_TRUE(out[i]);
  EXPECT_THROW(hampel_filter(s, 2, 6.0), InvalidParameter);
}

TEST(Grid, RoundTripAndShapeErrors) {
  AtmosphericGrid g;
  g.pollutant = Pollutant::O3;
  g.timestamp = Hour{424392};
  g.lat0 = 45, g.lon0 = 4, g.dlat = 0.1, g.dlon = 0.2;
  g.nrows = 2, g.ncols = 3;
  g.values = {1, 2, 3, 4, 5, 6};
  g.resolution_km = 10;
  std::stringstream ss;
  write_atmospheric_grid(ss, g);
  auto back = parse_atmospheric_grid(ss, "src");
  g.source_id = "src";
  EXPECT_EQ(back, g);
  EXPECT_EQ(back.at(1, 2), 6.0);

  std::stringstream short_row(std::string(kGridHeader) + "\nO3,2018-06-01T00:00Z,45,4,0.1,0.2,2,3,10\n1,2,3\n4,5\n");
  EXPECT_THROW(parse_atmospheric_grid(short_row), DimensionMismatch);
  std::stringstream negative(std::string(kGridHeader) + "\nO3,2018-06-01T00:00Z,45,4,0.1,0.2,1,2,10\n1,-2\n");
  EXPECT_THROW(parse_atmospheric_grid(negative), IngestionError);
}

TEST(Roads, RoundTripAndValidation) {
  RoadSegment s;
  s.id = "r1";
  s.polyline = {GeoPoint(45, 4), GeoPoint(45.001, 4.001), GeoPoint(45.002, 4.001)};
  s.length_km = polyline_length_km(s.polyline);
  s.functional_class = 3;
  s.major = true;
  std::stringstream ss;
  write_roads(ss, std::vector{s});
  auto back = parse_roads(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], s);

  std::stringstream wrong_len(
      R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"x","functional_class":2,"major":false,"length_km":5},"geometry":{"type":"LineString","coordinates":[[4,45],[4.001,45]]}}]})");
  EXPECT_THROW(parse_roads(wrong_len), IngestionError);
  std::stringstream bad_class(
      R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"x","functional_class":9,"major":false},"geometry":{"type":"LineString","coordinates":[[4,45],[4.001,45]]}}]})");
  EXPECT_THROW(parse_roads(bad_class), IngestionError);
  std::stringstream not_json("{");
  EXPECT_THROW(parse_roads(not_json), IngestionError);
}

TEST(Roads, MidpointIsHalfwayAlong) {
  std::vector<GeoPoint> pl{{0, 0}, {0.005, 0}, {0.005, 0.02}};
  const auto mid = polyline_midpoint(pl);
  const double total = polyline_length_km(pl);
  EXPECT_NEAR(distance_km(pl[0], pl[1]) + distance_km(pl[1], mid), total / 2, 1e-9);
  EXPECT_DOUBLE_EQ(mid.lat(), 0.005);
}

TEST(Traffic, JamRange) {
  std::stringstream ok("segment_id,timestamp,jam_factor\nr1,2018-06-01T00:00Z,3.5\n");
  EXPECT_EQ(parse_traffic(ok).front().jam_factor, 3.5);
  std::stringstream bad("segment_id,timestamp,jam_factor\nr1,2018-06-01T00:00Z,11\n");
  EXPECT_THROW(parse_traffic(bad), IngestionError);
}

TEST(LandAndPlants, Parse) {
  std::stringstream lc("lat,lon,category\n45,4,Industry\n45,4.1,Green\n");
  auto s = parse_land_cover(lc);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].category, LandCover::Industry);
  std::stringstream lc_bad("lat,lon,category\n45,4,Desert\n");
  EXPECT_THROW(parse_land_cover(lc_bad), IngestionError);

  std::stringstream pp("lat,lon,capacity_mw,fuel\n45,4,500,gas\n");
  EXPECT_EQ(parse_power_plants(pp).front().fuel, Fuel::Gas);
  std::stringstream pp_bad("lat,lon,capacity_mw,fuel\n45,4,0,gas\n");
  EXPECT_THROW(parse_power_plants(pp_bad), IngestionError);
}

TEST(Regions, RoundTrip) {
  std::vector<Region> r{{"metro", BoundingBox({48, 2}, {49, 3}), FeaturePreset::Full},
                        {"sparse", BoundingBox({45, 4}, {46, 5}), FeaturePreset::Reduced}};
  std::stringstream ss;
  write_regions(ss, r);
  EXPECT_EQ(parse_regions(ss), r);
}

TEST(WorldDir, SaveLoadPreservesData) {
  testing_support::TempDir dir("world");
  auto sw = generate_synthetic_world(testing_support::small_spec(4, 6));
  save_world(dir.path(), sw.data);
  auto back = load_world(dir.path(), 0);
  EXPECT_EQ(back.regions, sw.data.regions);
  EXPECT_EQ(back.stations, sw.data.stations);
  EXPECT_EQ(back.measurements, sw.data.measurements);
  EXPECT_EQ(back.roads, sw.data.roads);
  EXPECT_EQ(back.traffic, sw.data.traffic);
  EXPECT_EQ(back.land_cover, sw.data.land_cover);
  EXPECT_EQ(back.power_plants, sw.data.power_plants);
  ASSERT_EQ(back.grids.size(), sw.data.grids.size());
  for (const auto& g : back.grids) {
    auto it = std::find_if(sw.data.grids.begin(), sw.data.grids.end(), [&](const AtmosphericGrid& o) {
      return o.pollutant == g.pollutant && o.timestamp == g.timestamp;
    });
    ASSERT_NE(it, sw.data.grids.end());
    EXPECT_EQ(it->values, g.values);
  }
}

TEST(WorldIndex, HourAxisAndLookups) {
  auto w = testing_support::small_world(2, 10);
  ASSERT_EQ(w.hours().size(), 10u);
  EXPECT_EQ(format_hour(w.hours().front()), "2018-06-01T00:00Z");
  EXPECT_EQ(*w.hour_index(w.hours()[3]), 3u);
  EXPECT_FALSE(w.hour_index(Hour{1}));
  EXPECT_EQ(*w.nearest_hour_index(Hour{w.hours().back().value + 100}), 9u);
  EXPECT_EQ(*w.nearest_hour_index(Hour{0}), 0u);
  EXPECT_EQ(w.stations_in_region("metro").size(), 12u);
  EXPECT_THROW(w.region("nowhere"), NotFound);
}
