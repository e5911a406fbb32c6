#include <gtest/gtest.h>

#include <sstream>

#include "aqe/apps.hpp"
#include "aqe/random.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace aqe;
using testing_support::Brute;
using testing_support::enumerate;
using testing_support::random_graph;

namespace {

void expect_valid_path(const RoadGraph& g, const Path& p, std::size_t from, std::size_t to) {
  ASSERT_EQ(p.nodes.size(), p.edges.size() + 1);
  EXPECT_EQ(p.nodes.front(), from);
  EXPECT_EQ(p.nodes.back(), to);
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    const auto& e = g.edges[p.edges[i]];
    const bool fwd = e.a == p.nodes[i] && e.b == p.nodes[i + 1];
    const bool back = e.b == p.nodes[i] && e.a == p.nodes[i + 1];
    EXPECT_TRUE(fwd || back);
  }
}

MLPModel constant_model(std::size_t in, double no2) {
  MLPModel m(in, 2, 2);
  m.b3(0) = no2;
  m.b3(1) = 10;
  m.b3(2) = 5;
  m.b3(3) = 5;
  return m;
}

}  // namespace

TEST(Routing, MatchesBruteForceOnSmallGraphs) {
  Rng rng(99);
  int compared = 0;
  for (int k = 0; k < 200; ++k) {
    const auto g = random_graph(rng);
    const auto from = rng.index(g.nodes.size()), to = rng.index(g.nodes.size());
    std::vector<bool> seen(g.nodes.size(), false);
    seen[from] = true;
    Brute len, exp;
    enumerate(g, from, to, seen, 0, [](const GraphEdge& e) { return e.length_km; }, len);
    enumerate(g, from, to, seen, 0, [](const GraphEdge& e) { return e.length_km * e.paqi_weight; }, exp);
    if (!std::isfinite(len.best)) {
      EXPECT_THROW(route(g, from, to), NotFound);
      continue;
    }
    const auto r = route(g, from, to);
    expect_valid_path(g, r.shortest, from, to);
    expect_valid_path(g, r.clean, from, to);
    EXPECT_NEAR(r.shortest.length_km, len.best, 1e-12 * (1 + len.best));
    EXPECT_NEAR(r.clean.exposure, exp.best, 1e-12 * (1 + exp.best));
    EXPECT_LE(r.clean.exposure, r.shortest.exposure * (1 + 1e-12));
    EXPECT_GE(r.clean.length_km, r.shortest.length_km * (1 - 1e-12));
    ++compared;
  }
  EXPECT_GT(compared, 150);
}

TEST(Routing, SameNodeIsEmptyPath) {
  Rng rng(1);
  const auto g = random_graph(rng);
  const auto r = route(g, 0, 0);
  EXPECT_EQ(r.shortest.nodes, std::vector<std::size_t>{0});
  EXPECT_EQ(r.shortest.length_km, 0.0);
  EXPECT_EQ(r.length_delta_pct, 0.0);
  EXPECT_THROW(route(g, 0, g.nodes.size()), InvalidParameter);
}

TEST(Routing, CleanDetourAroundPollutedEdge) {
  // Square a-b-c plus a direct a-c edge that is short but dirty.
  std::vector<RoadSegment> segs(3);
  const GeoPoint a(45, 7), b(45.01, 7), c(45.01, 7.01);
  segs[0] = {"ab", {a, b}, 1.0, 1, false};
  segs[1] = {"bc", {b, c}, 1.0, 1, false};
  segs[2] = {"ac", {a, c}, 1.5, 1, false};
  auto g = build_graph(segs);
  g.edges[2].paqi_weight = 100;
  g.edges[0].paqi_weight = g.edges[1].paqi_weight = 10;
  const auto r = route(g, g.nearest_node(a), g.nearest_node(c));
  EXPECT_EQ(r.shortest.edges, std::vector<std::size_t>{2});
  EXPECT_EQ(r.clean.edges, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(r.shortest.exposure, 150);
  EXPECT_DOUBLE_EQ(r.clean.exposure, 20);
  EXPECT_NEAR(r.length_delta_pct, 100.0 / 3, 1e-12);
  EXPECT_NEAR(r.exposure_delta_pct, -100.0 * 130 / 150, 1e-12);

  const auto gj = route_geojson(g, r);
  EXPECT_EQ(gj["type"], "FeatureCollection");
  ASSERT_EQ(gj["features"].size(), 2u);
  EXPECT_EQ(gj["features"][1]["properties"]["route"], "clean");
  EXPECT_EQ(gj["features"][1]["geometry"]["coordinates"].size(), 3u);
  EXPECT_DOUBLE_EQ(gj["features"][0]["geometry"]["coordinates"][0][0].get<double>(), 7.0);
}

TEST(Graph, MergesSharedEndpoints) {
  std::vector<RoadSegment> segs(4);
  segs[0] = {"x", {{45, 7}, {45.001, 7}}, 0.1, 2, false};
  segs[1] = {"y", {{45.0010000001, 7}, {45.001, 7.002}}, 0.2, 3, true};
  segs[2] = {"loop", {{45, 7}, {45.0005, 7.0005}, {45, 7}}, 0.3, 1, false};
  segs[3] = {"lonely", {{46, 8}}, 0, 1, false};
  const auto g = build_graph(segs);
  EXPECT_EQ(g.nodes.size(), 3u);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[0].b, g.edges[1].a);
  EXPECT_EQ(g.edges[1].segment, 1u);
  EXPECT_EQ(g.edges[1].functional_class, 3);
  EXPECT_EQ(g.adjacency[g.edges[0].b].size(), 2u);
  EXPECT_EQ(g.nearest_node(GeoPoint(45.0011, 7.0001)), g.edges[0].b);
  EXPECT_THROW(RoadGraph{}.nearest_node(GeoPoint(0, 0)), NotFound);
}

class Maps : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { world_ = new World(testing_support::small_world(2, 4)); }
  static void TearDownTestSuite() { delete world_; }
  static World* world_;
};
World* Maps::world_ = nullptr;

TEST_F(Maps, GridCoversBoxWithCellCentres) {
  const auto& w = *world_;
  FeatureLayout layout{FeatureConfig{}};
  const auto model = constant_model(layout.size(), 60);
  const auto& box = w.regions()[0].bbox;
  const GeoPoint lo(box.min().lat() + 0.01, box.min().lon() + 0.01);
  const BoundingBox sub(lo, offset_km(lo, 1.0, 0.75));
  const auto b = AqiBreakpoints::who_default();
  const auto g = render_grid(w, model, layout, sub, 250, 0, b);
  EXPECT_EQ(g.nrows, 4u);
  EXPECT_EQ(g.ncols, 3u);
  ASSERT_EQ(g.cells.size(), 12u);
  const double dlat = (sub.max().lat() - sub.min().lat()) / 4;
  EXPECT_NEAR(g.at(0, 0).center.lat(), sub.min().lat() + dlat / 2, 1e-12);
  EXPECT_NEAR(g.at(3, 2).center.lon(), sub.max().lon() - (sub.max().lon() - sub.min().lon()) / 6, 1e-12);
  for (const auto& c : g.cells) {
    EXPECT_TRUE(sub.contains(c.center));
    EXPECT_DOUBLE_EQ(c.c[0], 60);
    EXPECT_DOUBLE_EQ(c.paqi, 75);
  }
  std::ostringstream out;
  write_grid_csv(out, g);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 13);
}

TEST_F(Maps, RejectsAreasOutsideRegions) {
  const auto& w = *world_;
  FeatureLayout layout{FeatureConfig{}};
  const auto model = constant_model(layout.size(), 1);
  const auto b = AqiBreakpoints::who_default();
  const auto& box = w.regions()[0].bbox;
  const BoundingBox out(box.max(), GeoPoint(box.max().lat() + 0.1, box.max().lon() + 0.1));
  EXPECT_THROW(render_grid(w, model, layout, out, 50, 0, b), NotFound);
  EXPECT_THROW(render_grid(w, model, layout, box, 0, 0, b), InvalidParameter);
  EXPECT_THROW(render_grid(w, constant_model(3, 1), layout, box, 50, 0, b), DimensionMismatch);
}

TEST_F(Maps, AnnotatedGraphRoutes) {
  const auto& w = *world_;
  FeatureLayout layout{FeatureConfig{}};
  const auto model = constant_model(layout.size(), 0);
  auto g = build_graph(w.roads());
  ASSERT_GT(g.edges.size(), 10u);
  annotate_paqi(g, w, model, layout, 0, AqiBreakpoints::who_default());
  // NO2 0, O3 10, PM 5: the PM2.5 index dominates.
  for (const auto& e : g.edges) EXPECT_DOUBLE_EQ(e.paqi_weight, 10.0);
}
