#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqe/dataset.hpp"
#include "aqe/features.hpp"
#include "aqe/model.hpp"
#include "aqe/world.hpp"

namespace aqe {

/// The layout must be the one the model was trained on.
inline void check_model_layout(const MLPModel& model, const FeatureLayout& layout) {
  if (model.input_dim() != layout.size() || (!model.feature_names.empty() && model.feature_names != layout.names()))
    throw DimensionMismatch("model features do not match the configured feature layout (preset " +
                            std::string(to_string(layout.config().preset)) + ")");
}

/// Prediction at one location and hour.
inline Concentrations predict_at(const World& world, const MLPModel& model, const FeatureLayout& layout,
                                 const GeoPoint& l, std::size_t hour_idx) {
  const auto fv = compute_feature_vector(world, l, hour_idx, layout);
  return predict(model, fv.values);
}

/// True when some region's bounding box contains l.
inline bool covered(const World& world, const GeoPoint& l) {
  return std::any_of(world.regions().begin(), world.regions().end(),
                     [&](const Region& r) { return r.bbox.contains(l); });
}

// Grid maps ----------------------------------------------------------------------

struct GridCell {
  GeoPoint center;
  Concentrations c{};
  double paqi = 0;
};

struct GridMap {
  BoundingBox bbox;
  double cell_m = 50;
  Hour timestamp;
  std::size_t nrows = 0, ncols = 0;
  std::vector<GridCell> cells;  // row-major, row 0 at min_lat

  const GridCell& at(std::size_t r, std::size_t c) const { return cells[r * ncols + c]; }
};

/// Number of cells of `cell_km` needed to cover `span_km`, at least one.
inline std::size_t cells_for(double span_km, double cell_km) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span_km / cell_km - 1e-9)));
}

/// Predicts at the center of every cell of a raster over bbox. Cells divide the
/// box evenly, so they are at most `cell_m` wide.
inline GridMap render_grid(const World& world, const MLPModel& model, const FeatureLayout& layout,
                           const BoundingBox& bbox, double cell_m, std::size_t hour_idx,
                           const AqiBreakpoints& breakpoints) {
  check_model_layout(model, layout);
  if (!(cell_m > 0.0)) throw InvalidParameter("cell size must be > 0");
  const bool inside = std::any_of(world.regions().begin(), world.regions().end(), [&](const Region& r) {
    return r.bbox.contains(bbox);
  });
  if (!inside) throw NotFound("map area is outside every region of the loaded world");
  GridMap g;
  g.bbox = bbox;
  g.cell_m = cell_m;
  g.timestamp = world.hours().at(hour_idx);
  const double mid = 0.5 * (bbox.min().lat() + bbox.max().lat());
  const double span_ns = (bbox.max().lat() - bbox.min().lat()) * kKmPerDegLat;
  const double span_ew = distance_km(GeoPoint(mid, bbox.min().lon()), GeoPoint(mid, bbox.max().lon()));
  g.nrows = cells_for(span_ns, cell_m / 1000.0);
  g.ncols = cells_for(span_ew, cell_m / 1000.0);
  g.cells.resize(g.nrows * g.ncols);
  const double dlat = (bbox.max().lat() - bbox.min().lat()) / static_cast<double>(g.nrows);
  const double dlon = (bbox.max().lon() - bbox.min().lon()) / static_cast<double>(g.ncols);
  parallel_for(g.cells.size(), [&](std::size_t k) {
    const std::size_t r = k / g.ncols, c = k % g.ncols;
    auto& cell = g.cells[k];
    cell.center = GeoPoint(bbox.min().lat() + (static_cast<double>(r) + 0.5) * dlat,
                           bbox.min().lon() + (static_cast<double>(c) + 0.5) * dlon);
    cell.c = predict_at(world, model, layout, cell.center, hour_idx);
    cell.paqi = paqi(breakpoints, cell.c);
  });
  return g;
}

inline void write_grid_csv(std::ostream& out, const GridMap& g) {
  out << "lat,lon,no2,o3,pm25,pm10,paqi\n";
  for (const auto& cell : g.cells) {
    out << format_double(cell.center.lat()) << ',' << format_double(cell.center.lon());
    for (double v : cell.c) out << ',' << format_double(v);
    out << ',' << format_double(cell.paqi) << '\n';
  }
}

// Road graph -----------------------------------------------------------------------

struct GraphEdge {
  std::size_t a = 0, b = 0;
  double length_km = 0;
  int functional_class = 1;
  std::size_t segment = 0;  // index into the source segment list
  GeoPoint midpoint;
  double paqi_weight = 1.0;
};

struct RoadGraph {
  std::vector<GeoPoint> nodes;
  std::vector<GraphEdge> edges;
  std::vector<std::vector<std::size_t>> adjacency;  // edge indices per node

  std::size_t other(std::size_t edge, std::size_t node) const {
    return edges[edge].a == node ? edges[edge].b : edges[edge].a;
  }

  /// Closest node to l; ties go to the lower index.
  std::size_t nearest_node(const GeoPoint& l) const {
    if (nodes.empty()) throw NotFound("road graph is empty");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = distance_km(l, nodes[i]);
      if (d < best_d) best = i, best_d = d;
    }
    return best;
  }
};

inline constexpr double kNodeQuantumDeg = 1e-6;
inline constexpr double kMinPaqiWeight = 1e-3;

/// One node per distinct polyline endpoint (after 1e-6° quantization, placed at
/// the first endpoint seen) and one undirected edge per segment. Segments
/// whose endpoints coincide are dropped.
inline RoadGraph build_graph(std::span<const RoadSegment> segments) {
  RoadGraph g;
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> ids;
  auto node = [&](const GeoPoint& p) {
    const std::pair<std::int64_t, std::int64_t> key{std::llround(p.lat() / kNodeQuantumDeg),
                                                    std::llround(p.lon() / kNodeQuantumDeg)};
    auto [it, fresh] = ids.emplace(key, g.nodes.size());
    if (fresh) {
      g.nodes.push_back(p);
      g.adjacency.emplace_back();
    }
    return it->second;
  };
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.polyline.size() < 2) continue;
    const auto a = node(s.polyline.front());
    const auto b = node(s.polyline.back());
    if (a == b) continue;
    GraphEdge e;
    e.a = a;
    e.b = b;
    e.length_km = s.length_km;
    e.functional_class = s.functional_class;
    e.segment = i;
    e.midpoint = polyline_midpoint(s.polyline);
    g.adjacency[a].push_back(g.edges.size());
    g.adjacency[b].push_back(g.edges.size());
    g.edges.push_back(e);
  }
  return g;
}

/// Sets every edge weight to the PAQI predicted at its midpoint, floored at
/// kMinPaqiWeight.
inline void annotate_paqi(RoadGraph& g, const World& world, const MLPModel& model, const FeatureLayout& layout,
                          std::size_t hour_idx, const AqiBreakpoints& breakpoints) {
  check_model_layout(model, layout);
  parallel_for(g.edges.size(), [&](std::size_t i) {
    auto& e = g.edges[i];
    const auto c = predict_at(world, model, layout, e.midpoint, hour_idx);
    e.paqi_weight = std::max(paqi(breakpoints, c), kMinPaqiWeight);
  });
}

// Routing --------------------------------------------------------------------------

struct Path {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> edges;
  double length_km = 0;
  double exposure = 0;  // Σ length·paqi_weight
};

struct RoutePlan {
  Path shortest;
  Path clean;
  double length_delta_pct = 0;    // clean vs shortest
  double exposure_delta_pct = 0;  // clean vs shortest
};

inline double path_exposure(const RoadGraph& g, std::span<const std::size_t> edges) {
  double e = 0;
  for (auto i : edges) e += g.edges[i].length_km * g.edges[i].paqi_weight;
  return e;
}

inline double path_length(const RoadGraph& g, std::span<const std::size_t> edges) {
  double l = 0;
  for (auto i : edges) l += g.edges[i].length_km;
  return l;
}

/// Dijkstra from `from` to `to` with edge cost cost(edge). Equal-cost
/// alternatives resolve toward lower node indices.
template <typename Cost>
Path dijkstra(const RoadGraph& g, std::size_t from, std::size_t to, Cost&& cost) {
  const auto n = g.nodes.size();
  if (from >= n || to >= n) throw InvalidParameter("route endpoint is not a graph node");
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> via(n, SIZE_MAX);
  std::vector<bool> done(n, false);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[from] = 0;
  pq.push({0.0, from});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (done[u]) continue;
    done[u] = true;
    if (u == to) break;
    for (auto e : g.adjacency[u]) {
      const auto v = g.other(e, u);
      const double nd = d + cost(g.edges[e]);
      if (nd < dist[v]) {
        dist[v] = nd;
        via[v] = e;
        pq.push({nd, v});
      }
    }
  }
  if (!done[to]) throw NotFound("destination is not reachable from the origin");
  Path p;
  for (std::size_t v = to; v != from; v = g.other(via[v], v)) {
    p.nodes.push_back(v);
    p.edges.push_back(via[v]);
  }
  p.nodes.push_back(from);
  std::reverse(p.nodes.begin(), p.nodes.end());
  std::reverse(p.edges.begin(), p.edges.end());
  p.length_km = path_length(g, p.edges);
  p.exposure = path_exposure(g, p.edges);
  return p;
}

inline double pct_change(double candidate, double reference) {
  if (reference == 0.0) return 0.0;
  return 100.0 * (candidate - reference) / reference;
}

/// Shortest path (Σ length) and clean path (Σ length·paqi_weight).
inline RoutePlan route(const RoadGraph& g, std::size_t from, std::size_t to) {
  RoutePlan r;
  r.shortest = dijkstra(g, from, to, [](const GraphEdge& e) { return e.length_km; });
  r.clean = dijkstra(g, from, to, [](const GraphEdge& e) { return e.length_km * e.paqi_weight; });
  r.length_delta_pct = pct_change(r.clean.length_km, r.shortest.length_km);
  r.exposure_delta_pct = pct_change(r.clean.exposure, r.shortest.exposure);
  return r;
}

inline nlohmann::json path_geometry(const RoadGraph& g, const Path& p) {
  auto coords = nlohmann::json::array();
  for (auto n : p.nodes) coords.push_back({g.nodes[n].lon(), g.nodes[n].lat()});
  return {{"type", "LineString"}, {"coordinates", coords}};
}

/// GeoJSON FeatureCollection with the shortest and the clean route.
inline nlohmann::json route_geojson(const RoadGraph& g, const RoutePlan& r) {
  auto feature = [&](const char* kind, const Path& p) {
    return nlohmann::json{{"type", "Feature"},
                          {"geometry", path_geometry(g, p)},
                          {"properties",
                           {{"route", kind},
                            {"length_km", p.length_km},
                            {"exposure", p.exposure},
                            {"nodes", p.nodes.size()}}}};
  };
  return {{"type", "FeatureCollection"},
          {"features", {feature("shortest", r.shortest), feature("clean", r.clean)}},
          {"properties",
           {{"length_delta_pct", r.length_delta_pct},
            {"exposure_delta_pct", r.exposure_delta_pct},
            {"exposure_metric", "sum of length_km * paqi"}}}};
}

}  // namespace aqe
