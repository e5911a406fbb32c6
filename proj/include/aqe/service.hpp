#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aqe/pipeline.hpp"

namespace aqe {

inline constexpr const char* kVersion = "0.1.0";

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Everything one request needs. Immutable once published.
struct Snapshot {
  std::shared_ptr<const World> world;
  MLPModel model;
  FeatureLayout layout{FeatureConfig{}};
  AqiBreakpoints breakpoints;
  std::string fingerprint;
  std::size_t route_hour = 0;
  std::map<std::string, RoadGraph> graphs;  // per region, annotated at route_hour
};

/// Query handlers over a swappable model snapshot. Handlers never block each
/// other; reload() builds a complete snapshot before publishing it.
class QueryService {
 public:
  QueryService(EngineConfig cfg, std::filesystem::path model_path)
      : cfg_(std::move(cfg)), model_path_(std::move(model_path)) {
    cfg_.validate();
    world_ = std::make_shared<const World>(open_world(cfg_));
    reload();
  }

  /// Loads the model file again and swaps it in.
  void reload() { publish(load_model(model_path_)); }

  void publish(MLPModel model) {
    auto s = std::make_shared<Snapshot>();
    s->world = world_;
    s->layout = layout_for(cfg_, model);
    s->breakpoints = cfg_.load_breakpoints_or_default();
    s->fingerprint = model_fingerprint(model);
    s->model = std::move(model);
    s->route_hour = world_->hours().empty() ? 0 : world_->hours().size() - 1;
    for (const auto& r : world_->regions()) {
      auto g = region_graph(*world_, r.name);
      if (!world_->hours().empty()) annotate_paqi(g, *world_, s->model, s->layout, s->route_hour, s->breakpoints);
      s->graphs.emplace(r.name, std::move(g));
    }
    std::lock_guard lock(mu_);
    snap_ = std::move(s);
  }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(mu_);
    return snap_;
  }

  using Params = std::multimap<std::string, std::string>;

  HttpReply health() const {
    auto s = snapshot();
    nlohmann::json j{{"status", "ok"},
                     {"version", kVersion},
                     {"model", s->fingerprint},
                     {"preset", to_string(s->model.preset)},
                     {"hours", s->world->hours().size()}};
    return {200, j.dump()};
  }

  HttpReply predict(const Params& q) const {
    return guarded([&] {
      auto s = snapshot();
      const auto lat = number(q, "lat"), lon = number(q, "lon");
      const auto l = point(lat, lon);
      const auto& world = *s->world;
      if (!covered(world, l)) return error(422, "out_of_coverage", "location is outside every loaded region");
      if (world.hours().empty()) return error(422, "out_of_coverage", "no data hours are loaded");
      const auto time = text(q, "time", false);
      const auto h = hour_for(world, time);
      const auto fv = compute_feature_vector(world, l, h, s->layout);
      const auto c = aqe::predict(s->model, fv.values);
      const double index = paqi(s->breakpoints, c);
      auto imputed = nlohmann::json::array();
      for (std::size_t i = 0; i < fv.size(); ++i)
        if (fv.na[i]) imputed.push_back(s->layout.names()[i]);
      nlohmann::json j{{"lat", lat},
                       {"lon", lon},
                       {"time", format_hour(world.hours()[h])},
                       {"requested_time", time},
                       {"no2", c[0]},
                       {"o3", c[1]},
                       {"pm25", c[2]},
                       {"pm10", c[3]},
                       {"paqi", index},
                       {"category", name_of(categorize(s->breakpoints, index))},
                       {"imputed", imputed},
                       {"model", s->fingerprint}};
      return HttpReply{200, j.dump()};
    });
  }

  HttpReply route(const Params& q) const {
    return guarded([&] {
      auto s = snapshot();
      const auto from = point(number(q, "from_lat"), number(q, "from_lon"));
      const auto to = point(number(q, "to_lat"), number(q, "to_lon"));
      const auto& world = *s->world;
      const Region* region = nullptr;
      for (const auto& r : world.regions())
        if (r.bbox.contains(from) && r.bbox.contains(to)) {
          region = &r;
          break;
        }
      if (!region) return error(422, "out_of_coverage", "both endpoints must lie in one loaded region");
      const auto& g = s->graphs.at(region->name);
      if (g.nodes.empty()) return error(422, "out_of_coverage", "region has no road network");
      RoutePlan plan;
      try {
        plan = aqe::route(g, g.nearest_node(from), g.nearest_node(to));
      } catch (const NotFound& e) {
        return error(422, "unreachable", e.what());
      }
      auto j = route_geojson(g, plan);
      j["properties"]["time"] = format_hour(world.hours()[s->route_hour]);
      j["properties"]["region"] = region->name;
      j["properties"]["model"] = s->fingerprint;
      return HttpReply{200, j.dump()};
    });
  }

  HttpReply reload_endpoint() {
    return guarded([&] {
      reload();
      return health();
    });
  }

  /// Registers the endpoints on an httplib server.
  void mount(httplib::Server& svr) {
    auto params = [](const httplib::Request& req) {
      Params p;
      for (const auto& [k, v] : req.params) p.emplace(k, v);
      return p;
    };
    auto send = [](httplib::Response& res, const HttpReply& r) {
      res.status = r.status;
      res.set_content(r.body, "application/json");
    };
    svr.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    svr.Get("/v1/predict", [this, params, send](const httplib::Request& req, httplib::Response& res) {
      send(res, predict(params(req)));
    });
    svr.Get("/v1/route", [this, params, send](const httplib::Request& req, httplib::Response& res) {
      send(res, route(params(req)));
    });
    svr.Post("/v1/reload",
             [this, send](const httplib::Request&, httplib::Response& res) { send(res, reload_endpoint()); });
  }

 private:
  struct BadRequest : Error {
    explicit BadRequest(const std::string& m) : Error("bad_request", m) {}
  };

  static HttpReply error(int status, const std::string& kind, const std::string& message) {
    nlohmann::json j{{"error", {{"status", status}, {"kind", kind}, {"message", message}}}};
    return {status, j.dump()};
  }

  template <typename Fn>
  static HttpReply guarded(Fn&& fn) {
    try {
      return fn();
    } catch (const BadRequest& e) {
      return error(400, "bad_request", e.what());
    } catch (const InvalidParameter& e) {
      return error(400, "bad_request", e.what());
    } catch (const std::exception& e) {
      return error(500, "internal", e.what());
    }
  }

  static std::string text(const Params& q, const std::string& key, bool required = true) {
    auto range = q.equal_range(key);
    if (range.first == range.second) {
      if (required) throw BadRequest("missing query parameter '" + key + "'");
      return {};
    }
    if (std::next(range.first) != range.second) throw BadRequest("query parameter '" + key + "' given twice");
    return range.first->second;
  }

  static double number(const Params& q, const std::string& key) {
    const auto s = text(q, key);
    auto v = parse_double(s);
    if (!v || !std::isfinite(*v)) throw BadRequest("query parameter '" + key + "' is not a number");
    return *v;
  }

  static GeoPoint point(double lat, double lon) {
    try {
      return GeoPoint(lat, lon);
    } catch (const InvalidParameter& e) {
      throw BadRequest(e.what());
    }
  }

  EngineConfig cfg_;
  std::filesystem::path model_path_;
  std::shared_ptr<const World> world_;
  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> snap_;
};

}  // namespace aqe
