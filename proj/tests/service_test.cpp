#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <thread>

#include "aqe/service.hpp"
#include "support.hpp"

using namespace aqe;
using testing_support::TempDir;
using json = nlohmann::json;

namespace {

MLPModel small_model(const World& w, std::uint64_t seed) {
  FeatureLayout layout{FeatureConfig{}};
  std::vector<std::string> ids;
  for (const auto& s : w.stations()) ids.push_back(s.id);
  const auto rows = build_rows(w, ids, all_hours(w), layout, AqiBreakpoints::who_default());
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.n1 = 8;
  cfg.n2 = 4;
  cfg.seed = seed;
  return train(rows, cfg, layout.names()).model;
}

class Service : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("service");
    auto sw = generate_synthetic_world(testing_support::small_spec(4, 6));
    save_world(dir_->path() / "world", sw.data);
    const World w(load_world(dir_->path() / "world"));
    save_model(dir_->path() / "m.bin", small_model(w, 1));
    save_model(dir_->path() / "m2.bin", small_model(w, 2));
    center_ = w.regions()[0].bbox;
  }
  static void TearDownTestSuite() { delete dir_; }

  static EngineConfig config() {
    EngineConfig c;
    c.data_dir = dir_->path() / "world";
    return c;
  }
  static QueryService::Params at(double lat, double lon) {
    return {{"lat", format_double(lat)}, {"lon", format_double(lon)}};
  }
  static GeoPoint mid() {
    return GeoPoint(0.5 * (center_.min().lat() + center_.max().lat()), 0.5 * (center_.min().lon() + center_.max().lon()));
  }

  static TempDir* dir_;
  static BoundingBox center_;
};
TempDir* Service::dir_ = nullptr;
BoundingBox Service::center_;

}  // namespace

TEST_F(Service, HealthAndPredict) {
  QueryService svc(config(), dir_->path() / "m.bin");
  auto h = json::parse(svc.health().body);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["model"], model_fingerprint(load_model(dir_->path() / "m.bin")));

  const auto r = svc.predict(at(mid().lat(), mid().lon()));
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  for (const char* k : {"no2", "o3", "pm25", "pm10", "paqi"}) EXPECT_GE(j[k].get<double>(), 0.0) << k;
  EXPECT_TRUE(j["category"].is_string());
  EXPECT_TRUE(j["imputed"].is_array());

  auto q = at(mid().lat(), mid().lon());
  q.emplace("time", "2018-06-01T02:29Z");
  EXPECT_EQ(json::parse(svc.predict(q).body)["time"], "2018-06-01T02:00Z");
}

TEST_F(Service, BadRequestsAndCoverage) {
  QueryService svc(config(), dir_->path() / "m.bin");
  auto kind = [](const HttpReply& r) { return json::parse(r.body)["error"]["kind"].get<std::string>(); };
  auto r = svc.predict({{"lat", "48.8"}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(kind(r), "bad_request");
  EXPECT_EQ(svc.predict({{"lat", "abc"}, {"lon", "2"}}).status, 400);
  EXPECT_EQ(svc.predict({{"lat", "95"}, {"lon", "2"}}).status, 400);
  EXPECT_EQ(svc.predict({{"lat", "1"}, {"lat", "2"}, {"lon", "2"}}).status, 400);
  auto q = at(mid().lat(), mid().lon());
  q.emplace("time", "yesterday");
  EXPECT_EQ(svc.predict(q).status, 400);
  r = svc.predict(at(10, 10));
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(kind(r), "out_of_coverage");
  EXPECT_EQ(svc.route({{"from_lat", "10"}, {"from_lon", "10"}, {"to_lat", "10.1"}, {"to_lon", "10"}}).status, 422);
}

TEST_F(Service, RouteReturnsBothPaths) {
  QueryService svc(config(), dir_->path() / "m.bin");
  const auto a = offset_km(mid(), -3, -3), b = offset_km(mid(), 3, 3);
  const auto r = svc.route({{"from_lat", format_double(a.lat())},
                            {"from_lon", format_double(a.lon())},
                            {"to_lat", format_double(b.lat())},
                            {"to_lon", format_double(b.lon())}});
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  ASSERT_EQ(j["features"].size(), 2u);
  EXPECT_LE(j["features"][1]["properties"]["exposure"].get<double>(),
            j["features"][0]["properties"]["exposure"].get<double>() * (1 + 1e-12));
}

TEST_F(Service, ConcurrentPredictsAreIdentical) {
  QueryService svc(config(), dir_->path() / "m.bin");
  const auto q = at(mid().lat() + 0.01, mid().lon() - 0.01);
  std::vector<std::string> bodies(100);
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < bodies.size(); ++i) pool.emplace_back([&, i] { bodies[i] = svc.predict(q).body; });
  for (auto& t : pool) t.join();
  for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
}

TEST_F(Service, ReloadDuringSoakNeverTearsResponses) {
  TempDir t("reload");
  const auto path = t.path() / "live.bin";
  fs::copy_file(dir_->path() / "m.bin", path);
  QueryService svc(config(), path);
  const auto fp1 = model_fingerprint(load_model(dir_->path() / "m.bin"));
  const auto fp2 = model_fingerprint(load_model(dir_->path() / "m2.bin"));
  const auto q = at(mid().lat(), mid().lon());
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0}, seen{0};
  std::set<std::string> models;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int k = 0; k < 4; ++k)
    pool.emplace_back([&] {
      while (!stop) {
        const auto r = svc.predict(q);
        try {
          const auto j = json::parse(r.body);
          if (r.status != 200 || !j.contains("paqi")) ++bad;
          std::lock_guard lock(mu);
          models.insert(j["model"].get<std::string>());
        } catch (...) {
          ++bad;
        }
        ++seen;
      }
    });
  while (seen < 20) std::this_thread::yield();
  fs::copy_file(dir_->path() / "m2.bin", path, fs::copy_options::overwrite_existing);
  const auto rr = svc.reload_endpoint();
  EXPECT_EQ(rr.status, 200);
  const int after = seen;
  while (seen < after + 20) std::this_thread::yield();
  stop = true;
  for (auto& th : pool) th.join();
  EXPECT_EQ(bad, 0);
  for (const auto& m : models) EXPECT_TRUE(m == fp1 || m == fp2) << m;
  EXPECT_EQ(json::parse(svc.health().body)["model"], fp2);
}

TEST_F(Service, ReloadOfBrokenModelKeepsServing) {
  TempDir t("broken");
  const auto path = t.path() / "live.bin";
  fs::copy_file(dir_->path() / "m.bin", path);
  QueryService svc(config(), path);
  std::ofstream(path, std::ios::trunc) << "garbage";
  EXPECT_EQ(svc.reload_endpoint().status, 500);
  EXPECT_EQ(svc.predict(at(mid().lat(), mid().lon())).status, 200);
}

TEST_F(Service, HttpEndpoints) {
  QueryService svc(config(), dir_->path() / "m.bin");
  httplib::Server server;
  svc.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  auto h = client.Get("/v1/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  const auto path = "/v1/predict?lat=" + format_double(mid().lat()) + "&lon=" + format_double(mid().lon());
  auto p = client.Get(path);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->status, 200);
  EXPECT_EQ(p->body, svc.predict(at(mid().lat(), mid().lon())).body);
  auto bad = client.Get("/v1/predict?lat=1");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto rl = client.Post("/v1/reload");
  ASSERT_TRUE(rl);
  EXPECT_EQ(rl->status, 200);
  server.stop();
  th.join();
}
