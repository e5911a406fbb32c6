#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "aqe/pipeline.hpp"
#include "aqe/service.hpp"

namespace {

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

int fail(const std::string& kind, const std::string& message, int code = 1) {
  std::cerr << "error kind=" << kind << " message=\"" << one_line(message) << "\"\n";
  return code;
}

aqe::GeoPoint parse_point(const std::string& s) {
  auto comma = s.find(',');
  if (comma == std::string::npos) throw aqe::InvalidParameter("expected lat,lon, got '" + s + "'");
  auto lat = aqe::parse_double(aqe::trim(std::string_view(s).substr(0, comma)));
  auto lon = aqe::parse_double(aqe::trim(std::string_view(s).substr(comma + 1)));
  if (!lat || !lon) throw aqe::InvalidParameter("expected lat,lon, got '" + s + "'");
  return {*lat, *lon};
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Air-quality engine: kernel features, MLP prediction, maps and routing"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string data_dir;
  bool verbose = false;
  app.add_option("-c,--config", config_path, "config file (key = value lines)");
  app.add_option("-s,--set", overrides, "override a config key, key=value (repeatable)");
  app.add_option("-d,--data", data_dir, "world data directory (overrides data_dir)");
  app.add_flag("-v,--verbose", verbose, "log progress to stderr");

  aqe::SynthOptions synth;
  std::string out;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic world directory");
  c_synth->add_option("--seed", synth.seed, "generator seed");
  c_synth->add_option("--hours", synth.hours, "number of hours");
  c_synth->add_option("--stations", synth.stations, "stations in the dense region");
  c_synth->add_option("--sparse-stations", synth.sparse_stations, "stations in the sparse region (0: none)");
  c_synth->add_option("--sparse-hours", synth.sparse_record_hours, "record length of sparse-region stations");
  c_synth->add_option("-o,--out", out, "output directory")->required();

  std::string region, dataset, model, time, feature, from, to, host = "127.0.0.1";
  int port = 8080;
  auto* c_build = app.add_subcommand("build-dataset", "build train/eval datasets for one region");
  c_build->add_option("-r,--region", region, "region name")->required();
  c_build->add_option("-o,--out", out, "dataset directory")->required();

  auto* c_train = app.add_subcommand("train", "train a model from a dataset directory");
  c_train->add_option("--dataset", dataset, "dataset directory")->required();
  c_train->add_option("-o,--out", out, "model file")->required();

  auto* c_eval = app.add_subcommand("eval", "score a model against the nearest-station benchmark");
  c_eval->add_option("--dataset", dataset, "dataset directory")->required();
  c_eval->add_option("-m,--model", model, "model file")->required();
  c_eval->add_option("-o,--out", out, "report CSV (a .txt summary is written next to it)")->required();

  std::vector<double> bbox;
  auto* c_map = app.add_subcommand("map", "render a concentration raster");
  c_map->add_option("-m,--model", model, "model file")->required();
  c_map->add_option("-r,--region", region, "region name")->required();
  c_map->add_option("-t,--time", time, "time, snapped to the nearest loaded hour (default: last hour)");
  c_map->add_option("--bbox", bbox, "min_lat min_lon max_lat max_lon (default: region box)")->expected(4);
  c_map->add_option("-o,--out", out, "raster CSV")->required();

  auto* c_route = app.add_subcommand("route", "shortest and clean walking routes");
  c_route->add_option("-m,--model", model, "model file")->required();
  c_route->add_option("-r,--region", region, "region name")->required();
  c_route->add_option("-t,--time", time, "time, snapped to the nearest loaded hour (default: last hour)");
  c_route->add_option("--from", from, "origin lat,lon")->required();
  c_route->add_option("--to", to, "destination lat,lon")->required();
  c_route->add_option("-o,--out", out, "GeoJSON output")->required();

  auto* c_pdp = app.add_subcommand("pdp", "partial dependence of one feature");
  c_pdp->add_option("--dataset", dataset, "dataset directory")->required();
  c_pdp->add_option("-m,--model", model, "model file")->required();
  c_pdp->add_option("-f,--feature", feature, "feature name, e.g. Roads_0.1")->required();
  c_pdp->add_option("-o,--out", out, "PDP CSV")->required();

  auto* c_serve = app.add_subcommand("serve", "HTTP query service");
  c_serve->add_option("-m,--model", model, "model file")->required();
  c_serve->add_option("--host", host, "bind address");
  c_serve->add_option("-p,--port", port, "port (0: any free port)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }
  aqe::log_level().store(static_cast<int>(verbose ? aqe::LogLevel::Info : aqe::LogLevel::Warn));

  try {
    if (c_synth->parsed()) {
      aqe::cmd_synth(synth, out);
      std::cout << "synth " << out << '\n';
      return 0;
    }

    aqe::EngineConfig cfg = config_path.empty() ? aqe::EngineConfig{} : aqe::load_config(config_path);
    for (const auto& kv : overrides) cfg.assign(kv);
    if (!data_dir.empty()) cfg.data_dir = data_dir;

    if (c_build->parsed()) {
      auto s = aqe::cmd_build_dataset(cfg, region, out);
      std::cout << "dataset region=" << s.region << " preset=" << aqe::to_string(s.preset)
                << " train_rows=" << s.train_rows << " eval_rows=" << s.eval_rows
                << " global_rows=" << s.global_rows << '\n';
    } else if (c_train->parsed()) {
      auto s = aqe::cmd_train(cfg, dataset, out);
      std::cout << "train path=" << (s.transfer ? "transfer" : "direct") << " model=" << s.fingerprint
                << " frozen=" << s.frozen_fingerprint;
      if (s.transfer) std::cout << " global_frozen=" << s.global_frozen_fingerprint;
      std::cout << " final_loss=" << aqe::format_double(s.loss_trace.empty() ? 0.0 : s.loss_trace.back()) << '\n';
    } else if (c_eval->parsed()) {
      auto rep = aqe::cmd_eval(cfg, dataset, model, out);
      aqe::write_report_text(std::cout, rep);
    } else if (c_map->parsed()) {
      std::optional<aqe::BoundingBox> box;
      if (!bbox.empty()) box = aqe::BoundingBox({bbox[0], bbox[1]}, {bbox[2], bbox[3]});
      auto g = aqe::cmd_map(cfg, model, region, time, out, box);
      std::cout << "map rows=" << g.nrows << " cols=" << g.ncols << " time=" << aqe::format_hour(g.timestamp) << '\n';
    } else if (c_route->parsed()) {
      auto p = aqe::cmd_route(cfg, model, region, time, parse_point(from), parse_point(to), out);
      std::cout << "route shortest_km=" << aqe::format_double(p.shortest.length_km)
                << " clean_km=" << aqe::format_double(p.clean.length_km)
                << " length_delta_pct=" << aqe::format_double(p.length_delta_pct)
                << " exposure_delta_pct=" << aqe::format_double(p.exposure_delta_pct) << '\n';
    } else if (c_pdp->parsed()) {
      auto c = aqe::cmd_pdp(cfg, dataset, model, feature, out);
      std::cout << "pdp feature=" << c.feature << " points=" << c.grid.size() << '\n';
    } else if (c_serve->parsed()) {
      aqe::QueryService service(cfg, model);
      httplib::Server svr;
      service.mount(svr);
      g_server = &svr;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      if (port == 0) port = svr.bind_to_any_port(host);
      else if (!svr.bind_to_port(host, port)) return fail("io", "cannot bind " + host + ":" + std::to_string(port));
      std::cout << "serving http://" << host << ':' << port << " model=" << service.snapshot()->fingerprint
                << std::endl;
      svr.listen_after_bind();
    }
    return 0;
  } catch (const aqe::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
