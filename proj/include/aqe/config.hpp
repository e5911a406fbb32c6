#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aqe/core.hpp"
#include "aqe/dataset.hpp"
#include "aqe/features.hpp"
#include "aqe/model.hpp"

namespace aqe {

/// Engine settings. Read from a `key = value` text file (# starts a comment);
/// later assignments override earlier ones, so command-line overrides are
/// simply applied after the file.
struct EngineConfig {
  std::filesystem::path data_dir = "world";
  std::filesystem::path breakpoints;  // empty: built-in WHO-based breakpoints

  std::uint64_t split_seed = 11;
  std::uint64_t sample_seed = 3;
  std::uint64_t train_seed = 7;
  std::size_t samples_per_category = 5000;
  std::size_t epochs = 30;
  std::size_t transfer_epochs = 30;
  std::size_t batch_size = 1024;
  double learning_rate = 0.001;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::size_t transfer_threshold = 10000;  // regional training rows below this use transfer

  KernelMode kernel_mode = KernelMode::Truncated;
  bool power_plants = false;
  std::size_t hampel_window = 48;
  double hampel_k = 6.0;

  double cell_m = 50.0;
  std::size_t pdp_points = 20;
  std::size_t pdp_rows = 2000;
  std::uint64_t pdp_seed = 5;

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "data_dir",     "breakpoints",     "split_seed",  "sample_seed", "train_seed",
        "samples_per_category", "epochs",  "transfer_epochs", "batch_size", "learning_rate",
        "hidden1",      "hidden2",         "transfer_threshold", "kernel_mode", "power_plants",
        "hampel_window", "hampel_k",       "cell_m",      "pdp_points",  "pdp_rows",
        "pdp_seed"};
    return k;
  }

  void set(std::string_view key, std::string_view value) {
    const std::string k(trim(key));
    const std::string v(trim(value));
    auto num = [&]() {
      auto d = parse_double(v);
      if (!d) throw InvalidParameter("config key '" + k + "' needs a number, got '" + v + "'");
      return *d;
    };
    auto count = [&]() -> std::uint64_t {
      std::uint64_t out = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc{} || p != v.data() + v.size())
        throw InvalidParameter("config key '" + k + "' needs a non-negative integer, got '" + v + "'");
      return out;
    };
    if (k == "data_dir") data_dir = v;
    else if (k == "breakpoints") breakpoints = v;
    else if (k == "split_seed") split_seed = count();
    else if (k == "sample_seed") sample_seed = count();
    else if (k == "train_seed") train_seed = count();
    else if (k == "samples_per_category") samples_per_category = count();
    else if (k == "epochs") epochs = count();
    else if (k == "transfer_epochs") transfer_epochs = count();
    else if (k == "batch_size") batch_size = count();
    else if (k == "learning_rate") learning_rate = num();
    else if (k == "hidden1") hidden1 = count();
    else if (k == "hidden2") hidden2 = count();
    else if (k == "transfer_threshold") transfer_threshold = count();
    else if (k == "kernel_mode") kernel_mode = parse_kernel_mode(v);
    else if (k == "power_plants") {
      if (v == "true" || v == "1") power_plants = true;
      else if (v == "false" || v == "0") power_plants = false;
      else throw InvalidParameter("config key 'power_plants' needs true or false");
    } else if (k == "hampel_window") hampel_window = count();
    else if (k == "hampel_k") hampel_k = num();
    else if (k == "cell_m") cell_m = num();
    else if (k == "pdp_points") pdp_points = count();
    else if (k == "pdp_rows") pdp_rows = count();
    else if (k == "pdp_seed") pdp_seed = count();
    else throw InvalidParameter("unknown config key '" + k + "'");
  }

  /// Applies one "key=value" assignment.
  void assign(std::string_view kv) {
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw InvalidParameter("expected key=value, got '" + std::string(kv) + "'");
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }

  void read(std::istream& in, const std::string& name) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      std::string_view s = line;
      if (auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
      s = trim(s);
      if (s.empty()) continue;
      try {
        assign(s);
      } catch (const Error& e) {
        throw IngestionError(name, n, e.what());
      }
    }
  }

  std::string value_of(const std::string& k) const {
    if (k == "data_dir") return data_dir.string();
    if (k == "breakpoints") return breakpoints.string();
    if (k == "split_seed") return std::to_string(split_seed);
    if (k == "sample_seed") return std::to_string(sample_seed);
    if (k == "train_seed") return std::to_string(train_seed);
    if (k == "samples_per_category") return std::to_string(samples_per_category);
    if (k == "epochs") return std::to_string(epochs);
    if (k == "transfer_epochs") return std::to_string(transfer_epochs);
    if (k == "batch_size") return std::to_string(batch_size);
    if (k == "learning_rate") return format_double(learning_rate);
    if (k == "hidden1") return std::to_string(hidden1);
    if (k == "hidden2") return std::to_string(hidden2);
    if (k == "transfer_threshold") return std::to_string(transfer_threshold);
    if (k == "kernel_mode") return kernel_mode == KernelMode::Exact ? "exact" : "truncated";
    if (k == "power_plants") return power_plants ? "true" : "false";
    if (k == "hampel_window") return std::to_string(hampel_window);
    if (k == "hampel_k") return format_double(hampel_k);
    if (k == "cell_m") return format_double(cell_m);
    if (k == "pdp_points") return std::to_string(pdp_points);
    if (k == "pdp_rows") return std::to_string(pdp_rows);
    if (k == "pdp_seed") return std::to_string(pdp_seed);
    throw InvalidParameter("unknown config key '" + k + "'");
  }

  /// Canonical text form; also the config file format.
  std::string to_text() const {
    std::string out;
    for (const auto& k : keys()) out += k + " = " + value_of(k) + "\n";
    return out;
  }

  /// Hash of every setting except data_dir.
  std::string fingerprint() const {
    std::string text;
    for (const auto& k : keys())
      if (k != "data_dir") text += k + "=" + value_of(k) + "\n";
    return detail::hex64(detail::fnv1a(text));
  }

  void validate() const {
    namespace fs = std::filesystem;
    if (!fs::is_directory(data_dir)) throw NotFound("data directory '" + data_dir.string() + "' does not exist");
    if (!breakpoints.empty() && !fs::is_regular_file(breakpoints))
      throw NotFound("breakpoints file '" + breakpoints.string() + "' does not exist");
    if (batch_size == 0 || hidden1 == 0 || hidden2 == 0 || samples_per_category == 0)
      throw InvalidParameter("batch_size, hidden sizes and samples_per_category must be > 0");
    if (!(learning_rate > 0.0) || !(cell_m > 0.0) || !(hampel_k > 0.0))
      throw InvalidParameter("learning_rate, cell_m and hampel_k must be > 0");
    if (pdp_points < 2 || pdp_rows == 0) throw InvalidParameter("pdp_points must be >= 2 and pdp_rows > 0");
  }

  AqiBreakpoints load_breakpoints_or_default() const {
    return breakpoints.empty() ? AqiBreakpoints::who_default() : load_breakpoints(breakpoints);
  }

  FeatureConfig features(FeaturePreset preset) const {
    FeatureConfig f;
    f.preset = preset;
    f.mode = kernel_mode;
    f.power_plants = power_plants;
    return f;
  }

  TrainConfig train(std::size_t epoch_count) const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.batch_size = batch_size;
    t.epochs = epoch_count;
    t.seed = train_seed;
    t.n1 = hidden1;
    t.n2 = hidden2;
    return t;
  }
};

inline EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open config " + path.string());
  EngineConfig c;
  c.read(in, path.string());
  return c;
}

}  // namespace aqe
