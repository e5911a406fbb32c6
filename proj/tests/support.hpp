#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unistd.h>

#include "aqe/synth.hpp"
#include "aqe/world.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Plain equirectangular distance, written out independently of the library.
inline double ref_distance_km(double lat1, double lon1, double lat2, double lon2) {
  const double mean = (lat1 + lat2) / 2.0 * std::numbers::pi / 180.0;
  const double dx = (lon2 - lon1) * std::cos(mean) * 111.320;
  const double dy = (lat2 - lat1) * 110.574;
  return std::sqrt(dx * dx + dy * dy);
}

inline double ref_kernel(double dist_km, double d_km) { return std::exp(-dist_km / d_km); }

inline double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

/// A one-region world small enough for unit tests.
inline aqe::WorldSpec small_spec(std::uint64_t seed = 1, std::size_t hours = 24) {
  aqe::WorldSpec s;
  s.seed = seed;
  s.hours = hours;
  auto& r = s.regions.front();
  r.size_km = 12.0;
  r.stations = 12;
  r.road_count = 160;
  r.industry_zones = 1;
  r.power_plants = 1;
  s.land_spacing_km = 0.2;
  s.grid_lattice = 8;
  return s;
}

inline aqe::World small_world(std::uint64_t seed = 1, std::size_t hours = 24) {
  auto sw = aqe::generate_synthetic_world(small_spec(seed, hours));
  aqe::clean_measurements(sw.data.measurements);
  return aqe::World(std::move(sw.data));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("aqe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testing_support
