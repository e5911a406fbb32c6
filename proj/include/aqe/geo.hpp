#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aqe/core.hpp"

namespace aqe {

inline constexpr double kKmPerDegLat = 110.574;
inline constexpr double kKmPerDegLonEquator = 111.320;

/// A location in degrees. Ranges are checked on construction.
class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat_deg, double lon_deg) : lat_(lat_deg), lon_(lon_deg) {
    if (!std::isfinite(lat_) || !std::isfinite(lon_) || lat_ < -90.0 || lat_ > 90.0 ||
        lon_ < -180.0 || lon_ >= 180.0)
      throw InvalidParameter("GeoPoint out of range: (" + format_double(lat_) + ", " +
                             format_double(lon_) + ")");
  }

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

class BoundingBox {
 public:
  BoundingBox() = default;
  BoundingBox(GeoPoint min_corner, GeoPoint max_corner) : min_(min_corner), max_(max_corner) {
    if (min_.lat() > max_.lat() || min_.lon() > max_.lon())
      throw InvalidParameter("BoundingBox corners are not ordered");
    if (max_.lon() - min_.lon() >= 180.0)
      throw InvalidParameter("BoundingBox longitude span must be below 180 degrees");
  }

  const GeoPoint& min() const noexcept { return min_; }
  const GeoPoint& max() const noexcept { return max_; }

  bool contains(const GeoPoint& p) const noexcept {
    return p.lat() >= min_.lat() && p.lat() <= max_.lat() && p.lon() >= min_.lon() &&
           p.lon() <= max_.lon();
  }
  bool contains(const BoundingBox& b) const noexcept { return contains(b.min()) && contains(b.max()); }

  GeoPoint center() const {
    return {(min_.lat() + max_.lat()) / 2.0, (min_.lon() + max_.lon()) / 2.0};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  GeoPoint min_;
  GeoPoint max_;
};

/// Equirectangular projection around the pair's mean latitude.
inline double distance_km(const GeoPoint& a, const GeoPoint& b) noexcept {
  const double mean_lat = (a.lat() + b.lat()) * 0.5 * std::numbers::pi / 180.0;
  const double dx = (b.lon() - a.lon()) * std::cos(mean_lat) * kKmPerDegLonEquator;
  const double dy = (b.lat() - a.lat()) * kKmPerDegLat;
  return std::sqrt(dx * dx + dy * dy);
}

/// Midpoint in coordinate space; adequate for the short spans used here.
inline GeoPoint midpoint(const GeoPoint& a, const GeoPoint& b) {
  return {(a.lat() + b.lat()) / 2.0, (a.lon() + b.lon()) / 2.0};
}

/// Moves `origin` by (north_km, east_km) with the same projection constants.
inline GeoPoint offset_km(const GeoPoint& origin, double north_km, double east_km) {
  const double lat = origin.lat() + north_km / kKmPerDegLat;
  const double mean_lat = (origin.lat() + lat) * 0.5 * std::numbers::pi / 180.0;
  const double lon = origin.lon() + east_km / (kKmPerDegLonEquator * std::cos(mean_lat));
  return {lat, lon};
}

inline double kernel_from_distance(double dist_km, double d_km) noexcept {
  return std::exp(-dist_km / d_km);
}

/// exp(-distance/d). Throws when d is not strictly positive.
inline double kernel_weight(const GeoPoint& a, const GeoPoint& b, double d_km) {
  if (!(d_km > 0.0) || !std::isfinite(d_km))
    throw InvalidParameter("kernel distance must be > 0, got " + format_double(d_km));
  return kernel_from_distance(distance_km(a, b), d_km);
}

enum class KernelMode { Exact, Truncated };

/// Kernel sums in truncated mode ignore points farther than this multiple of d.
inline constexpr double kTruncationFactor = 10.0;
inline constexpr double kTruncationTolerance = 1e-9;

inline std::string to_string(KernelMode m) { return m == KernelMode::Exact ? "exact" : "truncated"; }

inline KernelMode parse_kernel_mode(std::string_view s) {
  if (s == "exact") return KernelMode::Exact;
  if (s == "truncated") return KernelMode::Truncated;
  throw InvalidParameter("unknown truncation mode '" + std::string(s) + "'");
}

/// Static grid-bucket index over points in degree space. Immutable once built,
/// so concurrent queries are safe.
class SpatialIndex {
 public:
  struct Entry {
    GeoPoint point;
    std::size_t id;
  };

  SpatialIndex() = default;

  /// `cell_km` is the bucket edge length; choose it near the typical query radius.
  explicit SpatialIndex(std::vector<Entry> entries, double cell_km = 1.0)
      : entries_(std::move(entries)) {
    if (!(cell_km > 0.0)) throw InvalidParameter("SpatialIndex cell size must be > 0");
    if (entries_.empty()) return;
    min_lat_ = max_lat_ = entries_.front().point.lat();
    min_lon_ = max_lon_ = entries_.front().point.lon();
    for (const auto& e : entries_) {
      min_lat_ = std::min(min_lat_, e.point.lat());
      max_lat_ = std::max(max_lat_, e.point.lat());
      min_lon_ = std::min(min_lon_, e.point.lon());
      max_lon_ = std::max(max_lon_, e.point.lon());
    }
    const double ref_lat = std::max(std::abs(min_lat_), std::abs(max_lat_));
    const double cos_ref = std::max(std::cos(ref_lat * std::numbers::pi / 180.0), 1e-3);
    cell_lat_ = cell_km / kKmPerDegLat;
    cell_lon_ = cell_km / (kKmPerDegLonEquator * cos_ref);
    rows_ = std::min<std::size_t>(static_cast<std::size_t>((max_lat_ - min_lat_) / cell_lat_) + 1, 4096);
    cols_ = std::min<std::size_t>(static_cast<std::size_t>((max_lon_ - min_lon_) / cell_lon_) + 1, 4096);
    cell_lat_ = std::max(cell_lat_, (max_lat_ - min_lat_) / static_cast<double>(rows_) * (1 + 1e-12));
    cell_lon_ = std::max(cell_lon_, (max_lon_ - min_lon_) / static_cast<double>(cols_) * (1 + 1e-12));

    // Counting sort of entries into buckets.
    std::vector<std::size_t> counts(rows_ * cols_ + 1, 0);
    for (const auto& e : entries_) ++counts[bucket_of(e.point) + 1];
    for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
    starts_ = counts;
    std::vector<Entry> sorted(entries_.size());
    for (const auto& e : entries_) sorted[counts[bucket_of(e.point)]++] = e;
    entries_ = std::move(sorted);
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::span<const Entry> entries() const noexcept { return entries_; }

  /// Calls fn(id, distance_km) for every point with distance_km <= r.
  template <typename Fn>
  void for_each_within(const GeoPoint& center, double r_km, Fn&& fn) const {
    if (entries_.empty() || r_km < 0.0) return;
    const double dlat = r_km / kKmPerDegLat;
    const double lat_lo = center.lat() - dlat;
    const double lat_hi = center.lat() + dlat;
    // Largest |mean latitude| any in-range pair can have gives the smallest cosine.
    const double worst_lat =
        std::min(90.0, std::max(std::abs(center.lat() - dlat / 2), std::abs(center.lat() + dlat / 2)));
    const double cos_worst = std::cos(worst_lat * std::numbers::pi / 180.0);
    const double dlon = cos_worst > 1e-9 ? r_km / (kKmPerDegLonEquator * cos_worst) : 360.0;
    const double lon_lo = center.lon() - dlon;
    const double lon_hi = center.lon() + dlon;
    if (lat_hi < min_lat_ || lat_lo > max_lat_ || lon_hi < min_lon_ || lon_lo > max_lon_) return;

    const auto r0 = row_of(std::max(lat_lo, min_lat_));
    const auto r1 = row_of(std::min(lat_hi, max_lat_));
    const auto c0 = col_of(std::max(lon_lo, min_lon_));
    const auto c1 = col_of(std::min(lon_hi, max_lon_));
    for (std::size_t r = r0; r <= r1; ++r) {
      for (std::size_t c = c0; c <= c1; ++c) {
        const std::size_t b = r * cols_ + c;
        for (std::size_t i = starts_[b]; i < starts_[b + 1]; ++i) {
          const auto& e = entries_[i];
          const double dist = distance_km(center, e.point);
          if (dist <= r_km) fn(e.id, dist);
        }
      }
    }
  }

  /// Ids of all points within r_km, ascending.
  std::vector<std::size_t> radius_query(const GeoPoint& center, double r_km) const {
    std::vector<std::size_t> out;
    for_each_within(center, r_km, [&](std::size_t id, double) { out.push_back(id); });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Kernel-weighted visit. Exact mode visits every point. Truncated mode
  /// visits the points within a radius that starts at kTruncationFactor * d
  /// and doubles until the kernel mass of everything outside is provably at
  /// most kTruncationTolerance times the mass kept inside; `counts(id)`
  /// selects the points that make up that mass.
  template <typename Fn, typename Counts>
  void for_each_weighted(const GeoPoint& center, double d_km, KernelMode mode, Fn&& fn, Counts&& counts) const {
    if (!(d_km > 0.0)) throw InvalidParameter("kernel distance must be > 0");
    if (mode == KernelMode::Exact) {
      for (const auto& e : entries_) fn(e.id, kernel_from_distance(distance_km(center, e.point), d_km));
      return;
    }
    const double r = truncation_radius(center, d_km, counts);
    for_each_within(center, r, [&](std::size_t id, double dist) { fn(id, kernel_from_distance(dist, d_km)); });
  }

  template <typename Fn>
  void for_each_weighted(const GeoPoint& center, double d_km, KernelMode mode, Fn&& fn) const {
    for_each_weighted(center, d_km, mode, std::forward<Fn>(fn), [](std::size_t) { return true; });
  }

  /// Radius used by truncated mode (see for_each_weighted).
  template <typename Counts>
  double truncation_radius(const GeoPoint& center, double d_km, Counts&& counts) const {
    double r = kTruncationFactor * d_km;
    while (true) {
      std::size_t inside = 0;
      double mass = 0;
      for_each_within(center, r, [&](std::size_t id, double dist) {
        ++inside;
        if (counts(id)) mass += kernel_from_distance(dist, d_km);
      });
      const auto outside = entries_.size() - inside;
      if (outside == 0 || static_cast<double>(outside) * std::exp(-r / d_km) <= kTruncationTolerance * mass) return r;
      r *= 2;
    }
  }

 private:
  std::size_t row_of(double lat) const noexcept {
    auto r = static_cast<std::size_t>(std::max(0.0, (lat - min_lat_) / cell_lat_));
    return std::min(r, rows_ - 1);
  }
  std::size_t col_of(double lon) const noexcept {
    auto c = static_cast<std::size_t>(std::max(0.0, (lon - min_lon_) / cell_lon_));
    return std::min(c, cols_ - 1);
  }
  std::size_t bucket_of(const GeoPoint& p) const noexcept { return row_of(p.lat()) * cols_ + col_of(p.lon()); }

  std::vector<Entry> entries_;
  std::vector<std::size_t> starts_;
  double min_lat_ = 0, max_lat_ = 0, min_lon_ = 0, max_lon_ = 0;
  double cell_lat_ = 1, cell_lon_ = 1;
  std::size_t rows_ = 1, cols_ = 1;
};

/// Free-function form of SpatialIndex::radius_query.
inline std::vector<std::size_t> radius_query(const SpatialIndex& index, const GeoPoint& center,
                                             double r_km) {
  if (r_km < 0.0) throw InvalidParameter("radius must be >= 0");
  return index.radius_query(center, r_km);
}

}  // namespace aqe
