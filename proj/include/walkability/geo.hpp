#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include "walkability/errors.hpp"

namespace walkability::geo {

struct Wgs84Point {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  bool operator==(const Wgs84Point&) const = default;
};

/// Planar UTM-K (EPSG:5179) coordinate in meters.
struct UtmkPoint {
  double x = 0.0;  // easting
  double y = 0.0;  // northing
};

inline constexpr double kEarthRadiusM = 6'371'000.0;

inline bool is_valid(const Wgs84Point& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

/// Plausible Korean extent; points outside are suspicious but not rejected.
inline bool within_korea_extent(const UtmkPoint& p) {
  return p.x >= 7.0e5 && p.x <= 1.4e6 && p.y >= 1.4e6 && p.y <= 2.3e6;
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Great-circle distance on a sphere of radius kEarthRadiusM.
inline double haversine_m(const Wgs84Point& a, const Wgs84Point& b) {
  const double dlat = deg2rad(b.lat - a.lat);
  const double dlon = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dlat / 2);
  const double s2 = std::sin(dlon / 2);
  double h = s1 * s1 + std::cos(deg2rad(a.lat)) * std::cos(deg2rad(b.lat)) * s2 * s2;
  h = std::min(1.0, std::max(0.0, h));
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

// Transverse Mercator after Krüger, sixth order in the third flattening.
// Accurate to well below a millimeter over the whole Korean extent.
namespace detail {

struct TransverseMercator {
  double k0, lat0, lon0, false_easting, false_northing;
  double e, rect_radius, origin_xi;
  std::array<double, 6> alpha{}, beta{};

  TransverseMercator(double a, double f, double lat0_deg, double lon0_deg, double k0_, double fe, double fn)
      : k0(k0_), lat0(deg2rad(lat0_deg)), lon0(deg2rad(lon0_deg)), false_easting(fe), false_northing(fn) {
    const double n = f / (2 - f);
    const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
    e = std::sqrt(f * (2 - f));
    rect_radius = a / (1 + n) * (1 + n2 / 4 + n4 / 64 + n6 / 256);
    alpha = {n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
             13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
             61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
             49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
             34729 * n5 / 80640 - 3418889 * n6 / 1995840,
             212378941 * n6 / 319334400};
    beta = {n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
            n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
            17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
            4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
            4583 * n5 / 161280 - 108847 * n6 / 3991680,
            20648693 * n6 / 638668800};
    double xi0 = std::atan(conformal_tan(std::tan(lat0)));
    origin_xi = xi0;
    for (int j = 1; j <= 6; ++j) origin_xi += alpha[j - 1] * std::sin(2 * j * xi0);
  }

  double conformal_tan(double tau) const {
    const double sigma = std::sinh(e * std::atanh(e * tau / std::hypot(1.0, tau)));
    return tau * std::hypot(1.0, sigma) - sigma * std::hypot(1.0, tau);
  }

  std::array<double, 2> forward(double lat, double lon) const {
    const double dlon = lon - lon0;
    const double tau_p = conformal_tan(std::tan(lat));
    const double xi_p = std::atan2(tau_p, std::cos(dlon));
    const double eta_p = std::asinh(std::sin(dlon) / std::hypot(tau_p, std::cos(dlon)));
    double xi = xi_p, eta = eta_p;
    for (int j = 1; j <= 6; ++j) {
      xi += alpha[j - 1] * std::sin(2 * j * xi_p) * std::cosh(2 * j * eta_p);
      eta += alpha[j - 1] * std::cos(2 * j * xi_p) * std::sinh(2 * j * eta_p);
    }
    return {false_easting + k0 * rect_radius * eta, false_northing + k0 * rect_radius * (xi - origin_xi)};
  }

  std::array<double, 2> inverse(double x, double y) const {
    const double xi = (y - false_northing) / (k0 * rect_radius) + origin_xi;
    const double eta = (x - false_easting) / (k0 * rect_radius);
    double xi_p = xi, eta_p = eta;
    for (int j = 1; j <= 6; ++j) {
      xi_p -= beta[j - 1] * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
      eta_p -= beta[j - 1] * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
    }
    const double tau_p = std::sin(xi_p) / std::hypot(std::sinh(eta_p), std::cos(xi_p));
    const double dlon = std::atan2(std::sinh(eta_p), std::cos(xi_p));
    // Newton iteration for tan(lat) from the conformal tangent.
    const double e2 = e * e;
    double tau = tau_p;
    for (int it = 0; it < 8; ++it) {
      const double tp = conformal_tan(tau);
      const double step = (tau_p - tp) / std::hypot(1.0, tp) * (1 + (1 - e2) * tau * tau) /
                          ((1 - e2) * std::hypot(1.0, tau));
      tau += step;
      if (std::abs(step) < 1e-14) break;
    }
    return {std::atan(tau), lon0 + dlon};
  }
};

inline const TransverseMercator& utmk() {
  // EPSG:5179: GRS80, origin 38N 127.5E, k0 0.9996, FE 1,000,000, FN 2,000,000.
  static const TransverseMercator tm(6378137.0, 1.0 / 298.257222101, 38.0, 127.5, 0.9996, 1'000'000.0,
                                     2'000'000.0);
  return tm;
}

}  // namespace detail

/// Inverse projection from UTM-K. GRS80 and WGS84 are treated as identical.
inline Wgs84Point utmk_to_wgs84(const UtmkPoint& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidCoordinate("non-finite UTM-K coordinate");
  auto [lat, lon] = detail::utmk().inverse(p.x, p.y);
  return {rad2deg(lat), rad2deg(lon)};
}

inline UtmkPoint wgs84_to_utmk(const Wgs84Point& p) {
  if (!is_valid(p)) throw InvalidCoordinate("invalid WGS84 coordinate");
  auto [x, y] = detail::utmk().forward(deg2rad(p.lat), deg2rad(p.lon));
  return {x, y};
}

/// Uniform bucket grid over WGS84 points for radius queries. Buckets are
/// square in a local equirectangular frame; queries scan the buckets covering
/// the lat/lon bounding box of the search circle, so results are a superset
/// of the true neighbours and callers refine with haversine_m.
class GridIndex {
 public:
  GridIndex() = default;

  GridIndex(std::span<const Wgs84Point> points, double cell_size_m = 1000.0) : cell_size_m_(cell_size_m) {
    if (!(cell_size_m > 0)) throw DomainError("grid cell size must be positive");
    double lat_sum = 0;
    for (const auto& p : points) lat_sum += p.lat;
    ref_cos_ = points.empty() ? 1.0 : std::cos(deg2rad(lat_sum / static_cast<double>(points.size())));
    for (std::size_t i = 0; i < points.size(); ++i) {
      buckets_[key(row_of(points[i].lat), col_of(points[i].lon))].push_back(static_cast<std::uint32_t>(i));
    }
    size_ = points.size();
  }

  std::size_t size() const { return size_; }
  std::size_t bucket_count() const { return buckets_.size(); }
  double cell_size_m() const { return cell_size_m_; }

  std::vector<std::uint32_t> query(const Wgs84Point& center, double radius_m) const {
    std::vector<std::uint32_t> out;
    if (buckets_.empty() || !(radius_m > 0)) return out;
    const double dlat = rad2deg(radius_m / kEarthRadiusM);
    const double far_lat = std::min(89.9, std::abs(center.lat) + dlat);
    const double dlon = rad2deg(radius_m / (kEarthRadiusM * std::cos(deg2rad(far_lat))));
    const auto r0 = row_of(center.lat - dlat), r1 = row_of(center.lat + dlat);
    const auto c0 = col_of(center.lon - dlon), c1 = col_of(center.lon + dlon);
    for (auto r = r0; r <= r1; ++r) {
      for (auto c = c0; c <= c1; ++c) {
        auto it = buckets_.find(key(r, c));
        if (it != buckets_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
      }
    }
    return out;
  }

 private:
  std::int64_t row_of(double lat) const {
    return static_cast<std::int64_t>(std::floor(deg2rad(lat) * kEarthRadiusM / cell_size_m_));
  }
  std::int64_t col_of(double lon) const {
    return static_cast<std::int64_t>(std::floor(deg2rad(lon) * kEarthRadiusM * ref_cos_ / cell_size_m_));
  }
  static std::int64_t key(std::int64_t r, std::int64_t c) { return (r << 32) ^ (c & 0xffffffffLL); }

  double cell_size_m_ = 1000.0;
  double ref_cos_ = 1.0;
  std::size_t size_ = 0;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets_;
};

}  // namespace walkability::geo
