#pragma once

// Walking-distance client for a Kakao-style directions API. Kept out of
// distance.hpp so the HTTP and TLS dependencies stay optional.

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "walkability/distance.hpp"

namespace walkability::distance {

struct RoutingApiConfig {
  /// Full URL including path, e.g. https://host/v1/directions
  std::string endpoint;
  std::string api_key;
  /// Value prefix for the Authorization header.
  std::string auth_scheme = "KakaoAK";
  double requests_per_second = 10.0;
  unsigned max_in_flight = 4;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{10};

  /// Reads WALKABILITY_API_ENDPOINT / WALKABILITY_API_KEY when the fields are empty.
  void fill_from_environment() {
    if (endpoint.empty()) {
      if (const char* e = std::getenv("WALKABILITY_API_ENDPOINT")) endpoint = e;
    }
    if (api_key.empty()) {
      if (const char* k = std::getenv("WALKABILITY_API_KEY")) api_key = k;
    }
  }
};

/// Parses a directions response; the walking distance is
/// routes[0].summary.distance in meters. A non-zero routes[0].result_code
/// means no route exists.
inline WalkOutcome parse_directions_response(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return WalkOutcome::failed("response is not JSON");
  if (j.contains("routes") && j["routes"].is_array() && !j["routes"].empty()) {
    const auto& r = j["routes"][0];
    if (r.contains("result_code") && r["result_code"].is_number() && r["result_code"].get<int>() != 0) {
      return WalkOutcome::unreachable(r.value("result_msg", "no route"));
    }
    if (r.contains("summary") && r["summary"].contains("distance") && r["summary"]["distance"].is_number()) {
      return WalkOutcome::found(r["summary"]["distance"].get<double>());
    }
  }
  if (j.contains("distance") && j["distance"].is_number()) return WalkOutcome::found(j["distance"].get<double>());
  return WalkOutcome::failed("response carries no distance");
}

class RoutingApiProvider final : public WalkProvider {
 public:
  explicit RoutingApiProvider(RoutingApiConfig config) : config_(std::move(config)) {
    config_.fill_from_environment();
    if (config_.endpoint.empty()) throw Error("routing API endpoint not configured");
    const auto scheme_end = config_.endpoint.find("://");
    const auto path_start = config_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    host_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
    if (config_.max_in_flight == 0) config_.max_in_flight = 1;
  }

  std::string id() const override { return "routing-api"; }

  WalkOutcome walk(const CandidatePair& pair) override {
    auto coord = [](const Wgs84Point& p) { return csv::exact(p.lon) + "," + csv::exact(p.lat); };
    const httplib::Params params{{"origin", coord(pair.cell_location)},
                                 {"destination", coord(pair.poi_location)}};
    const std::string target = httplib::append_query_params(path_, params);

    WalkOutcome last = WalkOutcome::failed("no attempt made");
    auto backoff = config_.initial_backoff;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      InFlight slot(*this);
      pace();
      httplib::Client client(host_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      httplib::Headers headers{{"Authorization", config_.auth_scheme + " " + config_.api_key}};
      auto res = client.Get(target, headers);
      ++requests_;
      if (!res) {
        last = WalkOutcome::failed("transport error: " + httplib::to_string(res.error()));
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last = WalkOutcome::failed("HTTP " + std::to_string(res->status));
        continue;
      }
      if (res->status != 200) return WalkOutcome::failed("HTTP " + std::to_string(res->status));
      return parse_directions_response(res->body);
    }
    return last;
  }

  std::size_t requests_sent() const { return requests_.load(); }

 private:
  class InFlight {
   public:
    explicit InFlight(RoutingApiProvider& p) : p_(p) {
      std::unique_lock lock(p_.slots_mutex_);
      p_.slots_cv_.wait(lock, [&] { return p_.in_flight_ < p_.config_.max_in_flight; });
      ++p_.in_flight_;
    }
    ~InFlight() {
      {
        std::lock_guard lock(p_.slots_mutex_);
        --p_.in_flight_;
      }
      p_.slots_cv_.notify_one();
    }
    InFlight(const InFlight&) = delete;
    InFlight& operator=(const InFlight&) = delete;

   private:
    RoutingApiProvider& p_;
  };

  // Spaces request starts evenly at the configured rate across all workers.
  void pace() {
    if (!(config_.requests_per_second > 0)) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / config_.requests_per_second));
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(pace_mutex_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_start_);
      next_start_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

  RoutingApiConfig config_;
  std::string host_;
  std::string path_;
  std::mutex pace_mutex_;
  std::chrono::steady_clock::time_point next_start_{};
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  unsigned in_flight_ = 0;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace walkability::distance
