#pragma once

#include <string>
#include <string_view>

namespace cbr::detail {

// "http://host:port/v1" -> origin "http://host:port", prefix "/v1".
struct Endpoint {
  std::string origin;
  std::string path_prefix;
};

inline Endpoint parse_base_url(std::string_view url) {
  const auto scheme = url.find("://");
  const std::size_t host_start = scheme == std::string_view::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  Endpoint e;
  if (slash == std::string_view::npos) {
    e.origin = std::string(url);
  } else {
    e.origin = std::string(url.substr(0, slash));
    e.path_prefix = std::string(url.substr(slash));
    while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
  }
  if (scheme == std::string_view::npos) e.origin = "http://" + e.origin;
  return e;
}

}  // namespace cbr::detail
