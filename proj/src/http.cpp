#include "sleicl/http.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "sleicl/common.hpp"

namespace sleicl {

namespace {

struct ParsedUrl {
  std::string host_port;  // scheme://host[:port], httplib client target
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ProviderError("malformed endpoint URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.host_port = url;
    out.path = "/";
  } else {
    out.host_port = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

HttpResult http_post_json(const std::string& url, const std::string& body,
                          const std::string& bearer) {
  const ParsedUrl parsed = parse_url(url);
  httplib::Client client(parsed.host_port);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

  constexpr int kAttempts = 3;
  std::string last_error;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(250 << (attempt - 1)));
    }
    auto res = client.Post(parsed.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError("request to " + url + " failed with status " +
                          std::to_string(res->status) + ": " + res->body);
    }
    HttpResult out;
    out.body = res->body;
    out.status = res->status;
    out.retry_count = attempt;
    return out;
  }
  throw ProviderError("request to " + url + " failed after " +
                      std::to_string(kAttempts) + " attempts (" + last_error + ")");
}

}  // namespace sleicl
