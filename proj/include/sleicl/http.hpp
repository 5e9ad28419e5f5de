#pragma once

#include <string>

namespace sleicl {

struct HttpResult {
  std::string body;
  int status = 0;
  int retry_count = 0;
};

/// POST a JSON body to a full URL (scheme://host[:port]/path). 429 and 5xx
/// responses and transport failures are retried with exponential backoff,
/// three attempts total; anything still failing raises ProviderError. A
/// non-empty `bearer` is sent as an Authorization header.
HttpResult http_post_json(const std::string& url, const std::string& body,
                          const std::string& bearer);

}  // namespace sleicl
