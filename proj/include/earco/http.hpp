#pragma once

#include <string>
#include <utility>
#include <vector>

namespace earco {

struct HttpResponse {
  int status = 0;
  std::string body;
};

struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;
};

/// Accepts http:// and https:// URLs; throws kConfig otherwise.
ParsedUrl parse_url(const std::string& url);

/// POSTs a JSON body. Connection-level failures throw kTransport; any HTTP
/// status is returned to the caller.
HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            int timeout_seconds);

}  // namespace earco
