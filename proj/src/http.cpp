#include "earco/http.hpp"

#include <httplib.h>

#include "earco/error.hpp"

namespace earco {

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kConfig, "URL lacks a scheme: " + url);
  out.scheme = url.substr(0, scheme_end);
  if (out.scheme != "http" && out.scheme != "https") {
    throw Error(ErrorCode::kConfig, "unsupported URL scheme: " + url);
  }
  const auto host_begin = scheme_end + 3;
  const auto path_begin = url.find('/', host_begin);
  std::string authority = url.substr(host_begin, path_begin == std::string::npos
                                                     ? std::string::npos
                                                     : path_begin - host_begin);
  out.path = path_begin == std::string::npos ? "/" : url.substr(path_begin);
  out.port = out.scheme == "https" ? 443 : 80;
  if (const auto colon = authority.rfind(':'); colon != std::string::npos) {
    try {
      out.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, "bad port in URL: " + url);
    }
    authority.resize(colon);
  }
  if (authority.empty()) throw Error(ErrorCode::kConfig, "URL lacks a host: " + url);
  out.host = authority;
  return out;
}

HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            int timeout_seconds) {
  const auto parsed = parse_url(url);
  httplib::Client client(parsed.scheme + "://" + parsed.host + ":" + std::to_string(parsed.port));
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);

  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto result = client.Post(parsed.path, h, body, "application/json");
  if (!result) {
    throw Error(ErrorCode::kTransport,
                "POST " + url + " failed: " + httplib::to_string(result.error()));
  }
  return HttpResponse{result->status, result->body};
}

}  // namespace earco
