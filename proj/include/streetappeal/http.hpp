#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace streetappeal::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Response {
  int status = 0;  // 0 when the request never produced an HTTP response
  std::string body;
  std::string transport_error;
};

/// Minimal blocking HTTP interface so network adapters can be tested offline.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response get(const std::string& url, const Headers& headers) = 0;
  virtual Response post(const std::string& url, const std::string& body,
                        const std::string& content_type, const Headers& headers) = 0;
};

/// cpp-httplib backed transport; https requires OpenSSL.
std::unique_ptr<Transport> make_transport(std::chrono::seconds timeout);

/// "https://host:port/a/b?q" -> {"https://host:port", "/a/b?q"}.
std::pair<std::string, std::string> split_url(const std::string& url);

std::string base64_encode(const std::vector<unsigned char>& bytes);

}  // namespace streetappeal::http
