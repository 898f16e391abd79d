#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "streetappeal/http.hpp"

#include <openssl/evp.h>

#include "streetappeal/errors.hpp"

namespace streetappeal::http {

namespace {

class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  Response get(const std::string& url, const Headers& headers) override {
    auto [host, target] = split_url(url);
    httplib::Client cli(host);
    configure(cli);
    return convert(cli.Get(target, to_httplib(headers)));
  }

  Response post(const std::string& url, const std::string& body, const std::string& content_type,
                const Headers& headers) override {
    auto [host, target] = split_url(url);
    httplib::Client cli(host);
    configure(cli);
    return convert(cli.Post(target, to_httplib(headers), body, content_type));
  }

 private:
  void configure(httplib::Client& cli) const {
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    cli.set_follow_location(true);
  }

  static httplib::Headers to_httplib(const Headers& headers) {
    httplib::Headers out;
    for (const auto& [k, v] : headers) out.emplace(k, v);
    return out;
  }

  static Response convert(const httplib::Result& res) {
    Response out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

  std::chrono::seconds timeout_;
};

}  // namespace

std::unique_ptr<Transport> make_transport(std::chrono::seconds timeout) {
  return std::make_unique<HttplibTransport>(timeout);
}

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace streetappeal::http
