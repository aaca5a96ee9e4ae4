#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "covidmis/crawler.hpp"

namespace covidmis::crawler {

namespace {

class HttpTransport final : public Transport {
 public:
  TransportResult get(const Url& url, std::chrono::milliseconds timeout, const std::string& user_agent) override {
    httplib::Client client(url.origin());
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    client.set_follow_location(false);

    const httplib::Headers headers{{"User-Agent", user_agent}, {"Accept", "text/html"}};
    auto res = client.Get(url.target(), headers);
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      return {timed_out ? TransportError::timeout : TransportError::network, {}};
    }
    HttpResponse out;
    out.status = res->status;
    out.content_type = res->get_header_value("Content-Type");
    out.location = res->get_header_value("Location");
    out.body = std::move(res->body);
    return {TransportError::none, std::move(out)};
  }
};

}  // namespace

std::unique_ptr<Transport> make_http_transport() { return std::make_unique<HttpTransport>(); }

}  // namespace covidmis::crawler
