#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <string>
#include <thread>
#include <vector>

#include "covidmis/crawler.hpp"

namespace covidmis::testing {

struct FixturePage {
  std::string path;
  std::string html;
  std::size_t keyword_total;  // counted by hand against the default keywords
};

// Seven pages. Link structure (relative links only):
//   /       -> /a.html, /b.html, /c.html (plus one off-site link)
//   /a.html -> /d.html
//   /b.html -> /f.html, /a.html
//   /f.html -> /g.html
// Breadth-first visit order: /, a, b, c, d, f, g (depths 0,1,1,1,2,2,3).
inline const std::vector<FixturePage>& fixture_pages() {
  static const std::vector<FixturePage> pages = {
      // COVID-19, virus
      {"/",
       "<html><head><title>Health desk</title></head><body>\n"
       "<h1>Latest</h1>\n"
       "<p>Our COVID-19 hub collects reporting on the virus.</p>\n"
       "<a href=\"/a.html\">A</a> <a href=\"b.html\">B</a> <a href=\"/c.html#top\">C</a>\n"
       "<a href=\"http://elsewhere.example/out.html\">partner</a>\n"
       "</body></html>\n",
       2},
      // COVID-19 x2, coronavirus x2, SARS-CoV-2 x1, virus x1
      {"/a.html",
       "<html><body>\n"
       "<p>COVID-19 cases rose. Covid-19 testing expanded.</p>\n"
       "<p>The coronavirus spread; CORONAVIRUS variants followed.</p>\n"
       "<p>Researchers sequenced SARS-CoV-2 and the virus genome.</p>\n"
       "<a href=\"/d.html\">more</a>\n"
       "</body></html>\n",
       6},
      // coronavirus x5
      {"/b.html",
       "<html><body>\n"
       "<p>Coronavirus update one. Coronavirus update two.</p>\n"
       "<p>coronavirus, coronavirus; (coronavirus)</p>\n"
       "<a href=\"/f.html\">f</a><a href=\"/a.html\">a again</a>\n"
       "</body></html>\n",
       5},
      // "a virus topic", "virus-free", "virus." count; Antivirus, Viruses,
      // covid-190 and xcovid-19 touch a letter or digit and do not.
      {"/c.html",
       "<html><body>\n"
       "<p>Antivirus software is not a virus topic. Viruses differ.</p>\n"
       "<p>covid-190 and xcovid-19 are not matches; virus-free virus.</p>\n"
       "</body></html>\n",
       3},
      // Visible: coronavirus x4, COVID-19 x4, virus x1. Style, script and
      // comment text are not visible.
      {"/d.html",
       "<html><head><style>.virus { color: red }</style>\n"
       "<script>var virus = \"coronavirus covid-19\";</script></head>\n"
       "<body><!-- virus virus virus -->\n"
       "<p>coronavirus coronavirus coronavirus coronavirus</p>\n"
       "<p>COVID-19 &amp; covid-19 &amp; Covid-19 &amp; COVID-19</p>\n"
       "<p>The virus.</p>\n"
       "</body></html>\n",
       9},
      // SARS-CoV-2 x7, three of them through numeric character references
      {"/f.html",
       "<html><body>\n"
       "<p>SARS&#45;CoV&#45;2 SARS&#x2D;CoV&#x2D;2 sars-cov-2</p>\n"
       "<p>Sars-Cov-2, SARS-COV-2. sars-cov-2! SARS-CoV-2?</p>\n"
       "<a href=\"/g.html\">g</a>\n"
       "</body></html>\n",
       7},
      // virus x1
      {"/g.html",
       "<html><body><p>An unrelated page about gardening, with one virus mention.</p></body></html>\n", 1},
  };
  return pages;
}

inline std::vector<std::string> fixture_paths_at_or_above(std::size_t threshold) {
  std::vector<std::string> out;
  for (const auto& p : fixture_pages()) {
    if (p.keyword_total >= threshold) out.push_back(p.path);
  }
  return out;
}

inline void add_fixture_site(crawler::MemoryTransport& transport, const std::string& origin) {
  for (const auto& p : fixture_pages()) transport.add_html(origin + p.path, p.html);
}

/// The fixture pages served over HTTP on 127.0.0.1 (robots.txt is 404).
class FixtureServer {
 public:
  FixtureServer() {
    for (const auto& p : fixture_pages()) {
      const std::string html = p.html;
      server_.Get(p.path, [html](const httplib::Request&, httplib::Response& res) {
        res.set_content(html, "text/html; charset=utf-8");
      });
    }
    server_.Get("/report.pdf", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("%PDF-1.4", "application/pdf");
    });
    server_.Get("/moved", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/a.html", 301); });
    server_.Get("/loop", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/loop", 302); });
    server_.Get("/broken", [](const httplib::Request&, httplib::Response& res) {
      res.status = 500;
      res.set_content("oops", "text/html");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FixtureServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  FixtureServer(const FixtureServer&) = delete;
  FixtureServer& operator=(const FixtureServer&) = delete;

  int port() const { return port_; }
  std::string origin() const { return "http://127.0.0.1:" + std::to_string(port_); }
  bool ok() const { return port_ > 0; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace covidmis::testing
