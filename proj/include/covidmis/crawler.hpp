#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidmis/corpus.hpp"

namespace covidmis::crawler {

using corpus::TrustLabel;

// ---- URLs -----------------------------------------------------------------

/// Absolute http(s) URL without fragment. Scheme and host are lowercase and
/// the default port is omitted.
struct Url {
  std::string scheme;
  std::string host;
  std::optional<std::uint16_t> port;
  std::string path = "/";
  std::string query;  // without '?'

  std::string origin() const;
  /// Path plus "?query" when present.
  std::string target() const;
  std::string str() const;

  friend bool operator==(const Url&, const Url&) = default;
};

std::optional<Url> parse_url(std::string_view text);
/// Resolves `href` against `base`. Returns nullopt for non-http(s) schemes
/// and malformed references. The fragment is dropped.
std::optional<Url> resolve_url(const Url& base, std::string_view href);

// ---- policy ---------------------------------------------------------------

struct CrawlPolicy {
  std::vector<std::string> keywords{"sars-cov-2", "covid-19", "coronavirus", "virus"};
  std::size_t threshold = 6;
  std::size_t max_pages_per_domain = 200;
  std::size_t max_depth = 3;
  std::chrono::milliseconds request_delay{1000};
  bool same_domain_only = true;
  std::chrono::milliseconds timeout{10000};
  std::size_t workers = 4;
  bool respect_robots = true;
  std::string user_agent = "covidmis-crawler/0.1";

  void validate() const;
};

// ---- fetching -------------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string content_type;
  std::string location;
  std::string body;
};

enum class TransportError { none, timeout, network };

struct TransportResult {
  TransportError error = TransportError::none;
  HttpResponse response;
};

/// One HTTP GET without redirect handling. Implementations must be safe to
/// call from several threads.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResult get(const Url& url, std::chrono::milliseconds timeout, const std::string& user_agent) = 0;
};

/// Real network access (http and https).
std::unique_ptr<Transport> make_http_transport();

/// Serves canned responses keyed by absolute URL string; anything else is 404.
class MemoryTransport final : public Transport {
 public:
  void add(const std::string& url, HttpResponse response);
  void add_html(const std::string& url, std::string body);
  void add_redirect(const std::string& from, const std::string& to, int status = 301);
  void add_timeout(const std::string& url);

  TransportResult get(const Url& url, std::chrono::milliseconds timeout, const std::string& user_agent) override;

 private:
  std::map<std::string, HttpResponse> pages_;
  std::map<std::string, bool> timeouts_;
};

enum class FetchError { none, timeout, not_found, http_status, non_html, too_many_redirects, network, bad_url };
std::string_view to_string(FetchError error);

inline constexpr std::size_t kMaxRedirects = 5;

/// Spaces requests to one domain at least `delay` apart.
class Pacer {
 public:
  explicit Pacer(std::chrono::milliseconds delay) : delay_(delay) {}
  void wait();

 private:
  std::chrono::milliseconds delay_;
  std::optional<std::chrono::steady_clock::time_point> last_;
};

struct FetchResult {
  FetchError error = FetchError::none;
  int status = 0;
  std::string final_url;
  std::string body;
  std::size_t redirects = 0;

  bool ok() const { return error == FetchError::none; }
};

/// GET with up to kMaxRedirects redirect hops; succeeds only on a 2xx
/// text/html response. `pacer`, when given, is consulted before each request.
FetchResult fetch_page(Transport& transport, std::string_view url, const CrawlPolicy& policy, Pacer* pacer = nullptr);

// ---- HTML -----------------------------------------------------------------

/// Text outside tags, with script/style/comments removed, common entities
/// decoded and whitespace collapsed.
std::string extract_visible_text(std::string_view html);
/// Absolute targets of <a href> in document order, fragments stripped,
/// duplicates and links back to `base_url` removed.
std::vector<std::string> extract_links(std::string_view html, std::string_view base_url);
/// Decodes &amp; &lt; &gt; &quot; &apos; &nbsp; and numeric references.
std::string decode_entities(std::string_view text);

// ---- keyword rule ---------------------------------------------------------

using KeywordCounts = std::map<std::string, std::size_t>;

/// Case-insensitive whole-phrase counts. A match may not touch a letter or
/// digit on either side, and at each position only the longest matching
/// keyword counts.
KeywordCounts count_keywords(std::string_view text, std::span<const std::string> keywords);
std::size_t total_count(const KeywordCounts& counts);
bool classify_article(const KeywordCounts& counts, std::size_t threshold);

// ---- robots.txt -----------------------------------------------------------

class RobotsRules {
 public:
  RobotsRules() = default;
  static RobotsRules parse(std::string_view text, std::string_view user_agent);
  /// Longest matching rule wins; Allow wins a tie; no rule means allowed.
  bool allowed(std::string_view path) const;

 private:
  std::vector<std::pair<std::string, bool>> rules_;  // (prefix, allow)
};

// ---- crawling -------------------------------------------------------------

struct PageResult {
  std::string url;
  std::size_t depth = 0;
  FetchError error = FetchError::none;
  int http_status = 0;
  KeywordCounts counts;
  std::size_t total = 0;
  bool is_covid_article = false;
  std::vector<std::string> out_links;
};

struct CrawlReport {
  std::string seed_url;
  std::string domain;
  TrustLabel trust_label = TrustLabel::trustworthy;
  std::vector<PageResult> pages;   // visit order
  std::vector<std::string> articles;
  std::size_t pages_visited = 0;
  std::size_t robots_skipped = 0;
  std::map<std::string, std::size_t> errors;  // error kind -> count
};

/// Breadth-first crawl from `seed_url`. Fetch errors are recorded, never thrown.
CrawlReport crawl_domain(Transport& transport, std::string_view seed_url, TrustLabel trust_label,
                         const CrawlPolicy& policy);

struct CrawlSeed {
  std::string url;
  TrustLabel trust_label = TrustLabel::trustworthy;
};

/// Crawls every seed on up to policy.workers threads. Reports come back in
/// seed order.
std::vector<CrawlReport> crawl_domains(Transport& transport, std::span<const CrawlSeed> seeds,
                                       const CrawlPolicy& policy);

/// One JSON line per article: {url, domain, trust_label, total_keyword_count}.
std::string articles_jsonl(std::span<const CrawlReport> reports);
nlohmann::json report_summary(const CrawlReport& report);

}  // namespace covidmis::crawler
