#include "covidmis/crawler.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <exception>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace covidmis::crawler {

namespace {

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

bool iequals_prefix(std::string_view text, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > text.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (lower(text[pos + i]) != prefix[i]) return false;
  }
  return true;
}

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
// Bytes of multi-byte UTF-8 sequences count as word characters.
bool is_word(char c) { return is_alpha(c) || is_digit(c) || static_cast<unsigned char>(c) >= 0x80; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Removes "." and ".." segments from an absolute path.
std::string remove_dot_segments(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t i = 1;
  const bool trailing_slash = path.ends_with("/") || path.ends_with("/.") || path.ends_with("/..");
  while (i <= path.size()) {
    std::size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    const auto seg = path.substr(i, j - i);
    if (seg == "..") {
      if (!out.empty()) out.pop_back();
    } else if (seg != "." && !(seg.empty() && j < path.size())) {
      if (!seg.empty()) out.push_back(seg);
    }
    i = j + 1;
  }
  std::string result;
  for (auto seg : out) {
    result += '/';
    result += seg;
  }
  if (result.empty() || (trailing_slash && !out.empty())) result += '/';
  return result;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

// ---- URLs -----------------------------------------------------------------

std::string Url::origin() const {
  std::string out = scheme + "://" + host;
  if (port) out += ":" + std::to_string(*port);
  return out;
}

std::string Url::target() const { return query.empty() ? path : path + "?" + query; }

std::string Url::str() const { return origin() + target(); }

std::optional<Url> parse_url(std::string_view text) {
  text = trim(text);
  Url url;
  std::size_t pos;
  if (iequals_prefix(text, 0, "https://")) {
    url.scheme = "https";
    pos = 8;
  } else if (iequals_prefix(text, 0, "http://")) {
    url.scheme = "http";
    pos = 7;
  } else {
    return std::nullopt;
  }
  text = text.substr(0, std::min(text.size(), text.find('#')));
  const std::size_t auth_end = std::min(text.size(), text.find_first_of("/?", pos));
  std::string_view authority = text.substr(pos, auth_end - pos);
  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
  std::string_view host = authority;
  if (auto colon = authority.rfind(':'); colon != std::string_view::npos && authority.front() != '[') {
    host = authority.substr(0, colon);
    const auto port = authority.substr(colon + 1);
    if (!port.empty()) {
      unsigned value = 0;
      for (char c : port) {
        if (!is_digit(c)) return std::nullopt;
        value = value * 10 + static_cast<unsigned>(c - '0');
        if (value > 65535) return std::nullopt;
      }
      const bool default_port = (url.scheme == "http" && value == 80) || (url.scheme == "https" && value == 443);
      if (!default_port) url.port = static_cast<std::uint16_t>(value);
    }
  }
  if (host.empty()) return std::nullopt;
  for (char c : host) {
    if (is_space(c) || c == '<' || c == '>' || c == '"') return std::nullopt;
  }
  url.host = lowercase(host);

  std::string_view rest = text.substr(auth_end);
  const auto q = rest.find('?');
  const std::string_view path = rest.substr(0, q);
  if (q != std::string_view::npos) url.query = std::string(rest.substr(q + 1));
  url.path = remove_dot_segments(path.empty() ? "/" : path);
  return url;
}

std::optional<Url> resolve_url(const Url& base, std::string_view href) {
  href = trim(href);
  href = href.substr(0, std::min(href.size(), href.find('#')));

  // Absolute reference: a scheme made of letters, digits, '+', '-', '.'.
  const auto colon = href.find(':');
  if (colon != std::string_view::npos && colon > 0 && is_alpha(href[0])) {
    const auto scheme = href.substr(0, colon);
    const bool scheme_chars = std::all_of(scheme.begin(), scheme.end(), [](char c) {
      return is_alpha(c) || is_digit(c) || c == '+' || c == '-' || c == '.';
    });
    if (scheme_chars && href.substr(0, href.find_first_of("/?")).size() >= colon) return parse_url(href);
  }
  if (href.starts_with("//")) return parse_url(base.scheme + ":" + std::string(href));

  Url out = base;
  if (href.empty()) return out;
  if (href.front() == '?') {
    out.query = std::string(href.substr(1));
    return out;
  }
  const auto q = href.find('?');
  std::string_view path = href.substr(0, q);
  out.query = q == std::string_view::npos ? std::string() : std::string(href.substr(q + 1));
  if (path.front() == '/') {
    out.path = remove_dot_segments(path);
  } else {
    const std::string dir = base.path.substr(0, base.path.rfind('/') + 1);
    out.path = remove_dot_segments(dir + std::string(path));
  }
  return out;
}

// ---- policy ---------------------------------------------------------------

void CrawlPolicy::validate() const {
  if (threshold < 1) throw std::invalid_argument("crawl.threshold must be >= 1");
  if (request_delay.count() < 0) throw std::invalid_argument("crawl.request_delay_ms must be >= 0");
  if (timeout.count() <= 0) throw std::invalid_argument("crawl.timeout_ms must be positive");
  if (workers < 1) throw std::invalid_argument("crawl.workers must be >= 1");
  if (max_pages_per_domain < 1) throw std::invalid_argument("crawl.max_pages must be >= 1");
  if (keywords.empty()) throw std::invalid_argument("crawl.keywords must not be empty");
  for (const auto& k : keywords) {
    if (k.empty()) throw std::invalid_argument("crawl.keywords must not contain an empty phrase");
    if (lowercase(k) != k) throw std::invalid_argument("crawl.keywords must be lowercase: " + k);
  }
}

// ---- fetching -------------------------------------------------------------

void MemoryTransport::add(const std::string& url, HttpResponse response) {
  pages_[parse_url(url).value().str()] = std::move(response);
}

void MemoryTransport::add_html(const std::string& url, std::string body) {
  add(url, HttpResponse{200, "text/html; charset=utf-8", "", std::move(body)});
}

void MemoryTransport::add_redirect(const std::string& from, const std::string& to, int status) {
  add(from, HttpResponse{status, "text/html", to, ""});
}

void MemoryTransport::add_timeout(const std::string& url) { timeouts_[parse_url(url).value().str()] = true; }

TransportResult MemoryTransport::get(const Url& url, std::chrono::milliseconds, const std::string&) {
  const std::string key = url.str();
  if (timeouts_.count(key)) return {TransportError::timeout, {}};
  auto it = pages_.find(key);
  if (it == pages_.end()) return {TransportError::none, HttpResponse{404, "text/html", "", "not found"}};
  return {TransportError::none, it->second};
}

std::string_view to_string(FetchError error) {
  switch (error) {
    case FetchError::none: return "ok";
    case FetchError::timeout: return "timeout";
    case FetchError::not_found: return "not_found";
    case FetchError::http_status: return "http_status";
    case FetchError::non_html: return "non_html";
    case FetchError::too_many_redirects: return "too_many_redirects";
    case FetchError::network: return "network";
    case FetchError::bad_url: return "bad_url";
  }
  return "unknown";
}

void Pacer::wait() {
  const auto now = std::chrono::steady_clock::now();
  if (last_ && delay_.count() > 0) {
    const auto ready = *last_ + delay_;
    if (ready > now) std::this_thread::sleep_until(ready);
  }
  last_ = std::chrono::steady_clock::now();
}

FetchResult fetch_page(Transport& transport, std::string_view url, const CrawlPolicy& policy, Pacer* pacer) {
  FetchResult result;
  auto current = parse_url(url);
  if (!current) {
    result.error = FetchError::bad_url;
    return result;
  }
  for (;;) {
    result.final_url = current->str();
    if (pacer) pacer->wait();
    const TransportResult tr = transport.get(*current, policy.timeout, policy.user_agent);
    if (tr.error == TransportError::timeout) {
      result.error = FetchError::timeout;
      return result;
    }
    if (tr.error == TransportError::network) {
      result.error = FetchError::network;
      return result;
    }
    const HttpResponse& resp = tr.response;
    result.status = resp.status;
    if (resp.status >= 300 && resp.status < 400 && !resp.location.empty()) {
      if (result.redirects == kMaxRedirects) {
        result.error = FetchError::too_many_redirects;
        return result;
      }
      auto next = resolve_url(*current, resp.location);
      if (!next) {
        result.error = FetchError::bad_url;
        return result;
      }
      ++result.redirects;
      current = std::move(next);
      continue;
    }
    if (resp.status == 404) {
      result.error = FetchError::not_found;
      return result;
    }
    if (resp.status < 200 || resp.status >= 300) {
      result.error = FetchError::http_status;
      return result;
    }
    const std::string type = lowercase(trim(std::string_view(resp.content_type).substr(0, resp.content_type.find(';'))));
    if (type != "text/html") {
      result.error = FetchError::non_html;
      return result;
    }
    result.body = resp.body;
    return result;
  }
}

// ---- HTML -----------------------------------------------------------------

std::string decode_entities(std::string_view text) {
  static const std::pair<std::string_view, std::string_view> kNamed[] = {
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "},
  };
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out += text[i++];
      continue;
    }
    const auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += text[i++];
      continue;
    }
    const auto name = text.substr(i + 1, semi - i - 1);
    bool decoded = false;
    if (name.size() >= 2 && name[0] == '#') {
      const bool hex = name[1] == 'x' || name[1] == 'X';
      const auto digits = name.substr(hex ? 2 : 1);
      std::uint32_t cp = 0;
      bool valid = !digits.empty();
      for (char c : digits) {
        int v;
        if (is_digit(c)) {
          v = c - '0';
        } else if (hex && lower(c) >= 'a' && lower(c) <= 'f') {
          v = lower(c) - 'a' + 10;
        } else {
          valid = false;
          break;
        }
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
        if (cp > 0x10FFFF) cp = 0x110000;
      }
      if (valid) {
        append_utf8(out, cp);
        decoded = true;
      }
    } else {
      for (const auto& [n, v] : kNamed) {
        if (name == n) {
          out += v;
          decoded = true;
          break;
        }
      }
    }
    if (decoded) {
      i = semi + 1;
    } else {
      out += text[i++];
    }
  }
  return out;
}

namespace {

struct Tag {
  std::string name;  // lowercase, without '/'
  bool closing = false;
  std::string_view attributes;
  std::size_t end = 0;  // index just past '>'
};

// Parses a tag starting at html[pos] == '<'. nullopt when the '<' does not
// open a tag (it is then ordinary text).
std::optional<Tag> parse_tag(std::string_view html, std::size_t pos) {
  std::size_t i = pos + 1;
  Tag tag;
  if (i < html.size() && html[i] == '/') {
    tag.closing = true;
    ++i;
  }
  if (i >= html.size() || !(is_alpha(html[i]) || (!tag.closing && (html[i] == '!' || html[i] == '?')))) {
    return std::nullopt;
  }
  const std::size_t name_start = i;
  while (i < html.size() && !is_space(html[i]) && html[i] != '>' && html[i] != '/') ++i;
  tag.name = lowercase(html.substr(name_start, i - name_start));
  const std::size_t attr_start = i;
  char quote = 0;
  while (i < html.size()) {
    const char c = html[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      break;
    }
    ++i;
  }
  tag.attributes = html.substr(attr_start, i - attr_start);
  tag.end = std::min(html.size(), i + 1);
  return tag;
}

// Index just past the closing tag of a raw-text element, or the end.
std::size_t skip_raw_text(std::string_view html, std::size_t from, std::string_view name) {
  const std::string closing = "</" + std::string(name);
  for (std::size_t i = from; i < html.size(); ++i) {
    if (html[i] == '<' && iequals_prefix(html, i, closing)) {
      const auto gt = html.find('>', i);
      return gt == std::string_view::npos ? html.size() : gt + 1;
    }
  }
  return html.size();
}

std::size_t skip_comment(std::string_view html, std::size_t pos) {
  const auto end = html.find("-->", pos + 4);
  return end == std::string_view::npos ? html.size() : end + 3;
}

std::optional<std::string> attribute(std::string_view attrs, std::string_view wanted) {
  std::size_t i = 0;
  while (i < attrs.size()) {
    while (i < attrs.size() && (is_space(attrs[i]) || attrs[i] == '/')) ++i;
    const std::size_t name_start = i;
    while (i < attrs.size() && !is_space(attrs[i]) && attrs[i] != '=' && attrs[i] != '/') ++i;
    const std::string name = lowercase(attrs.substr(name_start, i - name_start));
    while (i < attrs.size() && is_space(attrs[i])) ++i;
    std::string_view value;
    if (i < attrs.size() && attrs[i] == '=') {
      ++i;
      while (i < attrs.size() && is_space(attrs[i])) ++i;
      if (i < attrs.size() && (attrs[i] == '"' || attrs[i] == '\'')) {
        const char q = attrs[i++];
        const auto close = attrs.find(q, i);
        const auto stop = close == std::string_view::npos ? attrs.size() : close;
        value = attrs.substr(i, stop - i);
        i = std::min(attrs.size(), stop + 1);
      } else {
        const std::size_t vs = i;
        while (i < attrs.size() && !is_space(attrs[i])) ++i;
        value = attrs.substr(vs, i - vs);
      }
    }
    if (name.empty() && i == name_start) ++i;
    if (name == wanted) return decode_entities(value);
  }
  return std::nullopt;
}

bool is_raw_text(const std::string& name) { return name == "script" || name == "style"; }

}  // namespace

std::string extract_visible_text(std::string_view html) {
  std::string raw;
  raw.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<') {
      raw += html[i++];
      continue;
    }
    if (html.substr(i, 4) == "<!--") {
      i = skip_comment(html, i);
      raw += ' ';
      continue;
    }
    auto tag = parse_tag(html, i);
    if (!tag) {
      raw += html[i++];
      continue;
    }
    i = tag->end;
    if (!tag->closing && is_raw_text(tag->name)) i = skip_raw_text(html, i, tag->name);
    raw += ' ';
  }
  const std::string decoded = decode_entities(raw);
  std::string out;
  out.reserve(decoded.size());
  bool pending_space = false;
  for (char c : decoded) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

std::vector<std::string> extract_links(std::string_view html, std::string_view base_url) {
  const auto base = parse_url(base_url);
  if (!base) throw std::invalid_argument("extract_links: malformed base URL: " + std::string(base_url));
  const std::string self = base->str();
  std::vector<std::string> links;
  std::set<std::string> seen{self};
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<') {
      ++i;
      continue;
    }
    if (html.substr(i, 4) == "<!--") {
      i = skip_comment(html, i);
      continue;
    }
    auto tag = parse_tag(html, i);
    if (!tag) {
      ++i;
      continue;
    }
    i = tag->end;
    if (tag->closing) continue;
    if (is_raw_text(tag->name)) {
      i = skip_raw_text(html, i, tag->name);
      continue;
    }
    if (tag->name != "a") continue;
    const auto href = attribute(tag->attributes, "href");
    if (!href) continue;
    const auto resolved = resolve_url(*base, *href);
    if (!resolved) continue;
    std::string link = resolved->str();
    if (seen.insert(link).second) links.push_back(std::move(link));
  }
  return links;
}

// ---- keyword rule ---------------------------------------------------------

KeywordCounts count_keywords(std::string_view text, std::span<const std::string> keywords) {
  KeywordCounts counts;
  std::vector<std::string> ordered;
  for (const auto& k : keywords) {
    if (k.empty()) throw std::invalid_argument("count_keywords: empty keyword");
    counts[k] = 0;
    ordered.push_back(k);
  }
  // Longest first, so the first boundary-respecting match at a position wins.
  std::sort(ordered.begin(), ordered.end(),
            [](const std::string& a, const std::string& b) { return a.size() != b.size() ? a.size() > b.size() : a < b; });
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

  std::size_t i = 0;
  while (i < text.size()) {
    if (i > 0 && is_word(text[i - 1])) {
      ++i;
      continue;
    }
    const std::string* hit = nullptr;
    for (const auto& k : ordered) {
      if (!iequals_prefix(text, i, k)) continue;
      const std::size_t end = i + k.size();
      if (end < text.size() && is_word(text[end])) continue;
      hit = &k;
      break;
    }
    if (hit) {
      ++counts[*hit];
      i += hit->size();
    } else {
      ++i;
    }
  }
  return counts;
}

std::size_t total_count(const KeywordCounts& counts) {
  std::size_t total = 0;
  for (const auto& [_, n] : counts) total += n;
  return total;
}

bool classify_article(const KeywordCounts& counts, std::size_t threshold) { return total_count(counts) >= threshold; }

// ---- robots.txt -----------------------------------------------------------

RobotsRules RobotsRules::parse(std::string_view text, std::string_view user_agent) {
  const std::string agent = lowercase(user_agent.substr(0, user_agent.find('/')));
  struct Group {
    std::vector<std::string> agents;
    std::vector<std::pair<std::string, bool>> rules;
  };
  std::vector<Group> groups;
  bool last_was_agent = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    line = trim(line.substr(0, line.find('#')));
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string key = lowercase(trim(line.substr(0, colon)));
    const std::string_view value = trim(line.substr(colon + 1));
    if (key == "user-agent") {
      if (!last_was_agent || groups.empty()) groups.emplace_back();
      groups.back().agents.push_back(lowercase(value));
      last_was_agent = true;
    } else if (key == "allow" || key == "disallow") {
      last_was_agent = false;
      if (groups.empty()) continue;
      if (key == "disallow" && value.empty()) continue;
      groups.back().rules.emplace_back(std::string(value), key == "allow");
    } else {
      last_was_agent = false;
    }
  }
  RobotsRules out;
  const Group* star = nullptr;
  for (const auto& g : groups) {
    for (const auto& a : g.agents) {
      if (a == "*") {
        if (!star) star = &g;
      } else if (!agent.empty() && agent.find(a) != std::string::npos) {
        out.rules_ = g.rules;
        return out;
      }
    }
  }
  if (star) out.rules_ = star->rules;
  return out;
}

bool RobotsRules::allowed(std::string_view path) const {
  std::size_t best_len = 0;
  bool verdict = true;
  bool matched = false;
  for (const auto& [prefix, allow] : rules_) {
    if (!path.starts_with(prefix)) continue;
    if (!matched || prefix.size() > best_len || (prefix.size() == best_len && allow)) {
      best_len = prefix.size();
      verdict = allow;
      matched = true;
    }
  }
  return verdict;
}

// ---- crawling -------------------------------------------------------------

namespace {

std::string domain_of(const Url& url) { return corpus::normalize_domain(url.str()).value_or(url.host); }

}  // namespace

CrawlReport crawl_domain(Transport& transport, std::string_view seed_url, TrustLabel trust_label,
                         const CrawlPolicy& policy) {
  policy.validate();
  CrawlReport report;
  report.seed_url = std::string(seed_url);
  report.trust_label = trust_label;
  const auto seed = parse_url(seed_url);
  if (!seed) {
    ++report.errors[std::string(to_string(FetchError::bad_url))];
    return report;
  }
  report.seed_url = seed->str();
  report.domain = domain_of(*seed);

  Pacer pacer(policy.request_delay);
  RobotsRules robots;
  if (policy.respect_robots) {
    Url robots_url = *seed;
    robots_url.path = "/robots.txt";
    robots_url.query.clear();
    pacer.wait();
    const TransportResult tr = transport.get(robots_url, policy.timeout, policy.user_agent);
    // Any failure to read robots.txt leaves crawling unrestricted.
    if (tr.error == TransportError::none && tr.response.status >= 200 && tr.response.status < 300) {
      robots = RobotsRules::parse(tr.response.body, policy.user_agent);
    }
  }

  std::set<std::string> seen{report.seed_url};
  std::deque<std::pair<std::string, std::size_t>> frontier{{report.seed_url, 0}};
  while (!frontier.empty() && report.pages_visited < policy.max_pages_per_domain) {
    auto [url, depth] = std::move(frontier.front());
    frontier.pop_front();
    const Url parsed = parse_url(url).value();
    if (!robots.allowed(parsed.target())) {
      ++report.robots_skipped;
      continue;
    }

    PageResult page;
    page.url = url;
    page.depth = depth;
    const FetchResult fetched = fetch_page(transport, url, policy, &pacer);
    ++report.pages_visited;
    page.error = fetched.error;
    page.http_status = fetched.status;
    if (fetched.final_url != url) seen.insert(fetched.final_url);

    if (!fetched.ok()) {
      ++report.errors[std::string(to_string(fetched.error))];
      report.pages.push_back(std::move(page));
      continue;
    }

    page.counts = count_keywords(extract_visible_text(fetched.body), policy.keywords);
    page.total = total_count(page.counts);
    page.is_covid_article = page.total >= policy.threshold;
    if (page.is_covid_article) report.articles.push_back(url);

    page.out_links = extract_links(fetched.body, fetched.final_url);
    if (depth < policy.max_depth) {
      for (const auto& link : page.out_links) {
        const Url target = parse_url(link).value();
        if (policy.same_domain_only && domain_of(target) != report.domain) continue;
        if (seen.insert(link).second) frontier.emplace_back(link, depth + 1);
      }
    }
    report.pages.push_back(std::move(page));
  }
  return report;
}

std::vector<CrawlReport> crawl_domains(Transport& transport, std::span<const CrawlSeed> seeds,
                                       const CrawlPolicy& policy) {
  policy.validate();
  std::vector<CrawlReport> reports(seeds.size());
  const std::size_t workers = std::min(policy.workers, std::max<std::size_t>(seeds.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        reports[i] = crawl_domain(transport, seeds[i].url, seeds[i].trust_label, policy);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return reports;
}

std::string articles_jsonl(std::span<const CrawlReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    for (const auto& page : r.pages) {
      if (!page.is_covid_article) continue;
      const nlohmann::json line = {
          {"url", page.url},
          {"domain", domain_of(parse_url(page.url).value())},
          {"trust_label", corpus::to_string(r.trust_label)},
          {"total_keyword_count", page.total},
      };
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

nlohmann::json report_summary(const CrawlReport& r) {
  return {
      {"seed_url", r.seed_url},
      {"domain", r.domain},
      {"trust_label", corpus::to_string(r.trust_label)},
      {"pages_visited", r.pages_visited},
      {"articles", r.articles.size()},
      {"robots_skipped", r.robots_skipped},
      {"errors", r.errors},
  };
}

}  // namespace covidmis::crawler
