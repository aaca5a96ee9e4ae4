#include "covidmis/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "covidmis/error.hpp"
#include "covidmis/io.hpp"
#include "covidmis/rng.hpp"

namespace covidmis::corpus {

using nlohmann::json;

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool starts_with_icase(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[i])) != prefix[i]) return false;
  }
  return true;
}

std::size_t scheme_length(std::string_view text) {
  if (starts_with_icase(text, "https://")) return 8;
  if (starts_with_icase(text, "http://")) return 7;
  return 0;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

template <typename Int>
std::optional<Int> parse_digits(std::string_view s) {
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::optional<std::uint64_t> count_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return 0;
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer()) {
    const auto v = it->get<std::int64_t>();
    if (v < 0) return std::nullopt;
    return static_cast<std::uint64_t>(v);
  }
  return std::nullopt;
}

std::optional<std::string> string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::string{};
  if (!it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(TrustLabel label) {
  return label == TrustLabel::trustworthy ? "trustworthy" : "untrustworthy";
}

std::string_view to_string(ClassLabel label) { return label == ClassLabel::fake ? "fake" : "real"; }

std::optional<TrustLabel> parse_trust_label(std::string_view text) {
  const std::string lower = ascii_lower(trim(text));
  if (lower == "trustworthy") return TrustLabel::trustworthy;
  if (lower == "untrustworthy") return TrustLabel::untrustworthy;
  return std::nullopt;
}

const std::vector<std::string>& default_search_keywords() {
  static const std::vector<std::string> keywords{
      "corona", "coronavirus", "covid-19", "stay at home", "lockdown",
      "social distancing", "epidemic", "pandemic", "outbreak"};
  return keywords;
}

std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  text = trim(text);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto y = parse_digits<int>(text.substr(0, 4));
  auto mo = parse_digits<unsigned>(text.substr(5, 2));
  auto d = parse_digits<unsigned>(text.substr(8, 2));
  if (!y || !mo || !d) return std::nullopt;
  const year_month_day ymd{year{*y}, month{*mo}, day{*d}};
  if (!ymd.ok()) return std::nullopt;
  sys_seconds result = sys_days{ymd};
  if (text.size() == 10) return result;

  if (text.size() < 19 || (text[10] != 'T' && text[10] != ' ') || text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  auto hh = parse_digits<unsigned>(text.substr(11, 2));
  auto mm = parse_digits<unsigned>(text.substr(14, 2));
  auto ss = parse_digits<unsigned>(text.substr(17, 2));
  if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
  result += hours{*hh} + minutes{*mm} + seconds{*ss};

  std::string_view rest = text.substr(19);
  if (!rest.empty() && rest.front() == '.') {
    std::size_t i = 1;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
    if (i == 1) return std::nullopt;
    rest.remove_prefix(i);
  }
  if (rest.empty() || rest == "Z") return result;
  if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
    auto oh = parse_digits<unsigned>(rest.substr(1, 2));
    auto om = parse_digits<unsigned>(rest.substr(4, 2));
    if (!oh || !om) return std::nullopt;
    const seconds offset = hours{*oh} + minutes{*om};
    return rest[0] == '+' ? result - offset : result + offset;
  }
  return std::nullopt;
}

std::string format_timestamp(std::chrono::sys_seconds ts) {
  using namespace std::chrono;
  const sys_days day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss tod{ts - day_point};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                static_cast<long>(tod.seconds().count()));
  return buf;
}

std::optional<TweetRecord> parse_tweet_line(std::string_view line) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!obj.is_object()) return std::nullopt;

  TweetRecord rec;
  auto id = obj.find("id");
  if (id == obj.end()) return std::nullopt;
  if (id->is_string()) {
    rec.id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    rec.id = std::to_string(id->get<std::int64_t>());
  } else {
    return std::nullopt;
  }
  if (rec.id.empty()) return std::nullopt;

  auto text = obj.find("text");
  if (text == obj.end() || !text->is_string()) return std::nullopt;
  rec.text = text->get<std::string>();

  auto ts = obj.find("timestamp");
  if (ts == obj.end()) return std::nullopt;
  if (ts->is_string()) {
    auto parsed = parse_timestamp(ts->get_ref<const std::string&>());
    if (!parsed) return std::nullopt;
    rec.timestamp = *parsed;
  } else if (ts->is_number_integer()) {
    rec.timestamp = std::chrono::sys_seconds{std::chrono::seconds{ts->get<std::int64_t>()}};
  } else {
    return std::nullopt;
  }

  auto language = string_field(obj, "language");
  auto user_id = string_field(obj, "user_id");
  auto location = string_field(obj, "user_location");
  if (!language || !user_id || !location) return std::nullopt;
  rec.language = std::move(*language);
  rec.user_id = std::move(*user_id);
  rec.user_location = std::move(*location);

  if (auto urls = obj.find("urls"); urls != obj.end() && !urls->is_null()) {
    if (!urls->is_array()) return std::nullopt;
    for (const auto& u : *urls) {
      if (!u.is_string()) return std::nullopt;
      rec.urls.push_back(u.get<std::string>());
    }
  }

  auto followers = count_field(obj, "followers");
  auto friends = count_field(obj, "friends");
  auto likes = count_field(obj, "likes");
  auto retweets = count_field(obj, "retweets");
  if (!followers || !friends || !likes || !retweets) return std::nullopt;
  rec.followers = *followers;
  rec.friends = *friends;
  rec.likes = *likes;
  rec.retweets = *retweets;
  return rec;
}

LoadResult load_tweets(const std::filesystem::path& path) {
  LoadResult result;
  std::unordered_set<std::string> seen_ids;
  for (const std::string& line : io::read_lines(path)) {
    if (trim(line).empty()) continue;
    auto rec = parse_tweet_line(line);
    if (!rec || !seen_ids.insert(rec->id).second) {
      ++result.skipped;
      continue;
    }
    result.records.push_back(std::move(*rec));
  }
  return result;
}

void DomainTrustList::add(std::string_view domain, TrustLabel label) {
  std::string key;
  if (scheme_length(domain) > 0) {
    auto normalized = normalize_domain(domain);
    if (!normalized) throw DataError("malformed domain in trust list: " + std::string(domain));
    key = std::move(*normalized);
  } else {
    auto normalized = normalize_domain("http://" + std::string(trim(domain)));
    if (!normalized) throw DataError("malformed domain in trust list: " + std::string(domain));
    key = std::move(*normalized);
  }
  auto [it, inserted] = entries_.emplace(key, label);
  if (!inserted && it->second != label) {
    throw DataError("domain listed with both labels: " + key);
  }
}

std::optional<TrustLabel> DomainTrustList::lookup(std::string_view normalized_domain) const {
  auto it = entries_.find(std::string(normalized_domain));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

DomainTrustList load_trust_list(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  DomainTrustList list;
  bool header_seen = false;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    std::string_view line = trim(lines[n]);
    if (line.empty()) continue;
    if (!header_seen) {
      if (ascii_lower(line) != "domain,label") {
        throw DataError(path.string() + ": expected header 'domain,label'");
      }
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(n + 1) + ": expected 'domain,label'");
    }
    auto unquote = [](std::string_view s) {
      s = trim(s);
      if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
      return s;
    };
    const auto domain = unquote(line.substr(0, comma));
    const auto label = parse_trust_label(unquote(line.substr(comma + 1)));
    if (!label) {
      throw DataError(path.string() + ":" + std::to_string(n + 1) +
                      ": label must be 'trustworthy' or 'untrustworthy'");
    }
    list.add(domain, *label);
  }
  return list;
}

std::vector<TweetRecord> filter_by_keywords(std::span<const TweetRecord> tweets,
                                            std::span<const std::string> keywords) {
  if (keywords.empty()) throw std::invalid_argument("filter_by_keywords: keyword list is empty");
  std::vector<std::string> lowered;
  lowered.reserve(keywords.size());
  for (const auto& k : keywords) lowered.push_back(ascii_lower(k));

  std::vector<TweetRecord> kept;
  for (const auto& tweet : tweets) {
    const std::string text = ascii_lower(tweet.text);
    const bool hit = std::any_of(lowered.begin(), lowered.end(), [&](const std::string& k) {
      return !k.empty() && text.find(k) != std::string::npos;
    });
    if (hit) kept.push_back(tweet);
  }
  return kept;
}

std::vector<TweetRecord> filter_by_date(std::span<const TweetRecord> tweets, const DateBounds& bounds) {
  std::vector<TweetRecord> kept;
  for (const auto& t : tweets) {
    if (bounds.from && t.timestamp < *bounds.from) continue;
    if (bounds.to && t.timestamp > *bounds.to) continue;
    kept.push_back(t);
  }
  return kept;
}

std::vector<std::string> extract_urls(std::string_view text) {
  std::vector<std::string> urls;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t scheme = scheme_length(text.substr(i));
    if (scheme == 0 || i + scheme >= text.size() || is_space(text[i + scheme])) {
      ++i;
      continue;
    }
    std::size_t end = i + scheme;
    while (end < text.size() && !is_space(text[end])) ++end;
    urls.emplace_back(text.substr(i, end - i));
    i = end;
  }
  return urls;
}

std::optional<std::string> normalize_domain(std::string_view url) {
  const std::size_t scheme = scheme_length(url);
  if (scheme == 0) return std::nullopt;
  std::string_view rest = url.substr(scheme);
  std::string_view authority = rest.substr(0, rest.find_first_of("/?#"));
  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);

  std::string_view host = authority;
  if (!host.empty() && host.front() == '[') {
    const auto close = host.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = host.substr(0, close + 1);
  } else if (auto colon = host.find(':'); colon != std::string_view::npos) {
    const auto port = host.substr(colon + 1);
    if (!std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return std::nullopt;
    }
    host = host.substr(0, colon);
  }

  std::string out = ascii_lower(host);
  if (out.starts_with("www.")) out.erase(0, 4);
  while (!out.empty() && out.back() == '.') out.pop_back();
  if (out.empty()) return std::nullopt;
  if (out.front() != '[') {
    const bool valid = std::all_of(out.begin(), out.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
    });
    if (!valid || out.front() == '.') return std::nullopt;
  }
  return out;
}

std::vector<LabeledExample> label_tweets(std::span<const TweetRecord> tweets, const DomainTrustList& trust,
                                         LabelStats* stats) {
  LabelStats local;
  std::vector<LabeledExample> out;
  for (const auto& tweet : tweets) {
    ++local.tweets;
    std::vector<std::string> urls = tweet.urls;
    for (auto& u : extract_urls(tweet.text)) urls.push_back(std::move(u));
    std::set<std::string> seen;

    std::vector<LabeledExample> matches;
    bool any_fake = false;
    bool any_real = false;
    for (const auto& url : urls) {
      if (!seen.insert(url).second) continue;
      auto domain = normalize_domain(url);
      if (!domain) continue;
      auto trust_label = trust.lookup(*domain);
      if (!trust_label) continue;
      const ClassLabel label = *trust_label == TrustLabel::untrustworthy ? ClassLabel::fake : ClassLabel::real;
      (label == ClassLabel::fake ? any_fake : any_real) = true;
      matches.push_back(LabeledExample{tweet.text, label, url, std::move(*domain)});
    }

    if (matches.empty()) {
      ++local.unmatched;
    } else if (any_fake && any_real) {
      ++local.conflicts;
    } else {
      for (auto& m : matches) {
        ++(m.label == ClassLabel::fake ? local.fake : local.real);
        out.push_back(std::move(m));
      }
    }
  }
  if (stats) *stats = local;
  return out;
}

std::vector<LabeledExample> dedup_examples(std::span<const LabeledExample> examples) {
  std::set<std::pair<std::string, int>> seen;
  std::vector<LabeledExample> out;
  for (const auto& e : examples) {
    if (seen.emplace(e.text, static_cast<int>(e.label)).second) out.push_back(e);
  }
  return out;
}

std::vector<LabeledExample> balance_downsample(std::span<const LabeledExample> examples, std::uint64_t seed) {
  std::vector<std::size_t> fake_idx;
  std::vector<std::size_t> real_idx;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (examples[i].label == ClassLabel::fake ? fake_idx : real_idx).push_back(i);
  }
  if (fake_idx.empty() || real_idx.empty()) {
    throw DataError("cannot balance: corpus has " + std::to_string(fake_idx.size()) + " fake and " +
                    std::to_string(real_idx.size()) + " real examples");
  }

  std::vector<char> keep(examples.size(), 1);
  auto& majority = fake_idx.size() > real_idx.size() ? fake_idx : real_idx;
  const std::size_t target = std::min(fake_idx.size(), real_idx.size());
  if (majority.size() > target) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(majority));
    for (std::size_t j = target; j < majority.size(); ++j) keep[majority[j]] = 0;
  }

  std::vector<LabeledExample> out;
  out.reserve(2 * target);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (keep[i]) out.push_back(examples[i]);
  }
  return out;
}

std::size_t train_size(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

DatasetSplit split_train_test(std::span<const LabeledExample> examples, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  if (examples.size() < 2) {
    throw DataError("cannot split " + std::to_string(examples.size()) + " example(s); need at least 2");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  DatasetSplit split;
  split.seed = seed;
  split.ratio = ratio;
  const std::size_t n_train = train_size(examples.size(), ratio);
  split.train.reserve(n_train);
  split.test.reserve(examples.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.test).push_back(examples[order[i]]);
  }
  return split;
}

FoldAssignment stratified_kfold(std::span<const ClassLabel> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<int>(labels[i])].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < k) {
      throw DataError("class '" + std::string(to_string(static_cast<ClassLabel>(c))) + "' has " +
                      std::to_string(by_class[c].size()) + " example(s), fewer than k=" + std::to_string(k));
    }
  }

  FoldAssignment folds;
  folds.k = k;
  folds.fold_of.assign(labels.size(), 0);
  Rng rng(seed);
  std::size_t offset = 0;
  // Real first, then fake; the round-robin offset carries over so fold totals
  // stay within one of each other too.
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t j = 0; j < members.size(); ++j) folds.fold_of[members[j]] = (offset + j) % k;
    offset = (offset + members.size()) % k;
  }
  return folds;
}

FoldAssignment stratified_kfold(std::span<const LabeledExample> examples, std::size_t k, std::uint64_t seed) {
  std::vector<ClassLabel> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) labels.push_back(e.label);
  return stratified_kfold(std::span<const ClassLabel>(labels), k, seed);
}

std::vector<LabeledExample> load_labeled(const std::filesystem::path& path) {
  std::vector<LabeledExample> out;
  const auto lines = io::read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    json obj = json::parse(lines[n], nullptr, false);
    auto bad = [&] { return DataError(path.string() + ":" + std::to_string(n + 1) + ": invalid labeled record"); };
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string() || !obj.contains("label")) throw bad();
    LabeledExample ex;
    ex.text = obj["text"].get<std::string>();
    const auto& label = obj["label"];
    if (label.is_number_integer() && (label.get<int>() == 0 || label.get<int>() == 1)) {
      ex.label = static_cast<ClassLabel>(label.get<int>());
    } else if (label.is_string() && (label == "fake" || label == "real")) {
      ex.label = label == "fake" ? ClassLabel::fake : ClassLabel::real;
    } else {
      throw bad();
    }
    ex.source_url = obj.value("source_url", "");
    ex.domain = obj.value("domain", "");
    out.push_back(std::move(ex));
  }
  return out;
}

void write_labeled(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
  std::string body;
  for (const auto& e : examples) {
    json obj;
    obj["text"] = e.text;
    obj["label"] = static_cast<int>(e.label);
    obj["source_url"] = e.source_url;
    obj["domain"] = e.domain;
    obj["schema_version"] = 1;
    body += obj.dump(-1, ' ', false, json::error_handler_t::replace);
    body += '\n';
  }
  io::write_file_atomic(path, body);
}

}  // namespace covidmis::corpus
