#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covidmis::corpus {

enum class TrustLabel { trustworthy, untrustworthy };

/// Fixed encoding: 1 = fake, 0 = real.
enum class ClassLabel : int { real = 0, fake = 1 };

std::string_view to_string(TrustLabel label);
std::string_view to_string(ClassLabel label);
std::optional<TrustLabel> parse_trust_label(std::string_view text);

struct TweetRecord {
  std::string id;
  std::chrono::sys_seconds timestamp{};
  std::string text;
  std::string language;
  std::vector<std::string> urls;
  std::string user_id;
  std::string user_location;
  std::uint64_t followers = 0;
  std::uint64_t friends = 0;
  std::uint64_t likes = 0;
  std::uint64_t retweets = 0;
};

struct LoadResult {
  std::vector<TweetRecord> records;
  std::size_t skipped = 0;
};

struct LabeledExample {
  std::string text;
  ClassLabel label = ClassLabel::real;
  std::string source_url;
  std::string domain;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

class DomainTrustList {
 public:
  /// Normalizes `domain` first. Throws DataError if the domain is already
  /// present with the opposite label.
  void add(std::string_view domain, TrustLabel label);
  std::optional<TrustLabel> lookup(std::string_view normalized_domain) const;
  const std::map<std::string, TrustLabel>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, TrustLabel> entries_;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::uint64_t seed = 0;
  double ratio = 0.7;
};

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // example index -> fold id in [0, k)
};

struct LabelStats {
  std::size_t tweets = 0;
  std::size_t fake = 0;
  std::size_t real = 0;
  std::size_t conflicts = 0;
  std::size_t unmatched = 0;
};

/// Date window applied after loading; either bound may be absent.
struct DateBounds {
  std::optional<std::chrono::sys_seconds> from;
  std::optional<std::chrono::sys_seconds> to;
};

/// Default keyword set used to select pandemic-related tweets.
const std::vector<std::string>& default_search_keywords();

/// Accepts "YYYY-MM-DDTHH:MM:SS[Z|+00:00]" and "YYYY-MM-DD". Returns nullopt
/// on anything else.
std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text);
std::string format_timestamp(std::chrono::sys_seconds ts);

/// Parses one JSONL line; nullopt when the record fails validation.
std::optional<TweetRecord> parse_tweet_line(std::string_view line);
LoadResult load_tweets(const std::filesystem::path& path);

DomainTrustList load_trust_list(const std::filesystem::path& path);

std::vector<TweetRecord> filter_by_keywords(std::span<const TweetRecord> tweets,
                                            std::span<const std::string> keywords);
std::vector<TweetRecord> filter_by_date(std::span<const TweetRecord> tweets, const DateBounds& bounds);

std::vector<std::string> extract_urls(std::string_view text);

/// Lowercased host without port and leading "www."; nullopt for a malformed
/// URL (no http/https scheme or empty host).
std::optional<std::string> normalize_domain(std::string_view url);

std::vector<LabeledExample> label_tweets(std::span<const TweetRecord> tweets, const DomainTrustList& trust,
                                         LabelStats* stats = nullptr);

std::vector<LabeledExample> dedup_examples(std::span<const LabeledExample> examples);

std::vector<LabeledExample> balance_downsample(std::span<const LabeledExample> examples, std::uint64_t seed);

/// floor(ratio * n + 0.5)
std::size_t train_size(std::size_t n, double ratio);
DatasetSplit split_train_test(std::span<const LabeledExample> examples, double ratio, std::uint64_t seed);

FoldAssignment stratified_kfold(std::span<const ClassLabel> labels, std::size_t k, std::uint64_t seed);
FoldAssignment stratified_kfold(std::span<const LabeledExample> examples, std::size_t k, std::uint64_t seed);

std::vector<LabeledExample> load_labeled(const std::filesystem::path& path);
void write_labeled(const std::filesystem::path& path, std::span<const LabeledExample> examples);

}  // namespace covidmis::corpus
