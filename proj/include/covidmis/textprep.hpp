#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covidmis::textprep {

enum class PadMode { pre, post };

std::string_view to_string(PadMode mode);
PadMode parse_pad_mode(std::string_view text);

using StopwordSet = std::set<std::string, std::less<>>;

struct PreprocessConfig {
  std::size_t max_sequence_length = 64;
  PadMode pad_mode = PadMode::pre;
  bool stem = true;
  StopwordSet stopwords;
  std::size_t min_token_frequency = 2;
  std::size_t max_vocab_size = 0;  // 0 = unlimited

  void validate() const;
};

/// Token -> index with 0 = PAD and 1 = OOV reserved.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kOov = 1;

  Vocabulary() = default;
  /// Tokens receive indices 2, 3, ... in the given order.
  explicit Vocabulary(std::span<const std::string> ranked_tokens);

  std::int32_t lookup(std::string_view token) const;
  /// Including the two reserved slots.
  std::size_t size() const { return tokens_.size() + 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Stable 64-bit digest of the token -> index table.
  std::uint64_t fingerprint() const;

  std::string to_json() const;
  static Vocabulary from_json(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::int32_t, std::less<>> index_;
};

using EncodedSequence = std::vector<std::int32_t>;

/// The shipped 179-word English list.
const StopwordSet& default_stopwords();
/// Hex FNV-1a digest over the shipped list, one word per line.
std::string default_stopwords_checksum();
StopwordSet load_stopwords(const std::filesystem::path& path);

std::string clean_text(std::string_view raw);
std::vector<std::string> tokenize(std::string_view cleaned);
std::vector<std::string> remove_stopwords(std::span<const std::string> tokens, const StopwordSet& stopwords);

/// Porter (1980) suffix stripping, steps 1a through 5b.
std::string stem(std::string_view token);

/// clean -> tokenize -> remove stopwords -> stem (if enabled).
std::vector<std::string> preprocess_tokens(std::string_view raw, const PreprocessConfig& config);

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, const PreprocessConfig& config);
std::vector<std::int32_t> encode(std::span<const std::string> tokens, const Vocabulary& vocab);
EncodedSequence pad(std::span<const std::int32_t> indices, std::size_t length, PadMode mode);

/// Full path from raw text to a padded sequence.
EncodedSequence encode_text(std::string_view raw, const Vocabulary& vocab, const PreprocessConfig& config);

}  // namespace covidmis::textprep
