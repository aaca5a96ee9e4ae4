#include "covidmis/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "covidmis/error.hpp"
#include "covidmis/io.hpp"

namespace covidmis::textprep {

using nlohmann::json;

namespace {

// Shipped list, in file order (data/stopwords_en.txt).
constexpr const char* kStopwords[] = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had",
    "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because",
    "as", "until", "while", "of", "at", "by", "for", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "above", "below", "to", "from", "up", "down", "in",
    "out", "on", "off", "over", "under", "again", "further", "then", "once", "here", "there",
    "when", "where", "why", "how", "all", "any", "both", "each", "few", "more", "most", "other",
    "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s",
    "t", "can", "will", "just", "don", "don't", "should", "should've", "now", "d", "ll", "m", "o",
    "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn", "didn't", "doesn",
    "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn", "isn't", "ma",
    "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't", "shouldn",
    "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn", "wouldn't",
};

bool icase_prefix(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[i])) != prefix[i]) return false;
  }
  return true;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Length of a URL-like run starting at text[i], or 0.
std::size_t url_run(std::string_view text, std::size_t i) {
  std::string_view rest = text.substr(i);
  std::size_t start = 0;
  if (icase_prefix(rest, "https://")) {
    start = 8;
  } else if (icase_prefix(rest, "http://")) {
    start = 7;
  } else if (icase_prefix(rest, "t.co/")) {
    if (i > 0 && std::isalnum(static_cast<unsigned char>(text[i - 1]))) return 0;
    start = 5;
  } else {
    return 0;
  }
  std::size_t end = start;
  while (end < rest.size() && !is_space(rest[end])) ++end;
  return end;
}

}  // namespace

std::string_view to_string(PadMode mode) { return mode == PadMode::pre ? "pre" : "post"; }

PadMode parse_pad_mode(std::string_view text) {
  if (text == "pre") return PadMode::pre;
  if (text == "post") return PadMode::post;
  throw std::invalid_argument("pad mode must be 'pre' or 'post', got '" + std::string(text) + "'");
}

void PreprocessConfig::validate() const {
  if (max_sequence_length < 1) throw std::invalid_argument("max_sequence_length must be >= 1");
  if (min_token_frequency < 1) throw std::invalid_argument("min_token_frequency must be >= 1");
  if (max_vocab_size != 0 && max_vocab_size < 3) {
    throw std::invalid_argument("max_vocab_size must be 0 (unlimited) or >= 3");
  }
}

Vocabulary::Vocabulary(std::span<const std::string> ranked_tokens)
    : tokens_(ranked_tokens.begin(), ranked_tokens.end()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i + 2)).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

std::int32_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kOov : it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = io::fnv1a64("covidmis-vocab-v1\n");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    h = io::fnv1a64(tokens_[i], h);
    h = io::fnv1a64("\t" + std::to_string(i + 2) + "\n", h);
  }
  return h;
}

std::string Vocabulary::to_json() const {
  json doc;
  doc["schema_version"] = 1;
  doc["reserved"] = {{"pad", kPad}, {"oov", kOov}};
  doc["size"] = size();
  doc["fingerprint"] = io::hex64(fingerprint());
  json map = json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) map[tokens_[i]] = i + 2;
  doc["tokens"] = std::move(map);
  return doc.dump(1) + "\n";
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (!doc.is_object() || !doc.contains("tokens") || !doc["tokens"].is_object() || !doc.contains("reserved")) {
    throw DataError("vocabulary: malformed document");
  }
  if (doc["reserved"].value("pad", -1) != kPad || doc["reserved"].value("oov", -1) != kOov) {
    throw DataError("vocabulary: unexpected reserved indices");
  }
  const auto& map = doc["tokens"];
  std::vector<std::string> ranked(map.size());
  for (auto it = map.begin(); it != map.end(); ++it) {
    if (!it->is_number_integer()) throw DataError("vocabulary: non-integer index for " + it.key());
    const auto idx = it->get<std::int64_t>();
    if (idx < 2 || idx >= static_cast<std::int64_t>(map.size()) + 2 || !ranked[idx - 2].empty()) {
      throw DataError("vocabulary: indices are not contiguous from 2");
    }
    ranked[idx - 2] = it.key();
  }
  Vocabulary vocab(ranked);
  if (doc.contains("size") && doc["size"] != vocab.size()) throw DataError("vocabulary: size field mismatch");
  if (doc.contains("fingerprint") && doc["fingerprint"] != io::hex64(vocab.fingerprint())) {
    throw DataError("vocabulary: fingerprint mismatch");
  }
  return vocab;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet set(std::begin(kStopwords), std::end(kStopwords));
  return set;
}

std::string default_stopwords_checksum() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* w : kStopwords) {
    h = io::fnv1a64(w, h);
    h = io::fnv1a64("\n", h);
  }
  return io::hex64(h);
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  StopwordSet set;
  for (const auto& line : io::read_lines(path)) {
    std::string word;
    for (char c : line) {
      if (!is_space(c)) word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (!word.empty()) set.insert(std::move(word));
  }
  return set;
}

std::string clean_text(std::string_view raw) {
  std::string no_urls;
  no_urls.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    if (const std::size_t n = url_run(raw, i); n > 0) {
      i += n;
    } else {
      no_urls += raw[i++];
    }
  }

  std::string out;
  out.reserve(no_urls.size());
  bool pending_space = false;
  for (char ch : no_urls) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (c >= 'a' && c <= 'z') {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += c;
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view cleaned) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    const std::size_t end = std::min(cleaned.find(' ', i), cleaned.size());
    if (end > i) tokens.emplace_back(cleaned.substr(i, end - i));
    i = end + 1;
  }
  return tokens;
}

std::vector<std::string> remove_stopwords(std::span<const std::string> tokens, const StopwordSet& stopwords) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (!stopwords.contains(t)) out.push_back(t);
  }
  return out;
}

std::vector<std::string> preprocess_tokens(std::string_view raw, const PreprocessConfig& config) {
  auto tokens = remove_stopwords(tokenize(clean_text(raw)), config.stopwords);
  if (config.stem) {
    for (auto& t : tokens) t = stem(t);
  }
  return tokens;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, const PreprocessConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: corpus is empty");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& doc : corpus) {
    for (const auto& t : doc) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, n] : freq) {
    if (n >= config.min_token_frequency) ranked.emplace_back(token, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (config.max_vocab_size != 0 && ranked.size() + 2 > config.max_vocab_size) {
    ranked.resize(config.max_vocab_size - 2);
  }
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [token, n] : ranked) tokens.push_back(std::move(token));
  return Vocabulary(tokens);
}

std::vector<std::int32_t> encode(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.lookup(t));
  return out;
}

EncodedSequence pad(std::span<const std::int32_t> indices, std::size_t length, PadMode mode) {
  if (length < 1) throw std::invalid_argument("pad: length must be >= 1");
  EncodedSequence out(length, Vocabulary::kPad);
  const std::size_t n = std::min(indices.size(), length);
  if (mode == PadMode::pre) {
    std::copy(indices.end() - static_cast<std::ptrdiff_t>(n), indices.end(), out.end() - static_cast<std::ptrdiff_t>(n));
  } else {
    std::copy(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n), out.begin());
  }
  return out;
}

EncodedSequence encode_text(std::string_view raw, const Vocabulary& vocab, const PreprocessConfig& config) {
  const auto tokens = preprocess_tokens(raw, config);
  const auto ids = encode(tokens, vocab);
  return pad(ids, config.max_sequence_length, config.pad_mode);
}

}  // namespace covidmis::textprep
