// Porter's 1980 suffix-stripping algorithm.
//
// Notation follows the original description: a word is [C](VC)^m[V], where C
// and V are maximal runs of consonants and vowels, and m is the "measure".
// 'y' is a vowel when it follows a consonant.

#include <array>
#include <string>
#include <string_view>

#include "covidmis/textprep.hpp"

namespace covidmis::textprep {

namespace {

class PorterWord {
 public:
  explicit PorterWord(std::string_view w) : b_(w) {}

  std::string take() && { return std::move(b_); }

  bool ends_with(std::string_view s) const { return std::string_view(b_).ends_with(s); }

  void replace_suffix(std::size_t suffix_len, std::string_view with) {
    b_.resize(b_.size() - suffix_len);
    b_ += with;
  }

  bool consonant(std::size_t i) const {
    switch (b_[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !consonant(i - 1);
      default:
        return true;
    }
  }

  // Measure of the prefix b_[0, len).
  int measure(std::size_t len) const {
    int m = 0;
    std::size_t i = 0;
    while (i < len && consonant(i)) ++i;
    while (i < len) {
      while (i < len && !consonant(i)) ++i;
      if (i >= len) break;
      while (i < len && consonant(i)) ++i;
      ++m;
    }
    return m;
  }

  bool has_vowel(std::size_t len) const {
    for (std::size_t i = 0; i < len; ++i) {
      if (!consonant(i)) return true;
    }
    return false;
  }

  // *d: prefix ends with a double consonant.
  bool double_consonant(std::size_t len) const {
    return len >= 2 && b_[len - 1] == b_[len - 2] && consonant(len - 1);
  }

  // *o: prefix ends consonant-vowel-consonant, final consonant not w, x or y.
  bool cvc(std::size_t len) const {
    if (len < 3 || !consonant(len - 1) || consonant(len - 2) || !consonant(len - 3)) return false;
    const char c = b_[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  std::size_t size() const { return b_.size(); }
  char at(std::size_t i) const { return b_[i]; }
  char back() const { return b_.back(); }

 private:
  std::string b_;
};

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
};

// Longest matching suffix wins; if its condition fails the step ends.
template <std::size_t N, typename Cond>
void apply_longest(PorterWord& w, const std::array<Rule, N>& rules, Cond cond) {
  const Rule* best = nullptr;
  for (const auto& r : rules) {
    if (w.ends_with(r.suffix) && (!best || r.suffix.size() > best->suffix.size())) best = &r;
  }
  if (best && cond(w.size() - best->suffix.size(), *best)) w.replace_suffix(best->suffix.size(), best->replacement);
}

void step1a(PorterWord& w) {
  if (w.ends_with("sses")) {
    w.replace_suffix(4, "ss");
  } else if (w.ends_with("ies")) {
    w.replace_suffix(3, "i");
  } else if (w.ends_with("ss")) {
  } else if (w.ends_with("s")) {
    w.replace_suffix(1, "");
  }
}

void step1b(PorterWord& w) {
  if (w.ends_with("eed")) {
    if (w.measure(w.size() - 3) > 0) w.replace_suffix(1, "");
    return;
  }
  std::size_t cut = 0;
  if (w.ends_with("ed") && w.has_vowel(w.size() - 2)) {
    cut = 2;
  } else if (w.ends_with("ing") && w.has_vowel(w.size() - 3)) {
    cut = 3;
  }
  if (cut == 0) return;
  w.replace_suffix(cut, "");

  if (w.ends_with("at") || w.ends_with("bl") || w.ends_with("iz")) {
    w.replace_suffix(0, "e");
  } else if (w.double_consonant(w.size()) && w.back() != 'l' && w.back() != 's' && w.back() != 'z') {
    w.replace_suffix(1, "");
  } else if (w.measure(w.size()) == 1 && w.cvc(w.size())) {
    w.replace_suffix(0, "e");
  }
}

void step1c(PorterWord& w) {
  if (w.ends_with("y") && w.has_vowel(w.size() - 1)) w.replace_suffix(1, "i");
}

void step2(PorterWord& w) {
  static constexpr std::array<Rule, 20> rules{{
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},   {"izer", "ize"},
      {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},       {"ousli", "ous"},
      {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
      {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
  }};
  apply_longest(w, rules, [&](std::size_t stem_len, const Rule&) { return w.measure(stem_len) > 0; });
}

void step3(PorterWord& w) {
  static constexpr std::array<Rule, 7> rules{{
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""}, {"ness", ""},
  }};
  apply_longest(w, rules, [&](std::size_t stem_len, const Rule&) { return w.measure(stem_len) > 0; });
}

void step4(PorterWord& w) {
  static constexpr std::array<Rule, 19> rules{{
      {"al", ""},  {"ance", ""}, {"ence", ""}, {"er", ""},  {"ic", ""},  {"able", ""}, {"ible", ""},
      {"ant", ""}, {"ement", ""}, {"ment", ""}, {"ent", ""}, {"ion", ""}, {"ou", ""},   {"ism", ""},
      {"ate", ""}, {"iti", ""},  {"ous", ""},  {"ive", ""}, {"ize", ""},
  }};
  apply_longest(w, rules, [&](std::size_t stem_len, const Rule& r) {
    if (w.measure(stem_len) <= 1) return false;
    if (r.suffix == "ion") return stem_len > 0 && (w.at(stem_len - 1) == 's' || w.at(stem_len - 1) == 't');
    return true;
  });
}

void step5a(PorterWord& w) {
  if (!w.ends_with("e")) return;
  const std::size_t stem_len = w.size() - 1;
  const int m = w.measure(stem_len);
  if (m > 1 || (m == 1 && !w.cvc(stem_len))) w.replace_suffix(1, "");
}

void step5b(PorterWord& w) {
  if (w.measure(w.size()) > 1 && w.double_consonant(w.size()) && w.back() == 'l') w.replace_suffix(1, "");
}

}  // namespace

std::string stem(std::string_view token) {
  if (token.size() <= 2) return std::string(token);
  PorterWord w(token);
  step1a(w);
  step1b(w);
  step1c(w);
  step2(w);
  step3(w);
  step4(w);
  step5a(w);
  step5b(w);
  return std::move(w).take();
}

}  // namespace covidmis::textprep
