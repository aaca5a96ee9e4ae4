#pragma once

#include <map>
#include <string>
#include <vector>

namespace covidmis::testing {

struct KeywordCase {
  std::string text;
  std::vector<std::string> keywords;
  std::map<std::string, std::size_t> expected;  // counted by hand
};

inline const std::vector<std::string>& default_crawl_keywords() {
  static const std::vector<std::string> k{"sars-cov-2", "covid-19", "coronavirus", "virus"};
  return k;
}

inline std::vector<KeywordCase> keyword_cases() {
  const auto& d = default_crawl_keywords();
  return {
      {"COVID-19 and covid-19.", d, {{"sars-cov-2", 0}, {"covid-19", 2}, {"coronavirus", 0}, {"virus", 0}}},
      {"The coronavirus (Coronavirus) is a virus.", d,
       {{"sars-cov-2", 0}, {"covid-19", 0}, {"coronavirus", 2}, {"virus", 1}}},
      {"SARS-CoV-2 causes COVID-19; sars-cov-2 spreads.", d,
       {{"sars-cov-2", 2}, {"covid-19", 1}, {"coronavirus", 0}, {"virus", 0}}},
      {"antivirus viruses virusy covid-190 xcovid-19 2virus", d,
       {{"sars-cov-2", 0}, {"covid-19", 0}, {"coronavirus", 0}, {"virus", 0}}},
      {"virus-free, virus.", d, {{"sars-cov-2", 0}, {"covid-19", 0}, {"coronavirus", 0}, {"virus", 2}}},
      // covid-19 | covid | covid-19x rejected, covid accepted | covid before '-'
      {"covid-19 covid covid-19x covid-", {"covid", "covid-19", "virus"}, {{"covid", 3}, {"covid-19", 1}, {"virus", 0}}},
      {"SARS-CoV-2 sars SARS-CoV", {"sars", "sars-cov-2"}, {{"sars", 2}, {"sars-cov-2", 1}}},
      {"", d, {{"sars-cov-2", 0}, {"covid-19", 0}, {"coronavirus", 0}, {"virus", 0}}},
      // Non-ASCII bytes count as word characters.
      {"virus\xc3\xa9 \xc3\xa9virus virus", d, {{"sars-cov-2", 0}, {"covid-19", 0}, {"coronavirus", 0}, {"virus", 1}}},
      {"Coronavirus\nCORONAVIRUS\tcoronaVirus virus virus", d,
       {{"sars-cov-2", 0}, {"covid-19", 0}, {"coronavirus", 3}, {"virus", 2}}},
  };
}

}  // namespace covidmis::testing
