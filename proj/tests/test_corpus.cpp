#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "covidmis/corpus.hpp"
#include "covidmis/error.hpp"
#include "covidmis/io.hpp"
#include "support/tempdir.hpp"

using namespace covidmis;
using namespace covidmis::corpus;

namespace {

LabeledExample ex(std::string text, ClassLabel label) {
  LabeledExample e;
  e.text = std::move(text);
  e.label = label;
  e.source_url = "https://x.org/" + e.text;
  e.domain = "x.org";
  return e;
}

std::vector<LabeledExample> make_examples(std::size_t fake, std::size_t real) {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < fake; ++i) out.push_back(ex("fake " + std::to_string(i), ClassLabel::fake));
  for (std::size_t i = 0; i < real; ++i) out.push_back(ex("real " + std::to_string(i), ClassLabel::real));
  return out;
}

TweetRecord tweet(std::string id, std::string text, std::vector<std::string> urls = {}) {
  TweetRecord t;
  t.id = std::move(id);
  t.text = std::move(text);
  t.urls = std::move(urls);
  t.timestamp = *parse_timestamp("2020-03-15T12:00:00Z");
  return t;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("domain normalization") {
  CHECK(normalize_domain("https://www.CDC.gov/coronavirus/2019") == "cdc.gov");
  CHECK(normalize_domain("http://user:pw@News.Example.com:8080/x?y#z") == "news.example.com");
  CHECK(normalize_domain("HTTPS://example.org.") == "example.org");
  CHECK(normalize_domain("https://127.0.0.1:9000/") == "127.0.0.1");
  CHECK_FALSE(normalize_domain("ftp://example.org").has_value());
  CHECK_FALSE(normalize_domain("https:///nohost").has_value());
  CHECK_FALSE(normalize_domain("not a url").has_value());
}

TEST_CASE("normalized domains are fixed points") {
  for (const char* url : {"https://www.a.com/x", "http://B.org", "https://sub.C.net:443/p"}) {
    const auto d = normalize_domain(url);
    REQUIRE(d.has_value());
    CHECK(normalize_domain("https://" + *d) == *d);
  }
}

TEST_CASE("url extraction from text") {
  const auto urls = extract_urls("see https://a.com/x and HTTP://b.org, also http:// alone");
  REQUIRE(urls.size() == 2);
  CHECK(urls[0] == "https://a.com/x");
  CHECK(urls[1].rfind("HTTP://b.org", 0) == 0);
  CHECK(extract_urls("no links here").empty());
}

TEST_CASE("trust list rejects conflicting labels") {
  DomainTrustList list;
  list.add("www.a.com", TrustLabel::trustworthy);
  list.add("A.com", TrustLabel::trustworthy);
  CHECK(list.size() == 1);
  CHECK_THROWS_AS(list.add("a.com", TrustLabel::untrustworthy), DataError);
  CHECK(list.lookup("a.com") == TrustLabel::trustworthy);
  CHECK_FALSE(list.lookup("b.com").has_value());
}

TEST_CASE("trust list file") {
  testing::TempDir dir;
  io::write_file_atomic(dir / "t.csv", "domain,label\nwww.good.org,trustworthy\nbad.net,untrustworthy\n\n");
  const auto list = load_trust_list(dir / "t.csv");
  CHECK(list.size() == 2);
  CHECK(list.lookup("good.org") == TrustLabel::trustworthy);

  io::write_file_atomic(dir / "bad.csv", "domain,label\nx.org,maybe\n");
  CHECK_THROWS_AS(load_trust_list(dir / "bad.csv"), DataError);
  io::write_file_atomic(dir / "nohdr.csv", "x.org,trustworthy\n");
  CHECK_THROWS_AS(load_trust_list(dir / "nohdr.csv"), DataError);
}

TEST_CASE("tweet lines: validation and skipping") {
  CHECK(parse_tweet_line(R"({"id":"1","text":"hi","timestamp":"2020-03-01T00:00:00Z"})").has_value());
  CHECK(parse_tweet_line(R"({"id":12,"text":"hi","timestamp":1583020800})").has_value());
  CHECK_FALSE(parse_tweet_line(R"({"id":"","text":"hi","timestamp":"2020-03-01"})").has_value());
  CHECK_FALSE(parse_tweet_line(R"({"id":"1","text":"hi","timestamp":"yesterday"})").has_value());
  CHECK_FALSE(parse_tweet_line(R"({"id":"1","text":"hi","timestamp":"2020-03-01","likes":-1})").has_value());
  CHECK_FALSE(parse_tweet_line(R"({"id":"1","text":"hi","timestamp":"2020-03-01","urls":[3]})").has_value());
  CHECK_FALSE(parse_tweet_line("{not json").has_value());

  testing::TempDir dir;
  io::write_file_atomic(dir / "t.jsonl",
                        "{\"id\":\"1\",\"text\":\"a\",\"timestamp\":\"2020-03-01\"}\n"
                        "garbage\n"
                        "{\"id\":\"1\",\"text\":\"dup\",\"timestamp\":\"2020-03-01\"}\n"
                        "{\"id\":\"2\",\"text\":\"b\",\"timestamp\":\"2020-03-02\"}\n");
  const auto r = load_tweets(dir / "t.jsonl");
  CHECK(r.records.size() == 2);
  CHECK(r.skipped == 2);
}

TEST_CASE("timestamps") {
  const auto a = parse_timestamp("2020-03-01T10:00:00+02:00");
  const auto b = parse_timestamp("2020-03-01T08:00:00Z");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(*a == *b);
  CHECK(format_timestamp(*b) == "2020-03-01T08:00:00Z");
  CHECK(parse_timestamp("2020-03-01").has_value());
}

TEST_CASE("keyword and date filters") {
  std::vector<TweetRecord> tweets{tweet("1", "Stay at home please"), tweet("2", "nice weather"),
                                  tweet("3", "COVID-19 update")};
  const auto kept = filter_by_keywords(tweets, default_search_keywords());
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].id == "1");
  CHECK(kept[1].id == "3");
  const std::vector<std::string> none;
  CHECK_THROWS_AS(filter_by_keywords(tweets, none), std::invalid_argument);

  DateBounds bounds;
  bounds.from = parse_timestamp("2020-03-16");
  CHECK(filter_by_date(tweets, bounds).empty());
  bounds.from = parse_timestamp("2020-03-15");
  bounds.to = parse_timestamp("2020-03-15T12:00:00Z");
  CHECK(filter_by_date(tweets, bounds).size() == 3);
}

TEST_CASE("labeling through the trust list") {
  DomainTrustList trust;
  trust.add("good.org", TrustLabel::trustworthy);
  trust.add("bad.net", TrustLabel::untrustworthy);
  std::vector<TweetRecord> tweets{
      tweet("1", "read https://www.good.org/a"),
      tweet("2", "fake https://bad.net/b", {"https://bad.net/b"}),
      tweet("3", "mixed", {"https://good.org/x", "https://bad.net/y"}),
      tweet("4", "nothing https://other.com/"),
      tweet("5", "two links", {"https://good.org/1", "https://good.org/2"}),
  };
  LabelStats stats;
  const auto out = label_tweets(tweets, trust, &stats);
  CHECK(stats.tweets == 5);
  CHECK(stats.conflicts == 1);
  CHECK(stats.unmatched == 1);
  REQUIRE(out.size() == 4);
  CHECK(out[0].label == ClassLabel::real);
  CHECK(out[0].domain == "good.org");
  CHECK(out[1].label == ClassLabel::fake);
  CHECK(out[1].source_url == "https://bad.net/b");
  CHECK(out[2].source_url == "https://good.org/1");
  CHECK(out[3].source_url == "https://good.org/2");
}

TEST_CASE("dedup keeps first (text, label)") {
  std::vector<LabeledExample> in{ex("a", ClassLabel::fake), ex("a", ClassLabel::fake), ex("a", ClassLabel::real)};
  CHECK(dedup_examples(in).size() == 2);
}

TEST_CASE("balance_downsample equalizes classes and keeps order") {
  const auto in = make_examples(30, 7);
  const auto out = balance_downsample(in, 5);
  const auto fakes = std::count_if(out.begin(), out.end(), [](auto& e) { return e.label == ClassLabel::fake; });
  CHECK(fakes == 7);
  CHECK(out.size() == 14);
  // order preserved: positions in the input are increasing
  std::size_t last = 0;
  for (const auto& e : out) {
    const auto pos = static_cast<std::size_t>(std::find(in.begin(), in.end(), e) - in.begin());
    CHECK(pos >= last);
    last = pos;
  }
  CHECK(balance_downsample(in, 5) == out);
  CHECK_THROWS_AS(balance_downsample(make_examples(3, 0), 1), DataError);
}

TEST_CASE("train/test split sizes and disjointness") {
  CHECK(train_size(579652, 0.7) == 405756);
  CHECK(579652 - train_size(579652, 0.7) == 173896);
  CHECK(train_size(10, 0.7) == 7);
  CHECK(train_size(5, 0.5) == 3);

  const auto in = make_examples(20, 13);
  const auto split = split_train_test(in, 0.7, 11);
  CHECK(split.train.size() == train_size(in.size(), 0.7));
  CHECK(split.train.size() + split.test.size() == in.size());
  std::set<std::string> seen;
  for (const auto& e : split.train) seen.insert(e.text);
  for (const auto& e : split.test) CHECK(seen.insert(e.text).second);
  CHECK(seen.size() == in.size());

  CHECK_THROWS_AS(split_train_test(in, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_train_test(in, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_train_test(make_examples(1, 0), 0.5, 1), DataError);
}

TEST_CASE("stratified k-fold balances every class across folds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t fake = 10 + seed * 3, real = 17 + seed;
    const auto in = make_examples(fake, real);
    for (std::size_t k : {2u, 3u, 5u, 10u}) {
      const auto folds = stratified_kfold(in, k, seed);
      REQUIRE(folds.fold_of.size() == in.size());
      std::map<std::pair<std::size_t, int>, std::size_t> counts;
      for (std::size_t i = 0; i < in.size(); ++i) {
        REQUIRE(folds.fold_of[i] < k);
        ++counts[{folds.fold_of[i], static_cast<int>(in[i].label)}];
      }
      for (int label : {0, 1}) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (std::size_t f = 0; f < k; ++f) {
          lo = std::min(lo, counts[{f, label}]);
          hi = std::max(hi, counts[{f, label}]);
        }
        CHECK(hi - lo <= 1);
      }
    }
  }
  const auto small = make_examples(3, 20);
  CHECK_THROWS_AS(stratified_kfold(small, 4, 1), DataError);
  CHECK_THROWS_AS(stratified_kfold(small, 1, 1), std::invalid_argument);
}

TEST_CASE("labeled corpus round trip") {
  testing::TempDir dir;
  const auto in = make_examples(3, 2);
  write_labeled(dir / "c.jsonl", in);
  CHECK(load_labeled(dir / "c.jsonl") == in);
  io::write_file_atomic(dir / "bad.jsonl", "{\"text\":\"x\",\"label\":7}\n");
  CHECK_THROWS_AS(load_labeled(dir / "bad.jsonl"), DataError);
}

}  // TEST_SUITE
