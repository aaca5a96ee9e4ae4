#pragma once

#include <stdexcept>
#include <string>

namespace covidmis {

// Bad flags, bad config values, missing or unreadable input paths.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed invocation but unusable data: single-class corpus, empty test
// split, vocabulary mismatch, too few examples for k folds.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace covidmis
