#pragma once

#include <stdexcept>
#include <string>

namespace bpe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad space definitions, out-of-range configs, bad genotype text.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Spearman is undefined when either side has no distinct pair.
class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

class EvaluatorError : public Error {
 public:
  using Error::Error;
};

// Run directory missing, unreadable, or inconsistent.
class ArchiveError : public Error {
 public:
  using Error::Error;
};

}  // namespace bpe
