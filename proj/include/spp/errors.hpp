#pragma once

#include <stdexcept>
#include <string>

namespace spp {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSizeError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class GenerationFailure : public Error {
 public:
  GenerationFailure(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class NotUndirectedError : public Error {
 public:
  using Error::Error;
};

class StructureError : public Error {
 public:
  using Error::Error;
};

// A graph or weight-matrix assumption does not hold for the given input.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DecayUncertifiable : public Error {
 public:
  using Error::Error;
};

class TruncationFailure : public Error {
 public:
  TruncationFailure(const std::string& what, int terms)
      : Error(what), terms_(terms) {}
  int terms() const noexcept { return terms_; }

 private:
  int terms_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace spp
