#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace panelcrypt {

// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating input file. Carries the offending location.
class LoadError : public Error {
 public:
  LoadError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Caller passed arguments outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Design matrix without full column rank.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::vector<std::string> columns)
      : Error(what), columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

// Iterative solver hit its iteration cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace panelcrypt
