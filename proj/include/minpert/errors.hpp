// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace minpert {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

class RankDeficientError : public Error {
 public:
  explicit RankDeficientError(const std::string& what) : Error(what) {}
};

class ZeroMatrixError : public Error {
 public:
  explicit ZeroMatrixError(const std::string& what) : Error(what) {}
};

/// Raised by the problem-file parser; carries the offending position
/// (1-based line and column).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class UnknownBuiltinError : public Error {
 public:
  explicit UnknownBuiltinError(const std::string& what) : Error(what) {}
};

class NoConvergenceError : public Error {
 public:
  explicit NoConvergenceError(const std::string& what) : Error(what) {}
};

class NoFeasiblePointError : public Error {
 public:
  explicit NoFeasiblePointError(const std::string& what) : Error(what) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what) : Error(what) {}
};

}  // namespace minpert
