// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace viewshift {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two inputs disagree on a size. `axis()` names the offending dimension
/// ("width", "height", "frames", ...).
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& what)
      : Error(what), axis_(std::move(axis)) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

/// A value violates a documented precondition or type invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed trajectory / request / checkpoint text.
class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        field_(std::move(field)),
        line_(line) {}
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

/// Filesystem or codec failure. `index()` carries the frame index when the
/// failure concerns one element of a numbered sequence.
class IoError : public Error {
 public:
  IoError(const std::string& what, std::optional<int> index = std::nullopt)
      : Error(what), index_(index) {}
  std::optional<int> index() const { return index_; }

 private:
  std::optional<int> index_;
};

/// Training produced a non-finite loss.
class NumericError : public Error {
 public:
  NumericError(int step, const std::string& what) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace viewshift
