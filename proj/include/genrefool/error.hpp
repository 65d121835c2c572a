#pragma once

#include <stdexcept>
#include <string>

namespace genrefool {

// Base for every failure the toolkit raises on bad input or a broken
// collaborator. Precondition violations on internal calls use assert().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class VictimError : public Error {
 public:
  VictimError(const std::string& what, std::string raw = {})
      : Error(raw.empty() ? what : what + ": " + raw), raw_(std::move(raw)) {}

  // Raw reply from an external victim, if any.
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace genrefool
