#pragma once

#include <stdexcept>
#include <string>

namespace farfield {

// Precondition violations (bad shapes, out-of-range arguments) use
// std::domain_error directly. The types below cover the remaining failure
// classes so callers can tell them apart.

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CodecError : public std::runtime_error {
 public:
  CodecError(int channel, const std::string& what)
      : std::runtime_error("channel " + std::to_string(channel) + ": " + what),
        channel_(channel) {}
  int channel() const { return channel_; }

 private:
  int channel_;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace farfield
