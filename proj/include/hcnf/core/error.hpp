#pragma once

#include <stdexcept>
#include <string>

namespace hcnf {

// Raised when a caller violates an operation's documented precondition
// (shape mismatch, out-of-range argument, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input file. `where` names the line, byte offset or element.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HCNF_REQUIRE(cond, msg)                                   \
  do {                                                            \
    if (!(cond)) throw ::hcnf::ContractError(std::string(msg));   \
  } while (0)

}  // namespace hcnf
