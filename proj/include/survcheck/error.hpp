#pragma once

#include <stdexcept>
#include <string>

namespace survcheck {

// All library failures derive from Error. `code` is a short machine-readable
// tag used by the CLI when it reports failures as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

inline void require(bool cond, const char* code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace survcheck
