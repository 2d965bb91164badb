#pragma once

#include <stdexcept>
#include <string>

namespace apa {

// Every failure raised by the library carries a short machine-readable code
// ("parse", "unknown_item", ...) next to the human-readable message. The CLI
// forwards both in its stderr error object.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace apa
