#pragma once

#include <stdexcept>
#include <string>

namespace quantifair {

// Coarse categories aligned with the CLI exit codes: config errors exit 1,
// data errors exit 2, runtime errors exit 3.
enum class ErrorKind { config, data, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message),
        kind_(kind),
        code_(std::move(code)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void throw_config(const std::string& code, const std::string& msg) {
  throw Error(ErrorKind::config, code, msg);
}
[[noreturn]] inline void throw_data(const std::string& code, const std::string& msg) {
  throw Error(ErrorKind::data, code, msg);
}
[[noreturn]] inline void throw_runtime(const std::string& code, const std::string& msg) {
  throw Error(ErrorKind::runtime, code, msg);
}

}  // namespace quantifair
