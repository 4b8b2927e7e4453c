#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatcher {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the CLI reports for it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual int exit_code() const noexcept = 0;
};

/// Bad parameters, unparsable text files, degenerate cameras.
class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 1; }
};

/// A config-style text file that failed to parse at a given line.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ConfigError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class IoErrc {
  missing_file,
  bad_magic,
  version_mismatch,
  truncated_header,
  truncated_payload,
  bad_record,
  read_failure,
  write_failure,
};

inline const char* to_string(IoErrc c) noexcept {
  switch (c) {
    case IoErrc::missing_file: return "missing file";
    case IoErrc::bad_magic: return "bad magic";
    case IoErrc::version_mismatch: return "version mismatch";
    case IoErrc::truncated_header: return "truncated header";
    case IoErrc::truncated_payload: return "truncated payload";
    case IoErrc::bad_record: return "bad record";
    case IoErrc::read_failure: return "read failure";
    case IoErrc::write_failure: return "write failure";
  }
  return "unknown";
}

/// File-system or dataset-content failure.
class IoError : public Error {
 public:
  IoError(IoErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] IoErrc code() const noexcept { return code_; }
  [[nodiscard]] int exit_code() const noexcept override { return 2; }

 private:
  IoErrc code_;
};

/// A broken internal contract (e.g. a double free caught in strict mode).
class InvariantError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

}  // namespace splatcher
