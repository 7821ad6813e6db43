#pragma once

#include <stdexcept>
#include <string>

namespace histctl {

// Base for every error raised by the library. The C API maps the concrete
// type onto an hc_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CommonSupportError : public Error {
 public:
  CommonSupportError(int stratum, const std::string& what)
      : Error(what), stratum_(stratum) {}
  int stratum() const noexcept { return stratum_; }

 private:
  int stratum_;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

// Raised by the pipeline; carries the failing stage (and stratum when known).
class StageError : public Error {
 public:
  StageError(std::string stage, int stratum, const std::string& what)
      : Error("[" + stage + (stratum > 0 ? " w=" + std::to_string(stratum) : "") +
              "] " + what),
        stage_(std::move(stage)),
        stratum_(stratum) {}
  const std::string& stage() const noexcept { return stage_; }
  int stratum() const noexcept { return stratum_; }

 private:
  std::string stage_;
  int stratum_;
};

}  // namespace histctl
