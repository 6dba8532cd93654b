#pragma once

#include <stdexcept>
#include <string>

namespace spikes4 {

enum class ErrorKind {
  dimension,
  config,
  input,
  numerical,
  contract,
  format,
  io,
  training,
};

const char* to_string(ErrorKind kind);

/// Base for every error raised by the toolkit. The kind selects the CLI exit
/// code, so callers rarely need the concrete subclass.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SPIKES4_DEFINE_ERROR(Name, Kind)                          \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

SPIKES4_DEFINE_ERROR(DimensionError, ErrorKind::dimension)
SPIKES4_DEFINE_ERROR(ConfigError, ErrorKind::config)
SPIKES4_DEFINE_ERROR(InputError, ErrorKind::input)
SPIKES4_DEFINE_ERROR(NumericalError, ErrorKind::numerical)
SPIKES4_DEFINE_ERROR(ContractError, ErrorKind::contract)
SPIKES4_DEFINE_ERROR(FormatError, ErrorKind::format)
SPIKES4_DEFINE_ERROR(IoError, ErrorKind::io)
SPIKES4_DEFINE_ERROR(TrainingError, ErrorKind::training)

#undef SPIKES4_DEFINE_ERROR

}  // namespace spikes4
