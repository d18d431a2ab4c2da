#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fskv {

enum class ErrorKind {
  kSchema,
  kAnnotation,
  kInput,
  kParse,
  kValidation,
  kMask,
  kSampling,
  kGeneration,
  kSplit,
  kNumeric,
  kEpisode,
  kConfig,
  kCheckpointVersion,
  kCheckpointCorrupt,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

// Process exit code used by the CLI for each category.
int error_exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fskv
