#include "fskv/error.hpp"

namespace fskv {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kAnnotation: return "annotation error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kMask: return "mask error";
    case ErrorKind::kSampling: return "sampling error";
    case ErrorKind::kGeneration: return "generation error";
    case ErrorKind::kSplit: return "split error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kEpisode: return "episode error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kCheckpointVersion: return "checkpoint version error";
    case ErrorKind::kCheckpointCorrupt: return "corrupt checkpoint";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

int error_exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return 3;
    case ErrorKind::kParse:
    case ErrorKind::kValidation:
    case ErrorKind::kSchema:
    case ErrorKind::kAnnotation:
    case ErrorKind::kInput: return 4;
    case ErrorKind::kConfig: return 5;
    case ErrorKind::kSampling:
    case ErrorKind::kMask:
    case ErrorKind::kEpisode:
    case ErrorKind::kSplit:
    case ErrorKind::kGeneration: return 6;
    case ErrorKind::kNumeric: return 7;
    case ErrorKind::kCheckpointVersion:
    case ErrorKind::kCheckpointCorrupt: return 8;
  }
  return 1;
}

}  // namespace fskv
