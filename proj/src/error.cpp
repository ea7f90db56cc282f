#include "rcalad/error.hpp"

namespace rcalad {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape: return "shape";
    case ErrorCode::config: return "config";
    case ErrorCode::contract: return "contract";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::degenerate_batch: return "degenerate_batch";
    case ErrorCode::ingestion: return "ingestion";
    case ErrorCode::unavailable_score: return "unavailable_score";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::io: return "io";
    case ErrorCode::checkpoint_version: return "checkpoint_version";
    case ErrorCode::checkpoint_corrupt: return "checkpoint_corrupt";
  }
  return "unknown";
}

} // namespace rcalad
