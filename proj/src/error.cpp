#include "earco/error.hpp"

namespace earco {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kDuplicate: return "duplicate error";
    case ErrorCode::kPrecondition: return "precondition error";
    case ErrorCode::kEmptyCorpus: return "empty-corpus error";
    case ErrorCode::kTransport: return "transport error";
    case ErrorCode::kRemote: return "remote error";
    case ErrorCode::kProtocol: return "protocol error";
    case ErrorCode::kUnmatchedRequest: return "unmatched-request error";
    case ErrorCode::kDimensionMismatch: return "dimension error";
    case ErrorCode::kEmptyIndex: return "empty-index error";
    case ErrorCode::kCorruptFile: return "corrupt-file error";
    case ErrorCode::kVersionMismatch: return "version-mismatch error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kInsufficientData: return "insufficient-data error";
    case ErrorCode::kMutationParse: return "mutation-parse error";
    case ErrorCode::kSynthesize: return "synthesize error";
    case ErrorCode::kOptimization: return "optimization error";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kAssembly: return "assembly error";
    case ErrorCode::kRetrieval: return "retrieval error";
    case ErrorCode::kEmptyOutput: return "empty-output error";
    case ErrorCode::kJudgeParse: return "judge-parse error";
    case ErrorCode::kAggregation: return "aggregation error";
    case ErrorCode::kLookup: return "lookup error";
    case ErrorCode::kStageAblation: return "stage-ablation error";
    case ErrorCode::kConfig: return "config error";
  }
  return "error";
}

}  // namespace earco
