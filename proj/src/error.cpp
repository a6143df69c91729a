#include "rulesynth/error.hpp"

namespace rulesynth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnbalancedDelimiter: return "UnbalancedDelimiter";
    case ErrorCode::MalformedHole: return "MalformedHole";
    case ErrorCode::EmptyPattern: return "EmptyPattern";
    case ErrorCode::AllHolesPattern: return "AllHolesPattern";
    case ErrorCode::UnboundHole: return "UnboundHole";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateRuleName: return "DuplicateRuleName";
    case ErrorCode::DanglingEdge: return "DanglingEdge";
    case ErrorCode::NoSeedRule: return "NoSeedRule";
    case ErrorCode::RewriteBudgetExceeded: return "RewriteBudgetExceeded";
    case ErrorCode::RunnerNotFound: return "RunnerNotFound";
    case ErrorCode::CoverageArtifactMissing: return "CoverageArtifactMissing";
    case ErrorCode::ClientError: return "ClientError";
    case ErrorCode::RetryBudgetExhausted: return "RetryBudgetExhausted";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace rulesynth
