#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rulesynth {

enum class ErrorCode {
  UnbalancedDelimiter,
  MalformedHole,
  EmptyPattern,
  AllHolesPattern,
  UnboundHole,
  ParseError,
  DuplicateRuleName,
  DanglingEdge,
  NoSeedRule,
  RewriteBudgetExceeded,
  RunnerNotFound,
  CoverageArtifactMissing,
  ClientError,
  RetryBudgetExhausted,
  ProtocolError,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the toolkit carries a machine-readable code so
/// that callers (the agent's hint lookup, the CLI exit-code mapping) can
/// dispatch on it without parsing messages.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string message, std::string detail = {},
        std::optional<std::size_t> position = std::nullopt)
      : std::runtime_error(std::move(message)),
        code_(code),
        detail_(std::move(detail)),
        position_(position) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  /// Short subject of the error, e.g. the hole name for UnboundHole.
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }
  /// Byte offset for positional errors (UnbalancedDelimiter, MalformedHole).
  [[nodiscard]] std::optional<std::size_t> position() const noexcept { return position_; }

private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> position_;
};

}  // namespace rulesynth
