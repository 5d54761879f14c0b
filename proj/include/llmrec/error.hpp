#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace llmrec {

enum class Errc {
  MissingFile,
  MalformedRow,
  DanglingReference,
  EmptyDataset,
  ProviderUnavailable,
  GenerationFailed,
  IoError,
  NoNumberFound,
  OutOfRange,
  TransportError,
  NoRatings,
  InvalidRange,
  EmptyProfile,
  InvalidSpec,
  NoCandidates,
  MissingUser,
  EmptyFilteredSet,
  KeyMismatch,
  UsageError,
  ConfigError,
  NotFound,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MissingFile: return "MissingFile";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::GenerationFailed: return "GenerationFailed";
    case Errc::IoError: return "IoError";
    case Errc::NoNumberFound: return "NoNumberFound";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::TransportError: return "TransportError";
    case Errc::NoRatings: return "NoRatings";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::EmptyProfile: return "EmptyProfile";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::NoCandidates: return "NoCandidates";
    case Errc::MissingUser: return "MissingUser";
    case Errc::EmptyFilteredSet: return "EmptyFilteredSet";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::UsageError: return "UsageError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::NotFound: return "NotFound";
  }
  return "Unknown";
}

/// Every failure raised by the library. `module()` names the component that
/// raised it so the CLI can report the origin.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string module, const std::string& message)
      : std::runtime_error(message), code_(code), module_(std::move(module)) {}

  Errc code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  Errc code_;
  std::string module_;
};

}  // namespace llmrec
