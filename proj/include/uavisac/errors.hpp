#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uavisac {

enum class ErrorKind {
  AngleNearPi,
  NotPSD,
  DegenerateRange,
  ShapeMismatch,
  PolarSingularity,
  AzimuthSingularity,
  SingularInnovation,
  IllConditioned,
  SchurViolation,
  Infeasible,
  MaxIterations,
  NoFeasibleSample,
  EpisodeFailed,
  AllEpisodesFailed,
  Config,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::AngleNearPi: return "AngleNearPi";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::PolarSingularity: return "PolarSingularity";
    case ErrorKind::AzimuthSingularity: return "AzimuthSingularity";
    case ErrorKind::SingularInnovation: return "SingularInnovation";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::SchurViolation: return "SchurViolation";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::MaxIterations: return "MaxIterations";
    case ErrorKind::NoFeasibleSample: return "NoFeasibleSample";
    case ErrorKind::EpisodeFailed: return "EpisodeFailed";
    case ErrorKind::AllEpisodesFailed: return "AllEpisodesFailed";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace uavisac
