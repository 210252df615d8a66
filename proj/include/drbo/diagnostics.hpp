#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace drbo {

/// Numerical fallbacks that are taken silently in the hot path but must be
/// observable afterwards.
enum class Event : std::uint8_t {
  kPseudoInverse,     // singular normal equations, solved by pseudo-inverse
  kMseFloor,          // residual mean square clamped at 1e-12
  kLogisticRidge,     // perfect separation, ridge-penalized refit
  kNonFiniteLoss,     // surrogate training loss not finite, step rate halved
  kCiTestSkipped,     // conditioning set too large for the Fisher-z test
  kJitterEscalated,   // GP sampling kernel needed more than the initial jitter
  kCount
};

[[nodiscard]] std::string_view event_name(Event e);

/// Records one occurrence; prints the message to stderr the first few times
/// each event is seen when verbose logging is on.
void log_event(Event e, std::string_view message);
[[nodiscard]] std::uint64_t event_count(Event e);
void reset_event_counts();
void set_verbose(bool on);

}  // namespace drbo
