#pragma once

#include <cstdint>

namespace mdcc {

enum class RoundMode : std::uint8_t { fast, classic };

enum class PolicyEvent : std::uint8_t { fast_success, conflict, classic_done };

inline constexpr std::uint32_t kDefaultGamma = 10;
// Fast successes after which a conflict only costs the current round.
inline constexpr std::uint32_t kFastSuccessThreshold = 4;

struct FastPolicyState {
  std::uint32_t fast_successes = 0;  // since the last conflict resolution
  std::uint32_t classic_rounds_remaining = 0;
  std::uint32_t gamma = kDefaultGamma;
};

struct PolicyStep {
  RoundMode next = RoundMode::fast;  // mode of the following round
  std::uint32_t classic_span = 0;    // on conflict: classic rounds starting at the current one
};

// fast_success bumps the counter. conflict makes the current round classic
// and, with fewer than four fast successes behind it, the next gamma - 1 too.
// classic_done counts one finished classic round down.
PolicyStep fast_policy_step(FastPolicyState& state, PolicyEvent event);

}  // namespace mdcc
