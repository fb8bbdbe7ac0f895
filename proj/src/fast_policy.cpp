#include "mdcc/fast_policy.hpp"

#include <algorithm>

namespace mdcc {

PolicyStep fast_policy_step(FastPolicyState& state, PolicyEvent event) {
  switch (event) {
    case PolicyEvent::fast_success:
      ++state.fast_successes;
      return {state.classic_rounds_remaining > 0 ? RoundMode::classic : RoundMode::fast, 0};
    case PolicyEvent::conflict: {
      const std::uint32_t span =
          state.fast_successes >= kFastSuccessThreshold ? 1 : std::max<std::uint32_t>(1, state.gamma);
      state.fast_successes = 0;
      state.classic_rounds_remaining = span;
      return {span > 1 ? RoundMode::classic : RoundMode::fast, span};
    }
    case PolicyEvent::classic_done:
      if (state.classic_rounds_remaining > 0) --state.classic_rounds_remaining;
      return {state.classic_rounds_remaining > 0 ? RoundMode::classic : RoundMode::fast, 0};
  }
  return {};
}

}  // namespace mdcc
