#pragma once

#include <span>

#include "mdcc/types.hpp"

namespace mdcc {

// Demarcation limit for a lower bound `lo`: L = lo + (n - q_fast)/n * (base - lo).
// With lo = 0 this is the familiar (N - Q_F)/N * X.
Rational compute_limit(std::uint32_t n, std::uint32_t q_fast, std::int64_t base, std::int64_t lo = 0);

// Mirror image for an upper bound `hi`: U = hi - (n - q_fast)/n * (hi - base).
Rational compute_upper_limit(std::uint32_t n, std::uint32_t q_fast, std::int64_t base, std::int64_t hi);

struct EscrowContext {
  Value base;        // value that opened the commutative round
  Value current;     // base plus every executed commit of the round
  QuorumSpec quorum;
  bool demarcation = true;  // false: check the raw domain bound only
};

// Accepts iff the new option, committing together with every pending option
// that moves an attribute toward the bound, keeps each constrained attribute
// within its (demarcated) limit.
Verdict escrow_check(const EscrowContext& ctx, std::span<const OptionRef> pending,
                     const UpdateOption& candidate);

}  // namespace mdcc
