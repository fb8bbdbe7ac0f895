#include "mdcc/escrow.hpp"

namespace mdcc {

Rational compute_limit(std::uint32_t n, std::uint32_t q_fast, std::int64_t base, std::int64_t lo) {
  const std::int64_t spare = static_cast<std::int64_t>(n) - static_cast<std::int64_t>(q_fast);
  return Rational::of(lo * static_cast<std::int64_t>(n) + spare * (base - lo), n);
}

Rational compute_upper_limit(std::uint32_t n, std::uint32_t q_fast, std::int64_t base, std::int64_t hi) {
  const std::int64_t spare = static_cast<std::int64_t>(n) - static_cast<std::int64_t>(q_fast);
  return Rational::of(hi * static_cast<std::int64_t>(n) - spare * (hi - base), n);
}

namespace {

std::int64_t delta_of(const UpdateOption& o, const std::string& attr) {
  const auto& d = o.commutative().deltas;
  auto it = d.find(attr);
  return it == d.end() ? 0 : it->second;
}

}  // namespace

Verdict escrow_check(const EscrowContext& ctx, std::span<const OptionRef> pending,
                     const UpdateOption& candidate) {
  const auto& cand = candidate.commutative();
  const std::uint32_t n = ctx.quorum.n;
  const std::uint32_t qf = ctx.demarcation ? ctx.quorum.q_fast : n;

  for (const auto& [attr, bound] : cand.constraints) {
    const std::int64_t delta = delta_of(candidate, attr);
    const std::int64_t current = ctx.current.get(attr);
    const std::int64_t base = ctx.base.get(attr);

    if (bound.lo && delta < 0) {
      std::int64_t worst = current + delta;
      for (const auto& p : pending) worst += std::min<std::int64_t>(0, delta_of(*p, attr));
      if (Rational::of(worst) < compute_limit(n, qf, base, *bound.lo)) return Verdict::reject;
    }
    if (bound.hi && delta > 0) {
      std::int64_t worst = current + delta;
      for (const auto& p : pending) worst += std::max<std::int64_t>(0, delta_of(*p, attr));
      if (Rational::of(worst) > compute_upper_limit(n, qf, base, *bound.hi)) return Verdict::reject;
    }
  }
  return Verdict::accept;
}

}  // namespace mdcc
