#include "mdcc/messages.hpp"

#include <charconv>

namespace mdcc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

class Enc {
 public:
  Enc& num(std::uint64_t v) {
    char buf[24];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out_.append(buf, p);
    out_.push_back(' ');
    return *this;
  }
  Enc& snum(std::int64_t v) {
    char buf[24];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out_.append(buf, p);
    out_.push_back(' ');
    return *this;
  }
  Enc& str(std::string_view s) {
    num(s.size());
    out_.append(s);
    out_.push_back(' ');
    return *this;
  }
  Enc& flag(bool b) { return num(b ? 1 : 0); }
  Enc& ballot(const Ballot& b) { return flag(b.classic).num(b.number).num(b.server); }
  Enc& value(const Value& v) {
    flag(v.tombstone).num(v.attrs.size());
    for (const auto& [k, x] : v.attrs) str(k).snum(x);
    return *this;
  }
  Enc& option(const OptionRef& o) {
    if (!o) return str("-");
    num(o->txn).str(o->key).num(o->coordinator).flag(o->remote_callback).num(o->writeset.size());
    for (const auto& k : o->writeset) str(k);
    if (o->is_commutative()) {
      const auto& c = o->commutative();
      str("c").num(c.round).num(c.deltas.size());
      for (const auto& [k, d] : c.deltas) str(k).snum(d);
      num(c.constraints.size());
      for (const auto& [k, b] : c.constraints) {
        str(k).flag(b.lo.has_value()).snum(b.lo.value_or(0)).flag(b.hi.has_value()).snum(b.hi.value_or(0));
      }
    } else {
      const auto& p = o->physical();
      str("p").flag(p.read_version.has_value()).num(p.read_version.value_or(0)).num(p.insert_round).value(p.write_value);
    }
    return *this;
  }
  Enc& entry(const Entry& e) { return option(e.option).num(static_cast<unsigned>(e.verdict)); }
  Enc& cstruct(const CStruct& c) {
    num(c.size());
    for (const auto& e : c) entry(e);
    return *this;
  }
  Enc& meta(const RoundMeta& m) {
    return num(m.start_round).flag(m.end_round.has_value()).num(m.end_round.value_or(0)).flag(m.fast).ballot(m.ballot);
  }
  Enc& version(const Version& v) { return num(v.index).value(v.value).flag(v.absent).num(v.committed_by); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

void encode_phase1(Enc& e, const Phase1Result& r) {
  std::visit(overloaded{[&](const Phase1bReply& p) {
                          e.str("ok").num(p.round).num(static_cast<unsigned>(p.state)).ballot(p.promised);
                          e.flag(p.vote_ballot.has_value());
                          if (p.vote_ballot) e.ballot(*p.vote_ballot);
                          e.cstruct(p.vote).flag(p.decided.has_value());
                          if (p.decided) e.cstruct(*p.decided);
                          e.num(p.replica_round);
                        },
                        [&](const Nack& n) { e.str("nack").num(n.round).ballot(n.promised); }},
             r);
}

void encode_phase2(Enc& e, const Phase2Result& r) {
  std::visit(overloaded{[&](const Phase2bReply& p) {
                          e.str("ok").num(p.round).ballot(p.ballot).num(p.txn).num(static_cast<unsigned>(p.verdict));
                          e.num(p.accepted_len).flag(p.decided);
                        },
                        [&](const Nack& n) { e.str("nack").num(n.round).ballot(n.promised); },
                        [&](const Refusal& f) {
                          e.str("refuse").num(f.round).num(static_cast<unsigned>(f.reason)).cstruct(f.current);
                        }},
             r);
}

}  // namespace

const char* message_type(const Message& m) {
  static constexpr const char* names[] = {
      "FastPropose", "Vote",    "ClassicRequest", "Decided",   "Learned",     "Phase1a",    "Phase1b", "Phase2a",
      "Phase2b",     "Chosen",  "CatchupRequest", "Snapshot",  "ReadRequest", "ReadReply",  "TpcRequest",
      "TpcPrepare",  "TpcVote", "TpcFinish",      "TpcAck",    "TpcReply",    "QwWrite",    "QwAck"};
  static_assert(std::size(names) == std::variant_size_v<Message>);
  return names[m.index()];
}

TxnId message_txn(const Message& m) {
  return std::visit(
      overloaded{[](const FastPropose& x) -> TxnId { return x.option->txn; },
                 [](const Vote& x) -> TxnId { return x.txn; },
                 [](const ClassicRequest& x) -> TxnId { return x.txn; },
                 [](const Decided& x) -> TxnId { return x.txn; },
                 [](const Learned& x) -> TxnId { return x.entry.option->txn; },
                 [](const Phase2a& x) -> TxnId { return x.value.empty() ? 0 : x.value.back().option->txn; },
                 [](const Phase2b& x) -> TxnId {
                   const auto* ok = std::get_if<Phase2bReply>(&x.result);
                   return ok ? ok->txn : 0;
                 },
                 [](const TpcRequest& x) -> TxnId { return x.txn; },
                 [](const TpcPrepare& x) -> TxnId { return x.txn; },
                 [](const TpcVote& x) -> TxnId { return x.txn; },
                 [](const TpcFinish& x) -> TxnId { return x.txn; },
                 [](const TpcAck& x) -> TxnId { return x.txn; },
                 [](const TpcReply& x) -> TxnId { return x.txn; },
                 [](const QwWrite& x) -> TxnId { return x.txn; },
                 [](const QwAck& x) -> TxnId { return x.txn; },
                 [](const auto&) -> TxnId { return 0; }},
      m);
}

std::string encode(const Message& m) {
  Enc e;
  e.str(message_type(m));
  std::visit(overloaded{
                 [&](const FastPropose& x) { e.option(x.option); },
                 [&](const Vote& x) {
                   e.str(x.key).num(x.txn).num(x.round).flag(x.verdict.has_value());
                   e.num(x.verdict ? static_cast<unsigned>(*x.verdict) : 0).flag(x.decided);
                   e.flag(x.refusal.has_value()).num(x.refusal ? static_cast<unsigned>(*x.refusal) : 0).num(x.master);
                 },
                 [&](const ClassicRequest& x) { e.str(x.key).num(x.txn).option(x.option).flag(x.conflict); },
                 [&](const Decided& x) { e.str(x.key).num(x.txn).num(x.round).entry(x.entry).flag(x.primary); },
                 [&](const Learned& x) {
                   e.str(x.key).num(x.round).entry(x.entry).num(static_cast<unsigned>(x.decision)).flag(x.primary);
                 },
                 [&](const Phase1a& x) { e.str(x.key).ballot(x.ballot).meta(x.range); },
                 [&](const Phase1b& x) {
                   e.str(x.key).ballot(x.ballot);
                   encode_phase1(e, x.result);
                 },
                 [&](const Phase2a& x) { e.str(x.key).ballot(x.ballot).num(x.round).cstruct(x.value); },
                 [&](const Phase2b& x) {
                   e.str(x.key).ballot(x.ballot);
                   encode_phase2(e, x.result);
                 },
                 [&](const Chosen& x) { e.str(x.key).num(x.round).cstruct(x.value); },
                 [&](const CatchupRequest& x) { e.str(x.key).num(x.have); },
                 [&](const Snapshot& x) {
                   e.str(x.key).num(x.snap.round).num(x.snap.history.size());
                   for (const auto& h : x.snap.history) e.cstruct(h);
                   e.num(x.snap.versions.size());
                   for (const auto& v : x.snap.versions) e.version(v);
                   e.value(x.snap.base).flag(x.snap.decided.has_value());
                   if (x.snap.decided) e.cstruct(*x.snap.decided);
                   e.num(x.snap.executed.size());
                   for (auto t : x.snap.executed) e.num(t);
                 },
                 [&](const ReadRequest& x) { e.num(x.req).str(x.key).num(static_cast<unsigned>(x.store)); },
                 [&](const ReadReply& x) { e.num(x.req).str(x.key).flag(x.found).version(x.version).num(x.round); },
                 [&](const TpcRequest& x) {
                   e.num(x.txn).num(x.options.size());
                   for (const auto& o : x.options) e.option(o);
                 },
                 [&](const TpcPrepare& x) { e.num(x.txn).option(x.option); },
                 [&](const TpcVote& x) { e.num(x.txn).str(x.key).flag(x.yes); },
                 [&](const TpcFinish& x) { e.num(x.txn).str(x.key).flag(x.commit); },
                 [&](const TpcAck& x) { e.num(x.txn).str(x.key); },
                 [&](const TpcReply& x) { e.num(x.txn).flag(x.commit); },
                 [&](const QwWrite& x) { e.num(x.txn).str(x.key).value(x.value).num(x.version).num(x.writer); },
                 [&](const QwAck& x) { e.num(x.txn).str(x.key); },
             },
             m);
  return e.take();
}

std::uint64_t digest(const Message& m) { return fnv1a(encode(m)); }

}  // namespace mdcc
