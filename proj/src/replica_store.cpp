#include "mdcc/replica_store.hpp"

#include <sstream>
#include <stdexcept>

namespace mdcc {

namespace {

using nlohmann::json;

json meta_json(const RoundMeta& m) {
  return {{"s", m.start_round}, {"e", m.end_round ? json(*m.end_round) : json(nullptr)}, {"f", m.fast},
          {"b", to_json(m.ballot)}};
}

RoundMeta meta_from(const json& j) {
  RoundMeta m;
  m.start_round = j.at("s").get<RoundIndex>();
  if (!j.at("e").is_null()) m.end_round = j.at("e").get<RoundIndex>();
  m.fast = j.at("f").get<bool>();
  m.ballot = ballot_from_json(j.at("b"));
  return m;
}

json entry_json(const Entry& e) { return {{"o", to_json(*e.option)}, {"v", to_string(e.verdict)}}; }

Entry entry_from(const json& j) {
  return Entry{std::make_shared<const UpdateOption>(option_from_json(j.at("o"))),
               j.at("v").get<std::string>() == "accept" ? Verdict::accept : Verdict::reject};
}

std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find('\t', start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

json to_json(const RecordSnapshot& s) {
  json hist = json::array();
  for (const auto& h : s.history) hist.push_back(to_json(h));
  json vers = json::array();
  for (const auto& v : s.versions) vers.push_back({v.index, to_json(v.value), v.absent, v.committed_by});
  return {{"round", s.round},
          {"history", hist},
          {"versions", vers},
          {"base", to_json(s.base)},
          {"decided", s.decided ? to_json(*s.decided) : json(nullptr)},
          {"executed", s.executed}};
}

RecordSnapshot snapshot_from_json(const json& j) {
  RecordSnapshot s;
  s.round = j.at("round").get<RoundIndex>();
  for (const auto& h : j.at("history")) s.history.push_back(cstruct_from_json(h));
  for (const auto& v : j.at("versions")) {
    s.versions.push_back(
        Version{v.at(0).get<RoundIndex>(), value_from_json(v.at(1)), v.at(2).get<bool>(), v.at(3).get<TxnId>()});
  }
  s.base = value_from_json(j.at("base"));
  if (!j.at("decided").is_null()) s.decided = cstruct_from_json(j.at("decided"));
  s.executed = j.at("executed").get<std::set<TxnId>>();
  return s;
}

std::string LogLine::format() const {
  std::ostringstream os;
  os << time << '\t' << key << '\t' << round << '\t' << ballot.str() << '\t' << txn << '\t' << kind << '\t'
     << payload.dump() << '\t' << verdict;
  return os.str();
}

LogLine LogLine::parse(const std::string& line) {
  const auto f = split_tabs(line);
  if (f.size() != 8) throw std::invalid_argument("option log: expected 8 fields");
  LogLine l;
  l.time = std::stoll(f[0]);
  l.key = f[1];
  l.round = std::stoull(f[2]);
  l.txn = std::stoull(f[4]);
  l.kind = f[5];
  l.payload = json::parse(f[6]);
  l.verdict = f[7];
  const auto& b = f[3];
  const auto dot = b.find('.');
  if (b.size() < 4 || (b[0] != 'C' && b[0] != 'F') || dot == std::string::npos) {
    throw std::invalid_argument("option log: bad ballot " + b);
  }
  l.ballot = Ballot{b[0] == 'C', static_cast<std::uint32_t>(std::stoul(b.substr(1, dot - 1))),
                    static_cast<ServerId>(std::stoul(b.substr(dot + 1)))};
  return l;
}

ReplicaStore::ReplicaStore(QuorumSpec quorum, KindResolver kind_of, bool demarcation)
    : quorum_(quorum), kind_of_(std::move(kind_of)), demarcation_(demarcation) {}

const ReplicaRecord* ReplicaStore::find(const Key& key) const {
  auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

void ReplicaStore::append(LogLine line) {
  if (logging_) log_.push_back(line.format());
}

ReplicaRecord& ReplicaStore::record(SimTime now, const Key& key) {
  auto it = records_.find(key);
  if (it != records_.end()) return it->second;
  append(LogLine{now, key, 0, {}, 0, "create", json::object(), "-"});
  auto [pos, ok] = records_.emplace(key, ReplicaRecord(key, kind_of_(key), quorum_));
  pos->second.set_demarcation(demarcation_);
  return pos->second;
}

void ReplicaStore::load(SimTime now, const Key& key, const Value& v) {
  auto& rec = record(now, key);
  append(LogLine{now, key, 0, {}, 0, "load", to_json(v), "-"});
  rec.load(v);
}

void ReplicaStore::install_meta(SimTime now, const Key& key, const RoundMeta& meta) {
  auto& rec = record(now, key);
  append(LogLine{now, key, meta.start_round, meta.ballot, 0, "meta", meta_json(meta), "-"});
  rec.handle_phase1a(now, meta.ballot, meta);
}

Phase1Result ReplicaStore::phase1a(SimTime now, const Key& key, const Ballot& b, const RoundMeta& range) {
  auto& rec = record(now, key);
  append(LogLine{now, key, range.start_round, b, 0, "phase1a", {{"b", to_json(b)}, {"m", meta_json(range)}}, "-"});
  return rec.handle_phase1a(now, b, range);
}

Phase2Result ReplicaStore::phase2a(SimTime now, const Key& key, const Ballot& b, RoundIndex round,
                                   const CStruct& value) {
  auto& rec = record(now, key);
  append(LogLine{now, key, round, b, value.empty() ? 0 : value.back().option->txn, "phase2a",
                 {{"b", to_json(b)}, {"v", to_json(value)}},
                 value.empty() ? "-" : to_string(value.back().verdict)});
  return rec.handle_phase2a(now, b, round, value);
}

FastResult ReplicaStore::fast(SimTime now, const OptionRef& option) {
  auto& rec = record(now, option->key);
  auto res = rec.handle_fast_propose(now, option);
  const auto* ok = std::get_if<Phase2bReply>(&res);
  // The verdict column is informational; replay recomputes it.
  append(LogLine{now, option->key, rec.round(), {}, option->txn, "fast", to_json(*option),
                 ok ? to_string(ok->verdict) : "refused"});
  return res;
}

LearnResult ReplicaStore::learned(SimTime now, const Key& key, RoundIndex round, const Entry& e, Decision d,
                                  bool primary) {
  auto& rec = record(now, key);
  append(LogLine{now, key, round, {}, e.option->txn, "learned", {{"e", entry_json(e)}, {"p", primary}},
                 to_string(d)});
  return rec.apply_learned(now, round, e.option, e.verdict, d, primary);
}

LearnResult ReplicaStore::chosen(SimTime now, const Key& key, RoundIndex round, const CStruct& value) {
  auto& rec = record(now, key);
  append(LogLine{now, key, round, {}, 0, "chosen", {{"v", to_json(value)}}, "-"});
  return rec.apply_chosen(now, round, value);
}

LearnResult ReplicaStore::snapshot(SimTime now, const Key& key, const RecordSnapshot& snap) {
  auto& rec = record(now, key);
  append(LogLine{now, key, snap.round, {}, 0, "snapshot", to_json(snap), "-"});
  return rec.import_snapshot(now, snap);
}

void ReplicaStore::note(SimTime now, const Key& key, TxnId txn, const std::string& kind) {
  append(LogLine{now, key, 0, {}, txn, kind, json::object(), "-"});
}

void ReplicaStore::apply(const LogLine& l) {
  const auto& p = l.payload;
  if (l.kind == "create") {
    record(l.time, l.key);
  } else if (l.kind == "load") {
    load(l.time, l.key, value_from_json(p));
  } else if (l.kind == "meta") {
    install_meta(l.time, l.key, meta_from(p));
  } else if (l.kind == "phase1a") {
    phase1a(l.time, l.key, ballot_from_json(p.at("b")), meta_from(p.at("m")));
  } else if (l.kind == "phase2a") {
    phase2a(l.time, l.key, ballot_from_json(p.at("b")), l.round, cstruct_from_json(p.at("v")));
  } else if (l.kind == "fast") {
    fast(l.time, std::make_shared<const UpdateOption>(option_from_json(p)));
  } else if (l.kind == "learned") {
    learned(l.time, l.key, l.round, entry_from(p.at("e")), l.verdict == "commit" ? Decision::commit : Decision::abort,
            p.at("p").get<bool>());
  } else if (l.kind == "chosen") {
    chosen(l.time, l.key, l.round, cstruct_from_json(p.at("v")));
  } else if (l.kind == "snapshot") {
    snapshot(l.time, l.key, snapshot_from_json(p));
  } else {
    note(l.time, l.key, l.txn, l.kind);
  }
}

ReplicaStore ReplicaStore::replay(const std::vector<std::string>& lines, QuorumSpec quorum, KindResolver kind_of,
                                  bool demarcation) {
  ReplicaStore s(quorum, std::move(kind_of), demarcation);
  for (const auto& line : lines) s.apply(LogLine::parse(line));
  return s;
}

std::string ReplicaStore::digest_text() const {
  std::string out;
  for (const auto& [k, r] : records_) {
    out += r.digest_text();
    out.push_back('\n');
  }
  return out;
}

}  // namespace mdcc
