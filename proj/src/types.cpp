#include "mdcc/types.hpp"

#include <numeric>
#include <stdexcept>

namespace mdcc {

std::string Ballot::str() const {
  return std::string(classic ? "C" : "F") + std::to_string(number) + "." + std::to_string(server);
}

std::strong_ordering ballot_compare(const Ballot& a, const Ballot& b) { return a <=> b; }

bool QuorumSpec::valid() const {
  if (n == 0 || q_classic > n || q_fast > n) return false;
  const auto n2 = static_cast<std::int64_t>(n);
  const auto qc = static_cast<std::int64_t>(q_classic);
  const auto qf = static_cast<std::int64_t>(q_fast);
  return 2 * qc > n2 && 2 * qf + qc - 2 * n2 >= 1 && qf + qc > n2;
}

QuorumSpec quorum_sizes(std::uint32_t n) {
  if (n == 0) throw std::invalid_argument("quorum_sizes: n must be >= 1");
  QuorumSpec q{n, n / 2 + 1, 1};
  for (q.q_fast = 1; q.q_fast <= n; ++q.q_fast) {
    if (q.valid()) return q;
  }
  q.q_fast = n;
  return q;
}

Rational Rational::of(std::int64_t n, std::int64_t d) {
  if (d == 0) throw std::invalid_argument("Rational: zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
  return g > 1 ? Rational{n / g, d / g} : Rational{n, d};
}

std::strong_ordering Rational::operator<=>(const Rational& o) const {
  const __int128 l = static_cast<__int128>(num) * o.den;
  const __int128 r = static_cast<__int128>(o.num) * den;
  if (l < r) return std::strong_ordering::less;
  if (l > r) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::string Rational::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

std::int64_t Value::get(const std::string& attr, std::int64_t dflt) const {
  auto it = attrs.find(attr);
  return it == attrs.end() ? dflt : it->second;
}

const char* to_string(Verdict v) { return v == Verdict::accept ? "accept" : "reject"; }
const char* to_string(Decision d) { return d == Decision::commit ? "commit" : "abort"; }

bool UpdateOption::well_formed() const {
  for (const auto& k : writeset) {
    if (k == key) return true;
  }
  return false;
}

const Entry* find_entry(const CStruct& c, TxnId txn) {
  for (const auto& e : c) {
    if (e.option->txn == txn) return &e;
  }
  return nullptr;
}

bool is_prefix(const CStruct& prefix, const CStruct& of) {
  if (prefix.size() > of.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (!(prefix[i] == of[i])) return false;
  }
  return true;
}

nlohmann::json to_json(const Value& v) {
  nlohmann::json j;
  j["a"] = v.attrs;
  if (v.tombstone) j["t"] = true;
  return j;
}

Value value_from_json(const nlohmann::json& j) {
  Value v;
  v.attrs = j.at("a").get<std::map<std::string, std::int64_t>>();
  v.tombstone = j.value("t", false);
  return v;
}

nlohmann::json to_json(const UpdateOption& o) {
  nlohmann::json j;
  j["txn"] = o.txn;
  j["key"] = o.key;
  j["ws"] = o.writeset;
  j["co"] = o.coordinator;
  if (o.remote_callback) j["rc"] = true;
  if (const auto* p = std::get_if<PhysicalUpdate>(&o.update)) {
    j["kind"] = "phys";
    if (p->read_version) j["vr"] = *p->read_version;
    if (p->insert_round) j["ir"] = p->insert_round;
    j["vw"] = to_json(p->write_value);
  } else {
    const auto& c = o.commutative();
    j["kind"] = "comm";
    j["d"] = c.deltas;
    j["r"] = c.round;
    nlohmann::json cons = nlohmann::json::object();
    for (const auto& [attr, bound] : c.constraints) {
      nlohmann::json b = nlohmann::json::object();
      if (bound.lo) b["lo"] = *bound.lo;
      if (bound.hi) b["hi"] = *bound.hi;
      cons[attr] = b;
    }
    j["c"] = cons;
  }
  return j;
}

UpdateOption option_from_json(const nlohmann::json& j) {
  UpdateOption o;
  o.txn = j.at("txn").get<TxnId>();
  o.key = j.at("key").get<Key>();
  o.writeset = j.at("ws").get<std::vector<Key>>();
  o.coordinator = j.at("co").get<NodeId>();
  o.remote_callback = j.value("rc", false);
  if (j.at("kind") == "phys") {
    PhysicalUpdate p;
    if (j.contains("vr")) p.read_version = j.at("vr").get<RoundIndex>();
    p.write_value = value_from_json(j.at("vw"));
    p.insert_round = j.value("ir", RoundIndex{0});
    o.update = std::move(p);
  } else {
    CommutativeUpdate c;
    c.deltas = j.at("d").get<std::map<std::string, std::int64_t>>();
    c.round = j.at("r").get<RoundIndex>();
    for (const auto& [attr, b] : j.at("c").items()) {
      Constraint k;
      if (b.contains("lo")) k.lo = b.at("lo").get<std::int64_t>();
      if (b.contains("hi")) k.hi = b.at("hi").get<std::int64_t>();
      c.constraints[attr] = k;
    }
    o.update = std::move(c);
  }
  return o;
}

nlohmann::json to_json(const Ballot& b) { return nlohmann::json::array({b.classic, b.number, b.server}); }

Ballot ballot_from_json(const nlohmann::json& j) {
  return Ballot{j.at(0).get<bool>(), j.at(1).get<std::uint32_t>(), j.at(2).get<ServerId>()};
}

nlohmann::json to_json(const CStruct& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : c) {
    arr.push_back({{"o", to_json(*e.option)}, {"v", to_string(e.verdict)}});
  }
  return arr;
}

CStruct cstruct_from_json(const nlohmann::json& j) {
  CStruct c;
  for (const auto& e : j) {
    c.push_back(Entry{std::make_shared<const UpdateOption>(option_from_json(e.at("o"))),
                      e.at("v") == "accept" ? Verdict::accept : Verdict::reject});
  }
  return c;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace mdcc
