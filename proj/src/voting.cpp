#include "apa/voting.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "apa/error.hpp"

namespace apa::voting {

using nlohmann::json;

const char* to_string(Rule rule) {
  switch (rule) {
    case Rule::kPlurality: return "plurality";
    case Rule::kBorda: return "borda";
    case Rule::kCopeland: return "copeland";
    case Rule::kIrvPut: return "irv_put";
  }
  return "unknown";
}

const char* display_name(Rule rule) {
  switch (rule) {
    case Rule::kPlurality: return "Plurality";
    case Rule::kBorda: return "Borda";
    case Rule::kCopeland: return "Copeland";
    case Rule::kIrvPut: return "IRV-PUT";
  }
  return "unknown";
}

Rule parse_rule(std::string_view name) {
  for (Rule r : kAllRules) {
    if (name == to_string(r)) return r;
  }
  throw Error("unknown_rule", "unknown voting rule '" + std::string(name) +
                                  "' (expected plurality, borda, copeland or irv_put)");
}

void Profile::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid_profile", what); };
  if (candidates.empty()) fail("profile has no candidates");
  if (ballots.empty()) fail("profile has no ballots");
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!slot.emplace(candidates[i], i).second) fail("duplicate candidate '" + candidates[i] + "'");
  }
  std::vector<char> seen(candidates.size());
  for (const auto& b : ballots) {
    if (b.ranking.size() != candidates.size()) {
      fail("ballot of '" + b.juror_id + "' does not rank every candidate exactly once");
    }
    std::fill(seen.begin(), seen.end(), 0);
    for (const auto& c : b.ranking) {
      auto it = slot.find(c);
      if (it == slot.end()) fail("ballot of '" + b.juror_id + "' ranks unknown candidate '" + c + "'");
      if (seen[it->second]++) fail("ballot of '" + b.juror_id + "' ranks '" + c + "' twice");
    }
    if (!b.scores.empty() && b.scores.size() != b.ranking.size()) {
      fail("ballot of '" + b.juror_id + "' has scores that do not align with its ranking");
    }
  }
}

namespace {

// Ballots as candidate indices, best first.
struct IndexedProfile {
  std::size_t m = 0;
  std::vector<std::vector<std::uint32_t>> rankings;
};

IndexedProfile index_profile(const Profile& profile) {
  profile.validate();
  std::unordered_map<std::string, std::uint32_t> slot;
  for (std::size_t i = 0; i < profile.candidates.size(); ++i) {
    slot.emplace(profile.candidates[i], static_cast<std::uint32_t>(i));
  }
  IndexedProfile ip;
  ip.m = profile.candidates.size();
  ip.rankings.reserve(profile.ballots.size());
  for (const auto& b : profile.ballots) {
    std::vector<std::uint32_t> r;
    r.reserve(ip.m);
    for (const auto& c : b.ranking) r.push_back(slot.at(c));
    ip.rankings.push_back(std::move(r));
  }
  return ip;
}

std::vector<std::string> ids_of(const Profile& profile, const std::vector<std::size_t>& indices) {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(profile.candidates[i]);
  std::sort(out.begin(), out.end());
  return out;
}

template <typename Score>
std::vector<std::size_t> argmax(const std::vector<Score>& scores) {
  const Score best = *std::max_element(scores.begin(), scores.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == best) out.push_back(i);
  }
  return out;
}

VoteOutcome make_outcome(Rule rule, std::vector<std::string> winners, json audit) {
  VoteOutcome out;
  out.rule = rule;
  out.winner_set = std::move(winners);
  out.selected = out.winner_set.front();
  out.audit = std::move(audit);
  return out;
}

template <typename Score>
json per_candidate(const Profile& profile, const std::vector<Score>& values) {
  json j = json::object();
  for (std::size_t i = 0; i < values.size(); ++i) j[profile.candidates[i]] = values[i];
  return j;
}

}  // namespace

json MarginMatrix::to_json() const {
  json rows = json::array();
  for (std::size_t a = 0; a < m_; ++a) {
    rows.push_back(std::vector<int>(data_.begin() + a * m_, data_.begin() + (a + 1) * m_));
  }
  return rows;
}

MarginMatrix pairwise_margins(const Profile& profile) {
  const auto ip = index_profile(profile);
  MarginMatrix mm(ip.m);
  for (const auto& r : ip.rankings) {
    for (std::size_t p = 0; p < r.size(); ++p) {
      for (std::size_t q = p + 1; q < r.size(); ++q) ++mm.at(r[p], r[q]);
    }
  }
  return mm;
}

std::optional<std::string> condorcet_winner(const Profile& profile) {
  const auto mm = pairwise_margins(profile);
  for (std::size_t a = 0; a < mm.size(); ++a) {
    bool beats_all = true;
    for (std::size_t b = 0; b < mm.size() && beats_all; ++b) {
      if (a != b && mm.at(a, b) <= mm.at(b, a)) beats_all = false;
    }
    if (beats_all) return profile.candidates[a];
  }
  return std::nullopt;
}

VoteOutcome plurality(const Profile& profile) {
  const auto ip = index_profile(profile);
  std::vector<long> tallies(ip.m, 0);
  for (const auto& r : ip.rankings) ++tallies[r.front()];
  return make_outcome(Rule::kPlurality, ids_of(profile, argmax(tallies)),
                      json{{"first_place_tallies", per_candidate(profile, tallies)}});
}

std::vector<long> borda_scores(const Profile& profile) {
  const auto ip = index_profile(profile);
  std::vector<long> scores(ip.m, 0);
  for (const auto& r : ip.rankings) {
    for (std::size_t p = 0; p < r.size(); ++p) scores[r[p]] += static_cast<long>(ip.m - 1 - p);
  }
  return scores;
}

VoteOutcome borda(const Profile& profile) {
  const auto scores = borda_scores(profile);
  return make_outcome(Rule::kBorda, ids_of(profile, argmax(scores)),
                      json{{"scores", per_candidate(profile, scores)}});
}

VoteOutcome copeland(const Profile& profile) {
  const auto mm = pairwise_margins(profile);
  std::vector<long> scores(mm.size(), 0);
  for (std::size_t a = 0; a < mm.size(); ++a) {
    for (std::size_t b = 0; b < mm.size(); ++b) {
      if (a == b) continue;
      if (mm.at(a, b) > mm.at(b, a)) ++scores[a];
      else if (mm.at(a, b) < mm.at(b, a)) --scores[a];
    }
  }
  return make_outcome(Rule::kCopeland, ids_of(profile, argmax(scores)),
                      json{{"candidates", profile.candidates},
                           {"pairwise", mm.to_json()},
                           {"scores", per_candidate(profile, scores)}});
}

namespace {

class IrvPutSolver {
 public:
  IrvPutSolver(const Profile& profile, const IndexedProfile& ip) : profile_(profile), ip_(ip) {}

  std::uint32_t solve(std::uint32_t remaining) {
    if (auto it = memo_.find(remaining); it != memo_.end()) return it->second;

    std::vector<long> tallies(ip_.m, 0);
    for (const auto& r : ip_.rankings) {
      for (std::uint32_t c : r) {
        if (remaining & (1u << c)) {
          ++tallies[c];
          break;
        }
      }
    }
    long fewest = -1;
    for (std::size_t c = 0; c < ip_.m; ++c) {
      if ((remaining & (1u << c)) && (fewest < 0 || tallies[c] < fewest)) fewest = tallies[c];
    }
    std::uint32_t lowest = 0;
    for (std::size_t c = 0; c < ip_.m; ++c) {
      if ((remaining & (1u << c)) && tallies[c] == fewest) lowest |= 1u << c;
    }

    // Record the state before recursing so the audit lists states root first.
    const std::size_t node = trace_.size();
    json state{{"remaining", names(remaining)}};
    json t = json::object();
    for (std::size_t c = 0; c < ip_.m; ++c) {
      if (remaining & (1u << c)) t[profile_.candidates[c]] = tallies[c];
    }
    state["first_place_tallies"] = std::move(t);
    trace_.push_back(std::move(state));

    std::uint32_t winners = 0;
    if (lowest == remaining) {
      // A single survivor, or every survivor tied: all of them win here.
      winners = remaining;
    } else {
      trace_[node]["eliminate"] = names(lowest);
      for (std::size_t c = 0; c < ip_.m; ++c) {
        if (lowest & (1u << c)) winners |= solve(remaining & ~(1u << c));
      }
    }
    trace_[node]["winners"] = names(winners);
    memo_.emplace(remaining, winners);
    return winners;
  }

  json take_trace() { return std::move(trace_); }

  std::vector<std::string> names(std::uint32_t mask) const {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < ip_.m; ++c) {
      if (mask & (1u << c)) out.push_back(profile_.candidates[c]);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  const Profile& profile_;
  const IndexedProfile& ip_;
  std::unordered_map<std::uint32_t, std::uint32_t> memo_;
  json trace_ = json::array();
};

}  // namespace

VoteOutcome irv_put(const Profile& profile) {
  const auto ip = index_profile(profile);
  if (ip.m > kMaxIrvCandidates) {
    throw Error("too_many_candidates", "irv_put supports at most " + std::to_string(kMaxIrvCandidates) +
                                           " candidates");
  }
  IrvPutSolver solver(profile, ip);
  const std::uint32_t all = (1u << ip.m) - 1u;
  const std::uint32_t winners = solver.solve(all);
  auto names = solver.names(winners);
  return make_outcome(Rule::kIrvPut, std::move(names), json{{"elimination_states", solver.take_trace()}});
}

VoteOutcome apply_rule(Rule rule, const Profile& profile) {
  switch (rule) {
    case Rule::kPlurality: return plurality(profile);
    case Rule::kBorda: return borda(profile);
    case Rule::kCopeland: return copeland(profile);
    case Rule::kIrvPut: return irv_put(profile);
  }
  throw Error("unknown_rule", "unknown voting rule");
}

Profile clone_insert(const Profile& profile, const std::string& target, const std::string& clone_id) {
  std::vector<ClonePlacement> below(profile.ballots.size(), ClonePlacement::kBelow);
  return clone_insert(profile, target, clone_id, below);
}

Profile clone_insert(const Profile& profile, const std::string& target, const std::string& clone_id,
                     std::span<const ClonePlacement> placement) {
  profile.validate();
  if (std::find(profile.candidates.begin(), profile.candidates.end(), clone_id) != profile.candidates.end()) {
    throw Error("clone_collision", "clone id '" + clone_id + "' already names a candidate");
  }
  auto target_it = std::find(profile.candidates.begin(), profile.candidates.end(), target);
  if (target_it == profile.candidates.end()) {
    throw Error("unknown_candidate", "clone target '" + target + "' is not a candidate");
  }
  if (placement.size() != profile.ballots.size()) {
    throw Error("invalid_argument", "clone placement needs one entry per ballot");
  }
  Profile out = profile;
  out.candidates.insert(std::next(out.candidates.begin(), std::distance(profile.candidates.begin(), target_it) + 1),
                        clone_id);
  for (std::size_t b = 0; b < out.ballots.size(); ++b) {
    auto& ballot = out.ballots[b];
    auto pos = std::find(ballot.ranking.begin(), ballot.ranking.end(), target) - ballot.ranking.begin();
    const auto at = placement[b] == ClonePlacement::kBelow ? pos + 1 : pos;
    ballot.ranking.insert(ballot.ranking.begin() + at, clone_id);
    if (!ballot.scores.empty()) ballot.scores.insert(ballot.scores.begin() + at, ballot.scores[pos]);
  }
  return out;
}

Profile remove_candidate(const Profile& profile, const std::string& candidate) {
  Profile out = profile;
  auto it = std::find(out.candidates.begin(), out.candidates.end(), candidate);
  if (it == out.candidates.end()) {
    throw Error("unknown_candidate", "'" + candidate + "' is not a candidate");
  }
  out.candidates.erase(it);
  for (auto& ballot : out.ballots) {
    auto pos = std::find(ballot.ranking.begin(), ballot.ranking.end(), candidate);
    if (pos == ballot.ranking.end()) continue;
    if (!ballot.scores.empty()) ballot.scores.erase(ballot.scores.begin() + (pos - ballot.ranking.begin()));
    ballot.ranking.erase(pos);
  }
  return out;
}

double mean_pairwise_spearman(const Profile& profile) {
  const auto ip = index_profile(profile);
  const std::size_t n = ip.rankings.size();
  const std::size_t m = ip.m;
  if (n < 2 || m < 2) {
    throw Error("invalid_argument", "Spearman agreement needs at least 2 ballots and 2 candidates");
  }
  std::vector<std::vector<long>> rank(n, std::vector<long>(m));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < m; ++p) rank[b][ip.rankings[b][p]] = static_cast<long>(p);
  }
  const double denom = static_cast<double>(m) * (static_cast<double>(m) * static_cast<double>(m) - 1.0);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      long d2 = 0;
      for (std::size_t c = 0; c < m; ++c) {
        const long d = rank[a][c] - rank[b][c];
        d2 += d * d;
      }
      total += 1.0 - 6.0 * static_cast<double>(d2) / denom;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

json to_json(const Profile& profile) {
  json ballots = json::array();
  for (const auto& b : profile.ballots) {
    json jb{{"juror_id", b.juror_id}, {"ranking", b.ranking}};
    if (!b.scores.empty()) jb["scores"] = b.scores;
    ballots.push_back(std::move(jb));
  }
  return json{{"candidates", profile.candidates}, {"ballots", ballots}};
}

Profile profile_from_json(const json& j) {
  try {
    Profile p;
    p.candidates = j.at("candidates").get<std::vector<std::string>>();
    for (const auto& jb : j.at("ballots")) {
      Ballot b;
      b.juror_id = jb.value("juror_id", std::string{});
      b.ranking = jb.at("ranking").get<std::vector<std::string>>();
      if (jb.contains("scores")) b.scores = jb.at("scores").get<std::vector<double>>();
      p.ballots.push_back(std::move(b));
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("profile: ") + e.what());
  }
}

json to_json(const VoteOutcome& outcome) {
  return json{{"rule", to_string(outcome.rule)},
              {"winner_set", outcome.winner_set},
              {"selected", outcome.selected},
              {"audit", outcome.audit}};
}

}  // namespace apa::voting
