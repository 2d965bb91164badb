#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace apa::voting {

struct Ballot {
  std::string juror_id;
  std::vector<std::string> ranking;  // best first
  // Optional per-candidate scores aligned with `ranking`, kept for audit.
  std::vector<double> scores;

  bool operator==(const Ballot&) const = default;
};

struct Profile {
  std::vector<std::string> candidates;
  std::vector<Ballot> ballots;

  std::size_t num_candidates() const noexcept { return candidates.size(); }
  std::size_t num_ballots() const noexcept { return ballots.size(); }

  // Throws apa::Error("invalid_profile") unless M >= 1, candidate ids are
  // unique, there is at least one ballot and every ranking is a permutation
  // of the candidate set.
  void validate() const;

  bool operator==(const Profile&) const = default;
};

enum class Rule { kPlurality, kBorda, kCopeland, kIrvPut };

inline constexpr Rule kAllRules[] = {Rule::kIrvPut, Rule::kCopeland, Rule::kBorda, Rule::kPlurality};

const char* to_string(Rule rule);
// Display label used in report tables ("IRV-PUT", "Copeland", ...).
const char* display_name(Rule rule);
// Accepts "plurality", "borda", "copeland", "irv_put"; throws apa::Error("unknown_rule").
Rule parse_rule(std::string_view name);

struct VoteOutcome {
  std::vector<std::string> winner_set;  // sorted by id
  std::string selected;                 // lexicographically smallest of winner_set
  Rule rule = Rule::kPlurality;
  nlohmann::json audit;
};

// M x M pairwise tally: at(a, b) = number of ballots ranking a above b.
class MarginMatrix {
 public:
  explicit MarginMatrix(std::size_t m) : m_(m), data_(m * m, 0) {}
  std::size_t size() const noexcept { return m_; }
  int& at(std::size_t a, std::size_t b) { return data_[a * m_ + b]; }
  int at(std::size_t a, std::size_t b) const { return data_[a * m_ + b]; }
  nlohmann::json to_json() const;

 private:
  std::size_t m_;
  std::vector<int> data_;
};

// Rows and columns follow profile.candidates order.
MarginMatrix pairwise_margins(const Profile& profile);
std::optional<std::string> condorcet_winner(const Profile& profile);

VoteOutcome plurality(const Profile& profile);
VoteOutcome borda(const Profile& profile);
VoteOutcome copeland(const Profile& profile);
// Instant runoff with parallel-universe tie-breaking: every candidate tied
// for the fewest first-place votes is eliminated in its own branch, and the
// winner set is the union over branches. Limited to 16 candidates.
VoteOutcome irv_put(const Profile& profile);
VoteOutcome apply_rule(Rule rule, const Profile& profile);

inline constexpr std::size_t kMaxIrvCandidates = 16;

// Borda points per candidate (profile.candidates order): M-1-p for position p.
std::vector<long> borda_scores(const Profile& profile);

// Inserts `clone_id` directly below `target` on every ballot.
Profile clone_insert(const Profile& profile, const std::string& target, const std::string& clone_id);

enum class ClonePlacement { kBelow, kAbove };
// Per-ballot placement of the clone next to `target`. The clone set stays
// contiguous on every ballot; `placement` must have one entry per ballot.
Profile clone_insert(const Profile& profile, const std::string& target, const std::string& clone_id,
                     std::span<const ClonePlacement> placement);

// Drops a candidate from the candidate list and from every ballot.
Profile remove_candidate(const Profile& profile, const std::string& candidate);

// Mean Spearman rank correlation over all unordered ballot pairs.
double mean_pairwise_spearman(const Profile& profile);

nlohmann::json to_json(const Profile& profile);
Profile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VoteOutcome& outcome);

}  // namespace apa::voting
