#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "apa/preference_data.hpp"
#include "apa/reward_basis.hpp"
#include "apa/voting.hpp"
#include "json.hpp"

namespace apa {

// Frozen reward bases plus every annotator whose weights are available for
// jury duty, across all cohorts.
struct JuryPool {
  BasisModel basis;
  WeightTable weights;

  // Throws apa::Error("dimension") when a weight vector does not match basis.K.
  void validate() const;
  // Annotator ids grouped by cohort, both levels sorted.
  std::map<std::string, std::vector<std::string>> cohorts() const;
};

struct JurySpec {
  std::vector<std::string> juror_ids;  // cohort-sorted, then id-sorted
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> quotas;

  bool operator==(const JurySpec&) const = default;
};

// Stratified sampling: `quotas[c]` members drawn uniformly without
// replacement from cohort c.
JurySpec select_jury(const JuryPool& pool, const std::map<std::string, std::size_t>& quotas,
                     std::uint64_t seed);

// Ranks candidates by the juror's personal reward, descending; equal scores
// are ordered by ascending candidate id. Scores are kept on the ballot.
voting::Ballot rank_candidates(std::span<const double> juror_w, const BasisModel& basis,
                               const std::vector<std::string>& candidates, const ItemCatalog& catalog);

struct FilterOutcome {
  std::string question_id;
  std::vector<std::string> candidates;
  voting::Profile profile;  // one scored ballot per juror, in jury order
  voting::Rule rule = voting::Rule::kIrvPut;
  voting::VoteOutcome outcome;
};

FilterOutcome democratic_filter(const JurySpec& jury, const JuryPool& pool,
                                const std::vector<std::string>& candidates, const ItemCatalog& catalog,
                                voting::Rule rule, const std::string& question_id = {});

// Builds the jurors' scored profile without applying a rule.
voting::Profile jury_profile(const JurySpec& jury, const JuryPool& pool,
                             const std::vector<std::string>& candidates, const ItemCatalog& catalog);

// Disjoint union of the pool with `new_weights`, every new entry tagged with
// `cohort_id` (entries keep their own tag when cohort_id is empty).
JuryPool add_cohort(const JuryPool& pool, const WeightTable& new_weights, const std::string& cohort_id);

nlohmann::json to_json(const JurySpec& jury);
nlohmann::json to_json(const FilterOutcome& outcome);
// Juror x candidate score matrix; columns follow the candidate list order.
void write_score_csv(std::ostream& out, const FilterOutcome& outcome);

// Candidate slate file: one JSON value per line, either "id" or {"item_id": "id"}.
std::vector<std::string> load_candidates(const std::filesystem::path& path, const ItemCatalog& catalog);
std::vector<std::string> parse_candidates(std::istream& in, const ItemCatalog& catalog);

// Parses "cohort=count,cohort=count".
std::map<std::string, std::size_t> parse_quotas(const std::string& text);

}  // namespace apa
