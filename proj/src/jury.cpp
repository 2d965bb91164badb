#include "apa/jury.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "apa/error.hpp"

namespace apa {

using nlohmann::json;

void JuryPool::validate() const {
  basis.validate();
  weights.validate(basis.K);
}

std::map<std::string, std::vector<std::string>> JuryPool::cohorts() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [id, e] : weights.entries) out[e.cohort_id].push_back(id);
  return out;
}

JurySpec select_jury(const JuryPool& pool, const std::map<std::string, std::size_t>& quotas,
                     std::uint64_t seed) {
  const auto groups = pool.cohorts();
  JurySpec spec;
  spec.seed = seed;
  spec.quotas = quotas;
  std::mt19937_64 rng(seed);
  for (const auto& [cohort, count] : quotas) {
    auto it = groups.find(cohort);
    if (it == groups.end()) throw Error("unknown_cohort", "no annotators in cohort '" + cohort + "'");
    if (count > it->second.size()) {
      throw Error("quota_exceeds_cohort", "quota " + std::to_string(count) + " for cohort '" + cohort +
                                              "' exceeds its " + std::to_string(it->second.size()) +
                                              " members");
    }
    // std::sample keeps the (sorted) input order of the chosen members.
    std::sample(it->second.begin(), it->second.end(), std::back_inserter(spec.juror_ids), count, rng);
  }
  return spec;
}

voting::Ballot rank_candidates(std::span<const double> juror_w, const BasisModel& basis,
                               const std::vector<std::string>& candidates, const ItemCatalog& catalog) {
  if (juror_w.size() != basis.K) throw Error("dimension", "juror weights do not match basis K");
  if (std::set<std::string>(candidates.begin(), candidates.end()).size() != candidates.size()) {
    throw Error("duplicate_candidate", "candidate list contains duplicates");
  }
  std::vector<double> scores(candidates.size());
  std::vector<double> values(basis.K);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    auto item = catalog.find(candidates[c]);
    if (!item) throw Error("unknown_candidate", "candidate '" + candidates[c] + "' is not in the catalog");
    basis_rewards_into(basis, catalog.embedding(*item), values);
    scores[c] = personal_reward(juror_w, values);
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  voting::Ballot ballot;
  for (std::size_t i : order) {
    ballot.ranking.push_back(candidates[i]);
    ballot.scores.push_back(scores[i]);
  }
  return ballot;
}

voting::Profile jury_profile(const JurySpec& jury, const JuryPool& pool,
                             const std::vector<std::string>& candidates, const ItemCatalog& catalog) {
  if (jury.juror_ids.empty()) throw Error("empty_jury", "jury has no members");
  if (candidates.empty()) throw Error("empty_candidates", "candidate set is empty");
  if (std::set<std::string>(jury.juror_ids.begin(), jury.juror_ids.end()).size() != jury.juror_ids.size()) {
    throw Error("duplicate_juror", "jury lists a juror more than once");
  }
  voting::Profile profile;
  profile.candidates = candidates;
  for (const auto& id : jury.juror_ids) {
    auto ballot = rank_candidates(pool.weights.at(id).w, pool.basis, candidates, catalog);
    ballot.juror_id = id;
    profile.ballots.push_back(std::move(ballot));
  }
  return profile;
}

FilterOutcome democratic_filter(const JurySpec& jury, const JuryPool& pool,
                                const std::vector<std::string>& candidates, const ItemCatalog& catalog,
                                voting::Rule rule, const std::string& question_id) {
  FilterOutcome out;
  out.question_id = question_id;
  out.candidates = candidates;
  out.rule = rule;
  out.profile = jury_profile(jury, pool, candidates, catalog);
  out.outcome = voting::apply_rule(rule, out.profile);
  return out;
}

JuryPool add_cohort(const JuryPool& pool, const WeightTable& new_weights, const std::string& cohort_id) {
  new_weights.validate(pool.basis.K);
  JuryPool out = pool;
  for (const auto& [id, e] : new_weights.entries) {
    if (out.weights.contains(id)) {
      throw Error("id_collision", "annotator '" + id + "' already exists in the juror pool");
    }
    WeightEntry entry = e;
    if (!cohort_id.empty()) entry.cohort_id = cohort_id;
    out.weights.entries.emplace(id, std::move(entry));
  }
  return out;
}

json to_json(const JurySpec& jury) {
  return json{{"juror_ids", jury.juror_ids}, {"seed", jury.seed}, {"quotas", jury.quotas}};
}

json to_json(const FilterOutcome& outcome) {
  return json{{"question_id", outcome.question_id},
              {"candidates", outcome.candidates},
              {"rule", voting::to_string(outcome.rule)},
              {"profile", voting::to_json(outcome.profile)},
              {"outcome", voting::to_json(outcome.outcome)}};
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_score_csv(std::ostream& out, const FilterOutcome& outcome) {
  out << "juror_id";
  for (const auto& c : outcome.candidates) out << ',' << csv_field(c);
  out << '\n';
  for (const auto& b : outcome.profile.ballots) {
    out << csv_field(b.juror_id);
    for (const auto& c : outcome.candidates) {
      auto pos = std::find(b.ranking.begin(), b.ranking.end(), c) - b.ranking.begin();
      out << ',' << (b.scores.empty() ? std::string{} : format_double(b.scores[pos]));
    }
    out << '\n';
  }
}

std::vector<std::string> parse_candidates(std::istream& in, const ItemCatalog& catalog) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line) + ": ";
    std::string id;
    try {
      json j = json::parse(text);
      if (j.is_string()) id = j.get<std::string>();
      else if (j.is_object() && j.contains("item_id") && j["item_id"].is_string()) id = j["item_id"];
      else throw Error("parse", where + "expected a string or an object with 'item_id'");
    } catch (const json::exception& e) {
      throw Error("parse", where + e.what());
    }
    if (!catalog.contains(id)) throw Error("unknown_item", where + "unknown item_id '" + id + "'");
    if (!seen.insert(id).second) throw Error("duplicate_candidate", where + "duplicate candidate '" + id + "'");
    out.push_back(std::move(id));
  }
  if (out.empty()) throw Error("empty_candidates", "candidate set is empty");
  return out;
}

std::vector<std::string> load_candidates(const std::filesystem::path& path, const ItemCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return parse_candidates(in, catalog);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::map<std::string, std::size_t> parse_quotas(const std::string& text) {
  std::map<std::string, std::size_t> quotas;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == part.size()) {
      throw Error("invalid_quota", "quota '" + part + "' is not of the form cohort=count");
    }
    const std::string cohort = part.substr(0, eq);
    const std::string count = part.substr(eq + 1);
    if (count.find_first_not_of("0123456789") != std::string::npos) {
      throw Error("invalid_quota", "quota count '" + count + "' is not a non-negative integer");
    }
    if (!quotas.emplace(cohort, std::stoul(count)).second) {
      throw Error("invalid_quota", "cohort '" + cohort + "' listed twice");
    }
  }
  if (quotas.empty()) throw Error("invalid_quota", "no quotas given");
  return quotas;
}

}  // namespace apa
