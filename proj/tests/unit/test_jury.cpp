#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "apa/error.hpp"
#include "apa/jury.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace apa;
using voting::Rule;

namespace {

JuryPool make_pool(std::size_t K, std::size_t d, const std::map<std::string, std::size_t>& sizes,
                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  JuryPool pool;
  pool.basis = BasisModel::zeros(K, d);
  for (double& t : pool.basis.theta) t = normal(rng);
  for (const auto& [cohort, n] : sizes) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(K);
      double s = 0.0;
      for (double& x : w) s += (x = unit(rng));
      for (double& x : w) x /= s;
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04zu", cohort.c_str(), i);
      pool.weights.entries.emplace(id, WeightEntry{cohort, w});
    }
  }
  return pool;
}

ItemCatalog random_catalog(std::size_t d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ItemCatalog c(d);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x) v = normal(rng);
    c.add("q" + std::to_string(100 + i), x);
  }
  return c;
}

std::vector<std::string> first_ids(const ItemCatalog& c, std::size_t n) {
  return {c.ids().begin(), c.ids().begin() + static_cast<long>(n)};
}

}  // namespace

TEST_CASE("select_jury draws distinct members per cohort") {
  const auto pool = make_pool(2, 3, {{"prism", 1029}, {"new", 10}}, 1);
  const auto jury = select_jury(pool, {{"prism", 10}}, 5);
  CHECK(jury.juror_ids.size() == 10);
  CHECK(std::set<std::string>(jury.juror_ids.begin(), jury.juror_ids.end()).size() == 10);
  for (const auto& id : jury.juror_ids) CHECK(pool.weights.at(id).cohort_id == "prism");
  CHECK(select_jury(pool, {{"prism", 10}}, 5) == jury);
  CHECK_FALSE(select_jury(pool, {{"prism", 10}}, 6) == jury);

  const auto mixed = select_jury(pool, {{"prism", 4}, {"new", 3}}, 2);
  CHECK(mixed.juror_ids.size() == 7);
  std::map<std::string, int> per;
  for (const auto& id : mixed.juror_ids) ++per[pool.weights.at(id).cohort_id];
  CHECK(per["prism"] == 4);
  CHECK(per["new"] == 3);

  const auto single = make_pool(2, 3, {{"A", 1}}, 2);
  CHECK(select_jury(single, {{"A", 1}}, 0).juror_ids == std::vector<std::string>{"A-0000"});

  CHECK_THROWS_AS(select_jury(pool, {{"nobody", 1}}, 0), Error);
  CHECK_THROWS_AS(select_jury(pool, {{"new", 11}}, 0), Error);
}

TEST_CASE("rank_candidates orders by personal reward") {
  auto basis = BasisModel::zeros(2, 2);
  basis.theta = {1.0, 0.0, 0.0, 1.0};
  ItemCatalog c(2);
  c.add("a", std::vector<double>{1.0, 0.0});
  c.add("b", std::vector<double>{0.0, 2.0});
  c.add("c", std::vector<double>{0.5, 0.5});
  auto ballot = rank_candidates(std::vector<double>{0.5, 0.5}, basis, {"a", "b"}, c);
  CHECK(ballot.ranking == std::vector<std::string>{"b", "a"});
  CHECK(ballot.scores == std::vector<double>{1.0, 0.5});

  ballot = rank_candidates(std::vector<double>{1.0, 0.0}, basis, {"a", "b", "c"}, c);
  CHECK(ballot.ranking == std::vector<std::string>{"a", "c", "b"});
  ballot = rank_candidates(std::vector<double>{0.0, 1.0}, basis, {"a", "b", "c"}, c);
  CHECK(ballot.ranking == std::vector<std::string>{"b", "c", "a"});

  c.add("twin-b", std::vector<double>{0.7, 0.7});
  c.add("twin-a", std::vector<double>{0.7, 0.7});
  ballot = rank_candidates(std::vector<double>{0.3, 0.7}, basis, {"twin-b", "twin-a"}, c);
  CHECK(ballot.ranking == std::vector<std::string>{"twin-a", "twin-b"});

  CHECK_THROWS_AS(rank_candidates(std::vector<double>{0.5, 0.5}, basis, {"a", "a"}, c), Error);
  CHECK_THROWS_AS(rank_candidates(std::vector<double>{0.5, 0.5}, basis, {"a", "zz"}, c), Error);
}

TEST_CASE("ballots are complete and score-monotone") {
  const auto pool = make_pool(3, 4, {{"x", 30}}, 3);
  auto cat = random_catalog(4, 12, 4);
  // Duplicate embeddings to exercise the tie rule.
  cat.add("dup-2", cat.embedding("q100"));
  cat.add("dup-1", cat.embedding("q100"));
  auto cands = first_ids(cat, 12);
  cands.push_back("dup-2");
  cands.push_back("dup-1");
  const auto jury = select_jury(pool, {{"x", 30}}, 1);
  const auto profile = jury_profile(jury, pool, cands, cat);
  CHECK_NOTHROW(profile.validate());
  for (const auto& b : profile.ballots) {
    for (std::size_t i = 1; i < b.ranking.size(); ++i) {
      CHECK(b.scores[i] <= b.scores[i - 1]);
      if (b.scores[i] == b.scores[i - 1]) CHECK(b.ranking[i - 1] < b.ranking[i]);
    }
  }
}

TEST_CASE("democratic_filter with a single juror is a dictatorship") {
  const auto pool = make_pool(3, 5, {{"x", 5}}, 5);
  const auto cat = random_catalog(5, 8, 6);
  const auto cands = first_ids(cat, 8);
  const auto jury = select_jury(pool, {{"x", 1}}, 9);
  const auto top = rank_candidates(pool.weights.at(jury.juror_ids[0]).w, pool.basis, cands, cat).ranking[0];
  for (Rule rule : voting::kAllRules) {
    const auto f = democratic_filter(jury, pool, cands, cat, rule, "q");
    CHECK(f.outcome.winner_set == std::vector<std::string>{top});
    CHECK(f.question_id == "q");
    CHECK(f.rule == rule);
  }
}

TEST_CASE("with two candidates every rule follows the pairwise majority") {
  const auto cat = random_catalog(4, 2, 7);
  const auto cands = first_ids(cat, 2);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto pool = make_pool(3, 4, {{"x", 9}}, 100 + seed);
    const auto jury = select_jury(pool, {{"x", 1 + seed % 9}}, seed);
    const auto profile = jury_profile(jury, pool, cands, cat);
    const auto m = voting::pairwise_margins(profile);
    std::vector<std::string> expected;
    if (m.at(0, 1) >= m.at(1, 0)) expected.push_back(cands[0]);
    if (m.at(1, 0) >= m.at(0, 1)) expected.push_back(cands[1]);
    std::sort(expected.begin(), expected.end());
    for (Rule rule : voting::kAllRules) {
      CHECK(democratic_filter(jury, pool, cands, cat, rule).outcome.winner_set == expected);
    }
  }
}

TEST_CASE("a large bloc sharing one weight vector decides every rule") {
  // With three candidates and a 7:3 split the bloc's favourite collects at
  // least 14 Borda points, any rival at most 7 + 6.
  auto pool = make_pool(3, 4, {}, 8);
  const auto cat = random_catalog(4, 3, 9);
  const auto cands = first_ids(cat, 3);
  for (int i = 0; i < 7; ++i) pool.weights.entries.emplace("maj-" + std::to_string(i), WeightEntry{"maj", {0.7, 0.2, 0.1}});
  for (int i = 0; i < 3; ++i) pool.weights.entries.emplace("min-" + std::to_string(i), WeightEntry{"min", {0.0, 0.1, 0.9}});
  const auto jury = select_jury(pool, {{"maj", 7}, {"min", 3}}, 0);
  const auto fav = rank_candidates(std::vector<double>{0.7, 0.2, 0.1}, pool.basis, cands, cat).ranking[0];
  for (Rule rule : voting::kAllRules) {
    CHECK(democratic_filter(jury, pool, cands, cat, rule).outcome.winner_set == std::vector<std::string>{fav});
  }
}

TEST_CASE("outcomes are invariant to positive affine reward changes") {
  const auto pool = make_pool(3, 4, {{"x", 12}}, 10);
  const auto cat = random_catalog(4, 9, 11);
  const auto cands = first_ids(cat, 9);
  const auto jury = select_jury(pool, {{"x", 12}}, 3);
  auto scaled = pool;
  // Each reward becomes 3r + 1.5 because every weight vector sums to one.
  for (double& t : scaled.basis.theta) t *= 3.0;
  for (double& b : scaled.basis.bias) b = 3.0 * b + 1.5;
  for (Rule rule : voting::kAllRules) {
    const auto a = democratic_filter(jury, pool, cands, cat, rule);
    const auto b = democratic_filter(jury, scaled, cands, cat, rule);
    for (std::size_t i = 0; i < a.profile.ballots.size(); ++i) {
      CHECK(a.profile.ballots[i].ranking == b.profile.ballots[i].ranking);
    }
    CHECK(a.outcome.winner_set == b.outcome.winner_set);
    CHECK(a.outcome.audit == b.outcome.audit);
  }
}

TEST_CASE("democratic_filter leaves the pool untouched") {
  const auto pool = make_pool(2, 3, {{"x", 6}}, 12);
  const auto before_basis = to_json(pool.basis).dump();
  const auto before_weights = to_json(pool.weights).dump();
  const auto cat = random_catalog(3, 5, 13);
  const auto jury = select_jury(pool, {{"x", 6}}, 1);
  for (Rule rule : voting::kAllRules) (void)democratic_filter(jury, pool, first_ids(cat, 5), cat, rule);
  CHECK(to_json(pool.basis).dump() == before_basis);
  CHECK(to_json(pool.weights).dump() == before_weights);
}

TEST_CASE("democratic_filter input errors") {
  const auto pool = make_pool(2, 3, {{"x", 3}}, 14);
  const auto cat = random_catalog(3, 4, 15);
  JurySpec empty;
  CHECK_THROWS_AS(democratic_filter(empty, pool, first_ids(cat, 4), cat, Rule::kBorda), Error);
  const auto jury = select_jury(pool, {{"x", 2}}, 0);
  CHECK_THROWS_AS(democratic_filter(jury, pool, {}, cat, Rule::kBorda), Error);
  JurySpec dup{{"x-0000", "x-0000"}, 0, {}};
  CHECK_THROWS_AS(democratic_filter(dup, pool, first_ids(cat, 4), cat, Rule::kBorda), Error);
}

TEST_CASE("add_cohort") {
  const auto pool = make_pool(2, 3, {{"prism", 1029}}, 16);
  const auto extra = make_pool(2, 3, {{"tmp", 10}}, 17);
  const auto grown = add_cohort(pool, extra.weights, "16c");
  CHECK(grown.weights.size() == 1039);
  CHECK(grown.weights.at("tmp-0003").cohort_id == "16c");
  CHECK(grown.cohorts().at("16c").size() == 10);
  CHECK(to_json(grown.basis) == to_json(pool.basis));

  const auto same = add_cohort(pool, WeightTable{}, "none");
  CHECK(same.weights == pool.weights);

  const auto kept = add_cohort(pool, extra.weights, "");
  CHECK(kept.weights.at("tmp-0003").cohort_id == "tmp");

  WeightTable clash;
  clash.entries.emplace("prism-0007", WeightEntry{"x", {0.5, 0.5}});
  try {
    (void)add_cohort(pool, clash, "x");
    FAIL("expected a collision");
  } catch (const Error& e) {
    CHECK(e.code() == "id_collision");
    CHECK(std::string(e.what()).find("prism-0007") != std::string::npos);
  }
}

TEST_CASE("candidate files and quota strings") {
  const auto cat = random_catalog(2, 3, 18);
  std::istringstream in("\"q100\"\n{\"item_id\": \"q102\"}\n\n");
  CHECK(parse_candidates(in, cat) == std::vector<std::string>{"q100", "q102"});
  std::istringstream bad("\"q999\"\n");
  CHECK_THROWS_AS(parse_candidates(bad, cat), Error);
  std::istringstream dup("\"q100\"\n\"q100\"\n");
  CHECK_THROWS_AS(parse_candidates(dup, cat), Error);

  CHECK(parse_quotas("a=1,b=20") == std::map<std::string, std::size_t>{{"a", 1}, {"b", 20}});
  CHECK_THROWS_AS(parse_quotas("a"), Error);
  CHECK_THROWS_AS(parse_quotas("a=x"), Error);
  CHECK_THROWS_AS(parse_quotas("a=-1"), Error);
}

TEST_CASE("score CSV and outcome JSON") {
  const auto pool = make_pool(2, 3, {{"x", 2}}, 19);
  const auto cat = random_catalog(3, 3, 20);
  const auto jury = select_jury(pool, {{"x", 2}}, 0);
  const auto f = democratic_filter(jury, pool, first_ids(cat, 3), cat, Rule::kCopeland, "q1");
  std::ostringstream csv;
  write_score_csv(csv, f);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "juror_id,q100,q101,q102");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 2);
  const auto j = to_json(f);
  CHECK(j["question_id"] == "q1");
  CHECK(j["outcome"]["rule"] == "copeland");
  CHECK(j["profile"]["ballots"].size() == 2);
}
