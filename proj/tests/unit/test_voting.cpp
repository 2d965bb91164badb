#include <algorithm>
#include <random>

#include "apa/error.hpp"
#include "apa/voting.hpp"
#include "doctest.h"
#include "voting_oracles.hpp"

using namespace apa;
using namespace apa::voting;
using apa::test::as_set;
using apa::test::make_profile;

namespace {

using Set = std::set<std::string>;

const std::vector<std::string> kAbc{"a", "b", "c"};

Profile cycle_profile() { return make_profile(kAbc, {{"a", "b", "c"}, {"b", "c", "a"}, {"c", "a", "b"}}); }

std::size_t pos(const Profile& p, const std::string& id) {
  return std::find(p.candidates.begin(), p.candidates.end(), id) - p.candidates.begin();
}

// Scores straight from the ballots, for cross-checking the rule audits.
std::map<std::string, long> count_borda(const Profile& p) {
  std::map<std::string, long> s;
  for (const auto& b : p.ballots) {
    for (std::size_t i = 0; i < b.ranking.size(); ++i) s[b.ranking[i]] += static_cast<long>(b.ranking.size() - 1 - i);
  }
  return s;
}

}  // namespace

TEST_CASE("profile validation") {
  CHECK_NOTHROW(cycle_profile().validate());
  CHECK_THROWS_AS(make_profile({}, {{}}).validate(), Error);
  CHECK_THROWS_AS(make_profile(kAbc, {}).validate(), Error);
  CHECK_THROWS_AS(make_profile(kAbc, {{"a", "b"}}).validate(), Error);
  CHECK_THROWS_AS(make_profile(kAbc, {{"a", "b", "b"}}).validate(), Error);
  CHECK_THROWS_AS(make_profile(kAbc, {{"a", "b", "z"}}).validate(), Error);
  CHECK_THROWS_AS(make_profile({"a", "a"}, {{"a", "a"}}).validate(), Error);
  CHECK_THROWS_AS(plurality(make_profile(kAbc, {{"a", "b"}})), Error);
}

TEST_CASE("pairwise margins") {
  auto m = pairwise_margins(make_profile(kAbc, {{"a", "b", "c"}}));
  CHECK(m.at(0, 1) == 1);
  CHECK(m.at(0, 2) == 1);
  CHECK(m.at(1, 2) == 1);
  CHECK(m.at(1, 0) == 0);
  CHECK(m.at(2, 0) == 0);
  CHECK(m.at(2, 1) == 0);

  m = pairwise_margins(make_profile({"a", "b"}, {{"a", "b"}, {"b", "a"}}));
  CHECK(m.at(0, 1) == 1);
  CHECK(m.at(1, 0) == 1);

  m = pairwise_margins(cycle_profile());
  CHECK(m.at(0, 1) == 2);  // a over b
  CHECK(m.at(1, 2) == 2);  // b over c
  CHECK(m.at(2, 0) == 2);  // c over a
  CHECK(m.at(1, 0) == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.at(i, i) == 0);
}

TEST_CASE("condorcet winner") {
  CHECK(condorcet_winner(make_profile(kAbc, {{"b", "a", "c"}, {"b", "c", "a"}})) == "b");
  CHECK_FALSE(condorcet_winner(cycle_profile()).has_value());
  CHECK(condorcet_winner(make_profile({"x"}, {{"x"}})) == "x");
  CHECK_FALSE(condorcet_winner(make_profile({"a", "b"}, {{"a", "b"}, {"b", "a"}})).has_value());
}

TEST_CASE("plurality") {
  auto o = plurality(make_profile({"a", "b"}, {{"a", "b"}, {"a", "b"}, {"b", "a"}}));
  CHECK(o.winner_set == std::vector<std::string>{"a"});
  CHECK(o.audit["first_place_tallies"]["a"] == 2);

  o = plurality(make_profile({"b", "a"}, {{"b", "a"}, {"a", "b"}}));
  CHECK(o.winner_set == std::vector<std::string>{"a", "b"});
  CHECK(o.selected == "a");

  o = plurality(make_profile(kAbc, {{"a", "b", "c"}, {"a", "c", "b"}, {"b", "a", "c"}, {"b", "c", "a"}, {"c", "a", "b"}}));
  CHECK(o.winner_set == std::vector<std::string>{"a", "b"});
  CHECK(o.rule == Rule::kPlurality);
}

TEST_CASE("borda") {
  auto o = borda(make_profile(kAbc, {{"c", "a", "b"}, {"c", "a", "b"}, {"c", "b", "a"}}));
  CHECK(o.winner_set == std::vector<std::string>{"c"});
  CHECK(o.audit["scores"]["c"] == 3 * 2);

  o = borda(make_profile(kAbc, {{"a", "b", "c"}, {"c", "b", "a"}}));
  CHECK(o.winner_set == kAbc);
  CHECK(borda_scores(make_profile(kAbc, {{"a", "b", "c"}, {"c", "b", "a"}})) == std::vector<long>{2, 2, 2});
}

TEST_CASE("copeland") {
  auto p = make_profile(kAbc, {{"b", "a", "c"}, {"b", "c", "a"}, {"a", "b", "c"}});
  auto o = copeland(p);
  CHECK(o.winner_set == std::vector<std::string>{"b"});
  CHECK(o.audit["scores"]["b"] == 2);

  o = copeland(cycle_profile());
  CHECK(o.winner_set == kAbc);
  for (const auto& c : kAbc) CHECK(o.audit["scores"][c] == 0);

  o = copeland(make_profile({"x"}, {{"x"}, {"x"}}));
  CHECK(o.winner_set == std::vector<std::string>{"x"});
  CHECK(o.audit["scores"]["x"] == 0);
}

TEST_CASE("irv_put examples") {
  auto o = irv_put(make_profile(kAbc, {{"c", "a", "b"}, {"c", "b", "a"}, {"a", "b", "c"}}));
  CHECK(o.winner_set == std::vector<std::string>{"c"});

  o = irv_put(make_profile(
      kAbc, {{"a", "b", "c"}, {"a", "b", "c"}, {"b", "a", "c"}, {"b", "a", "c"}, {"c", "a", "b"}}));
  CHECK(o.winner_set == std::vector<std::string>{"a"});

  // b and c tie for last. Dropping b makes a win; dropping c leaves a vs d
  // and d wins.
  const std::vector<std::string> abcd{"a", "b", "c", "d"};
  auto p = make_profile(abcd, {{"a", "b", "c", "d"},
                               {"a", "b", "c", "d"},
                               {"a", "d", "c", "b"},
                               {"d", "b", "c", "a"},
                               {"d", "c", "b", "a"},
                               {"d", "c", "a", "b"},
                               {"b", "a", "d", "c"},
                               {"c", "d", "a", "b"}});
  o = irv_put(p);
  CHECK(as_set(o.winner_set) == test::irv_oracle(p));
  CHECK(o.winner_set.size() >= 2);
  CHECK(o.audit.contains("elimination_states"));

  // Every candidate tied at the top level: all win.
  o = irv_put(cycle_profile());
  CHECK(o.winner_set == kAbc);
  CHECK(o.selected == "a");

  o = irv_put(make_profile({"x"}, {{"x"}}));
  CHECK(o.winner_set == std::vector<std::string>{"x"});
}

TEST_CASE("irv_put rejects more than 16 candidates") {
  std::mt19937_64 rng(1);
  std::vector<std::string> cands;
  for (int i = 0; i < 17; ++i) cands.push_back("c" + std::to_string(i + 10));
  auto r = cands;
  std::shuffle(r.begin(), r.end(), rng);
  CHECK_THROWS_AS(irv_put(make_profile(cands, {r})), Error);
  cands.pop_back();
  r = cands;
  CHECK_NOTHROW(irv_put(make_profile(cands, {r})));
}

TEST_CASE("irv_put matches the elimination-order oracle on small profiles") {
  std::size_t count = 0;
  test::for_each_small_profile(3, 4, [&](const Profile& p) {
    ++count;
    REQUIRE(as_set(irv_put(p).winner_set) == test::irv_oracle(p));
  });
  CHECK(count > 100);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto p = test::random_profile(rng, 2 + rng() % 5, 1 + rng() % 9);
    CHECK(as_set(irv_put(p).winner_set) == test::irv_oracle(p));
  }
}

TEST_CASE("every rule is anonymous and neutral up to tie-break") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    const auto p = test::random_profile(rng, 1 + rng() % 6, 1 + rng() % 8);
    auto shuffled = p;
    std::shuffle(shuffled.ballots.begin(), shuffled.ballots.end(), rng);

    // Relabel with a random bijection onto fresh names.
    auto targets = p.candidates;
    std::shuffle(targets.begin(), targets.end(), rng);
    std::map<std::string, std::string> pi;
    for (std::size_t i = 0; i < targets.size(); ++i) pi[p.candidates[i]] = "z" + targets[i];
    auto relabelled = p;
    for (auto& c : relabelled.candidates) c = pi[c];
    for (auto& b : relabelled.ballots) {
      for (auto& c : b.ranking) c = pi[c];
    }

    for (Rule rule : kAllRules) {
      const auto base = apply_rule(rule, p);
      CHECK(apply_rule(rule, shuffled).winner_set == base.winner_set);
      Set mapped;
      for (const auto& w : base.winner_set) mapped.insert(pi[w]);
      CHECK(as_set(apply_rule(rule, relabelled).winner_set) == mapped);
      CHECK(std::find(base.winner_set.begin(), base.winner_set.end(), base.selected) != base.winner_set.end());
      CHECK(base.selected == base.winner_set.front());
    }
  }
}

TEST_CASE("copeland is condorcet consistent and borda is the pairwise sum") {
  auto check = [](const Profile& p) {
    const auto m = pairwise_margins(p);
    const auto cw = condorcet_winner(p);
    if (cw) REQUIRE(copeland(p).winner_set == std::vector<std::string>{*cw});
    const auto scores = borda_scores(p);
    const auto direct = count_borda(p);
    for (std::size_t a = 0; a < p.candidates.size(); ++a) {
      long sum = 0;
      for (std::size_t b = 0; b < p.candidates.size(); ++b) sum += m.at(a, b);
      REQUIRE(scores[a] == sum);
      REQUIRE(direct.at(p.candidates[a]) == sum);
      for (std::size_t b = 0; b < p.candidates.size(); ++b) {
        if (a != b) REQUIRE(m.at(a, b) + m.at(b, a) == static_cast<int>(p.ballots.size()));
      }
    }
  };
  test::for_each_small_profile(3, 5, check);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) check(test::random_profile(rng, 5 + rng() % 4, 6 + rng() % 10));
}

TEST_CASE("clone_insert") {
  auto p = make_profile({"a", "b"}, {{"a", "b"}});
  auto c = clone_insert(p, "a", "a2");
  CHECK(c.ballots[0].ranking == std::vector<std::string>{"a", "a2", "b"});
  CHECK(c.candidates.size() == 3);
  CHECK(remove_candidate(c, "a2") == p);
  CHECK_THROWS_AS(clone_insert(p, "a", "b"), Error);
  CHECK_THROWS_AS(clone_insert(p, "q", "q2"), Error);

  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto q = test::random_profile(rng, 1 + rng() % 6, 1 + rng() % 7);
    const auto& target = q.candidates[rng() % q.candidates.size()];
    const auto cq = clone_insert(q, target, "clone");
    CHECK_NOTHROW(cq.validate());
    for (const auto& b : cq.ballots) {
      const auto it = std::find(b.ranking.begin(), b.ranking.end(), target);
      REQUIRE(it + 1 != b.ranking.end());
      CHECK(*(it + 1) == "clone");
    }
    CHECK(remove_candidate(cq, "clone") == q);
  }
}

TEST_CASE("irv_put is independent of clones") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 500; ++t) {
    const auto p = test::random_profile(rng, 2 + rng() % 5, 1 + rng() % 9);
    const auto target = p.candidates[rng() % p.candidates.size()];
    const auto before = as_set(irv_put(p).winner_set);
    Set after;
    for (const auto& w : irv_put(clone_insert(p, target, "zz")).winner_set) after.insert(w == "zz" ? target : w);
    CHECK(after == before);
  }
}

TEST_CASE("plurality is not independent of clones") {
  // a wins 4-3; a clone ranked above a on two ballots splits a's vote.
  const auto p = make_profile({"a", "b"}, {{"a", "b"}, {"a", "b"}, {"a", "b"}, {"a", "b"},
                                           {"b", "a"}, {"b", "a"}, {"b", "a"}});
  CHECK(plurality(p).winner_set == std::vector<std::string>{"a"});
  using P = ClonePlacement;
  const std::vector<P> placement{P::kAbove, P::kAbove, P::kBelow, P::kBelow, P::kBelow, P::kBelow, P::kBelow};
  const auto cloned = clone_insert(p, "a", "a2", placement);
  CHECK(cloned.ballots[0].ranking == std::vector<std::string>{"a2", "a", "b"});
  CHECK(plurality(cloned).winner_set == std::vector<std::string>{"b"});
  // IRV-PUT keeps the winner inside the clone set on the same profile.
  const auto irv = as_set(irv_put(cloned).winner_set);
  CHECK_FALSE(irv.count("b"));
}

TEST_CASE("mean pairwise spearman") {
  CHECK(mean_pairwise_spearman(make_profile(kAbc, {{"a", "b", "c"}, {"a", "b", "c"}})) == 1.0);
  CHECK(mean_pairwise_spearman(make_profile(kAbc, {{"a", "b", "c"}, {"c", "b", "a"}})) == -1.0);
  CHECK(mean_pairwise_spearman(make_profile(kAbc, {{"a", "b", "c"}, {"a", "c", "b"}})) == doctest::Approx(0.5));
  // Pairs: (abc, acb) 0.5, (abc, cba) -1, (acb, cba) -0.5.
  CHECK(mean_pairwise_spearman(make_profile(kAbc, {{"a", "b", "c"}, {"a", "c", "b"}, {"c", "b", "a"}})) ==
        doctest::Approx(-1.0 / 3.0));
  CHECK_THROWS_AS(mean_pairwise_spearman(make_profile(kAbc, {{"a", "b", "c"}})), Error);
  CHECK_THROWS_AS(mean_pairwise_spearman(make_profile({"a"}, {{"a"}, {"a"}})), Error);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const double rho = mean_pairwise_spearman(test::random_profile(rng, 2 + rng() % 8, 2 + rng() % 6));
    CHECK(rho >= -1.0);
    CHECK(rho <= 1.0);
  }
}

TEST_CASE("rule names and JSON") {
  for (Rule r : kAllRules) CHECK(parse_rule(to_string(r)) == r);
  CHECK(std::string(display_name(Rule::kIrvPut)) == "IRV-PUT");
  CHECK_THROWS_AS(parse_rule("approval"), Error);
  const auto p = cycle_profile();
  CHECK(profile_from_json(to_json(p)) == p);
  const auto j = to_json(copeland(p));
  CHECK(j["rule"] == "copeland");
  CHECK(j["selected"] == "a");
  CHECK(j["audit"].contains("pairwise"));
}
