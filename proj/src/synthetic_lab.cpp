#include "apa/synthetic_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "apa/error.hpp"
#include "apa/kernels.hpp"

namespace apa::lab {

using nlohmann::json;

WeightDistribution WeightDistribution::dirichlet(double alpha) {
  WeightDistribution d;
  d.kind = Kind::kDirichlet;
  d.alpha = {alpha};
  return d;
}

WeightDistribution WeightDistribution::one_hot(std::vector<double> p, double epsilon) {
  WeightDistribution d;
  d.kind = Kind::kOneHotMixture;
  d.p = std::move(p);
  d.alpha.clear();
  d.epsilon = epsilon;
  return d;
}

namespace {

std::string padded(const std::string& prefix, std::size_t i, std::size_t count) {
  const int width = std::max<int>(3, static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return prefix + "-" + buf;
}

std::vector<double> sample_dirichlet(std::mt19937_64& rng, const std::vector<double>& alpha, std::size_t K) {
  std::vector<double> w(K);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    std::gamma_distribution<double> gamma(alpha.size() == 1 ? alpha[0] : alpha[k], 1.0);
    w[k] = gamma(rng);
    sum += w[k];
  }
  if (!(sum > 0.0)) {
    // Tiny concentrations can underflow every draw; fall back to a vertex.
    std::uniform_int_distribution<std::size_t> pick(0, K - 1);
    std::fill(w.begin(), w.end(), 0.0);
    w[pick(rng)] = 1.0;
    return w;
  }
  for (double& x : w) x /= sum;
  return w;
}

void validate_distribution(const WeightDistribution& dist, std::size_t K, const std::string& cohort) {
  auto fail = [&](const std::string& what) { throw Error("invalid_spec", "cohort '" + cohort + "': " + what); };
  if (dist.kind == WeightDistribution::Kind::kDirichlet) {
    if (dist.alpha.size() != 1 && dist.alpha.size() != K) fail("dirichlet alpha must have 1 or K entries");
    for (double a : dist.alpha) {
      if (!(a > 0.0) || !std::isfinite(a)) fail("dirichlet alpha must be positive");
    }
  } else {
    if (dist.p.size() != K) fail("one_hot_mixture p must have K entries");
    double sum = 0.0;
    for (double x : dist.p) {
      if (!(x >= 0.0) || !std::isfinite(x)) fail("one_hot_mixture p must be non-negative");
      sum += x;
    }
    if (!(sum > 0.0)) fail("one_hot_mixture p must have positive mass");
    if (!(dist.epsilon >= 0.0 && dist.epsilon <= 1.0)) fail("epsilon must lie in [0, 1]");
  }
}

std::vector<double> sample_weights(std::mt19937_64& rng, const WeightDistribution& dist, std::size_t K) {
  if (dist.kind == WeightDistribution::Kind::kDirichlet) return sample_dirichlet(rng, dist.alpha, K);
  std::discrete_distribution<std::size_t> pick(dist.p.begin(), dist.p.end());
  std::vector<double> w(K, 0.0);
  w[pick(rng)] = 1.0;
  if (dist.epsilon > 0.0) {
    const auto u = sample_dirichlet(rng, {1.0}, K);
    for (std::size_t k = 0; k < K; ++k) w[k] = (1.0 - dist.epsilon) * w[k] + dist.epsilon * u[k];
  }
  return w;
}

// Rewards of every catalog item for one annotator.
std::vector<double> annotator_rewards(const std::vector<double>& item_values, std::span<const double> w) {
  const std::size_t K = w.size();
  const std::size_t n = item_values.size() / K;
  std::vector<double> r(n);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < n; ++i) r[i] = k.dot(w.data(), item_values.data() + i * K, K);
  return r;
}

PreferenceDataset simulate_for(const GroundTruth& truth, const std::vector<std::string>& annotators,
                               std::size_t per_annotator, double beta, std::uint64_t seed) {
  const std::size_t n = truth.catalog.size();
  if (n < 2) throw Error("catalog_too_small", "simulation needs at least 2 catalog items");
  const auto values = item_basis_values(truth.basis, truth.catalog);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PreferenceDataset data;
  data.provenance = "synthetic";
  data.records.reserve(annotators.size() * per_annotator);
  for (const auto& id : annotators) {
    const auto& entry = truth.weights.at(id);
    const auto rewards = annotator_rewards(values, entry.w);
    for (std::size_t t = 0; t < per_annotator; ++t) {
      const std::size_t i = first(rng);
      std::size_t j = second(rng);
      if (j >= i) ++j;
      const bool pick_i = unit(rng) < bt_prob(rewards[i], rewards[j], beta);
      const std::size_t chosen = pick_i ? i : j;
      const std::size_t rejected = pick_i ? j : i;
      data.records.push_back({id, entry.cohort_id, truth.catalog.id(chosen), truth.catalog.id(rejected)});
    }
  }
  return data;
}

std::vector<std::string> cohort_members(const WeightTable& weights, const std::string& cohort) {
  std::vector<std::string> out;
  for (const auto& [id, e] : weights.entries) {
    if (e.cohort_id == cohort) out.push_back(id);
  }
  return out;
}

}  // namespace

GroundTruth generate_ground_truth(std::size_t K, std::size_t d, const std::vector<CohortSpec>& cohorts,
                                  std::uint64_t seed, std::size_t num_items) {
  if (K < 1 || d < 1) throw Error("invalid_spec", "ground truth needs K >= 1 and d >= 1");
  if (num_items < 1) throw Error("invalid_spec", "ground truth needs at least one item");
  if (cohorts.empty()) throw Error("invalid_spec", "ground truth needs at least one cohort");
  std::set<std::string> seen;
  for (const auto& c : cohorts) {
    if (c.id.empty()) throw Error("invalid_spec", "cohort id must be non-empty");
    if (!seen.insert(c.id).second) throw Error("invalid_spec", "duplicate cohort '" + c.id + "'");
    if (c.size < 1) throw Error("invalid_spec", "cohort '" + c.id + "' must have at least one member");
    validate_distribution(c.weights, K, c.id);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GroundTruth truth;
  truth.catalog = ItemCatalog(d);
  std::vector<double> emb(d);
  for (std::size_t i = 0; i < num_items; ++i) {
    for (double& x : emb) x = normal(rng);
    truth.catalog.add(padded("item", i, num_items), emb);
  }
  truth.basis = BasisModel::zeros(K, d, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& t : truth.basis.theta) t = scale * normal(rng);
  for (const auto& c : cohorts) {
    for (std::size_t i = 0; i < c.size; ++i) {
      truth.weights.entries.emplace(padded(c.id, i, c.size), WeightEntry{c.id, sample_weights(rng, c.weights, K)});
    }
  }
  return truth;
}

PreferenceDataset simulate_comparisons(const GroundTruth& truth, std::size_t per_annotator, double beta,
                                       std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& [id, e] : truth.weights.entries) ids.push_back(id);
  return simulate_for(truth, ids, per_annotator, beta, seed);
}

std::vector<std::pair<std::size_t, std::size_t>> sample_questions(std::size_t num_items, std::size_t count,
                                                                  std::uint64_t seed) {
  if (num_items < 2) throw Error("catalog_too_small", "questions need at least 2 catalog items");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, num_items - 1);
  std::uniform_int_distribution<std::size_t> second(0, num_items - 2);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    out.emplace_back(i, j);
  }
  return out;
}

PreferenceDataset simulate_questions(const GroundTruth& truth, const std::vector<std::string>& annotators,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& questions,
                                     double beta, std::uint64_t seed) {
  const auto values = item_basis_values(truth.basis, truth.catalog);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PreferenceDataset data;
  data.provenance = "synthetic-questions";
  for (const auto& id : annotators) {
    const auto& entry = truth.weights.at(id);
    const auto rewards = annotator_rewards(values, entry.w);
    for (const auto& [i, j] : questions) {
      if (i >= truth.catalog.size() || j >= truth.catalog.size() || i == j) {
        throw Error("invalid_argument", "question refers to an invalid item pair");
      }
      const bool pick_i = unit(rng) < bt_prob(rewards[i], rewards[j], beta);
      data.records.push_back({id, entry.cohort_id, truth.catalog.id(pick_i ? i : j), truth.catalog.id(pick_i ? j : i)});
    }
  }
  return data;
}

double preference_accuracy(const BasisModel& basis, const WeightTable& weights, const PreferenceDataset& data,
                           const ItemCatalog& catalog) {
  if (data.empty()) throw Error("empty_dataset", "accuracy of an empty dataset is undefined");
  const auto index = index_preferences(data, catalog);
  const auto values = item_basis_values(basis, catalog);
  const auto flat = gather_weights(weights, index, basis.K);
  const std::size_t K = basis.K;
  const auto& k = kernels::active();
  double correct = 0.0;
  for (const auto& row : index.rows) {
    const double* w = flat.data() + row.annotator * K;
    const double r_i = k.dot(w, values.data() + row.chosen * K, K);
    const double r_j = k.dot(w, values.data() + row.rejected * K, K);
    if (r_i > r_j) correct += 1.0;
    else if (r_i == r_j) correct += 0.5;
  }
  return correct / static_cast<double>(index.rows.size());
}

double aligned_weight_error(const WeightTable& fitted, const WeightTable& truth, std::size_t K) {
  if (K < 1 || K > 8) throw Error("invalid_argument", "weight alignment supports 1 <= K <= 8");
  std::vector<std::string> ids;
  for (const auto& [id, e] : truth.entries) {
    if (fitted.contains(id)) ids.push_back(id);
  }
  if (ids.empty()) throw Error("invalid_argument", "no annotators in common");
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (const auto& id : ids) {
      const auto& wf = fitted.at(id).w;
      const auto& wt = truth.at(id).w;
      double tv = 0.0;
      for (std::size_t k = 0; k < K; ++k) tv += std::abs(wf[perm[k]] - wt[k]);
      total += 0.5 * tv;
    }
    best = std::min(best, total / static_cast<double>(ids.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------

TrainConfig RecoveryConfig::default_train() {
  TrainConfig cfg;
  cfg.K = 4;
  cfg.lr_theta = 2.0;
  cfg.lr_w = 2.0;
  cfg.max_epochs = 500;
  cfg.tolerance = 1e-6;
  cfg.init_scale = 0.1;
  return cfg;
}

RecoveryResult recovery_experiment(const RecoveryConfig& config) {
  if (config.per_annotator < 2) {
    throw Error("invalid_config", "recovery needs at least 2 comparisons per annotator");
  }
  RecoveryResult result;
  result.config = config;
  const auto truth = generate_ground_truth(config.K_true, config.d, {CohortSpec{"base", config.annotators, config.weights}},
                                           config.seed, config.num_items);
  const auto data = simulate_comparisons(truth, config.per_annotator, config.beta, config.seed + 1);
  const auto split = split_holdout(data, config.holdout_fraction, config.seed + 2);
  if (split.train.empty()) throw Error("empty_dataset", "no training comparisons left after the holdout split");

  TrainConfig train = config.train;
  train.beta = config.beta;
  result.fit = train_joint(split.train, truth.catalog, train);
  result.fitted_accuracy = preference_accuracy(result.fit.basis, result.fit.weights, split.holdout, truth.catalog);
  result.truth_accuracy = preference_accuracy(truth.basis, truth.weights, split.holdout, truth.catalog);
  const double n = static_cast<double>(split.holdout.size());
  result.fitted_holdout_nll = dataset_nll(result.fit.basis, result.fit.weights, split.holdout, truth.catalog) / n;
  BasisModel truth_basis = truth.basis;
  truth_basis.beta = config.beta;
  result.truth_holdout_nll = dataset_nll(truth_basis, truth.weights, split.holdout, truth.catalog) / n;
  if (train.K == config.K_true && train.K <= 8) {
    result.weight_error = aligned_weight_error(result.fit.weights, truth.weights, train.K);
  }
  result.passed = result.fitted_accuracy >= result.truth_accuracy - config.margin;
  return result;
}

AdaptationResult adaptation_experiment(const AdaptationConfig& config) {
  AdaptationResult result;
  result.config = config;
  const auto& base = config.base;
  if (config.few < 1 || config.many < 1 || config.holdout_per_annotator < 1) {
    throw Error("invalid_config", "adaptation needs positive comparison counts");
  }
  const auto truth = generate_ground_truth(
      base.K_true, base.d,
      {CohortSpec{"base", base.annotators, base.weights}, CohortSpec{"new", config.new_annotators, config.new_weights}},
      base.seed, base.num_items);
  const auto base_ids = cohort_members(truth.weights, "base");
  const auto new_ids = cohort_members(truth.weights, "new");

  const auto base_data = simulate_for(truth, base_ids, base.per_annotator, base.beta, base.seed + 1);
  const auto split = split_holdout(base_data, base.holdout_fraction, base.seed + 2);
  TrainConfig train = base.train;
  train.beta = base.beta;
  const auto stage1 = train_joint(split.train, truth.catalog, train);
  result.base_fitted_accuracy = preference_accuracy(stage1.basis, stage1.weights, split.holdout, truth.catalog);

  const std::string before = to_json(stage1.basis).dump();
  const auto few = simulate_for(truth, new_ids, config.few, base.beta, config.seed);
  const auto many = simulate_for(truth, new_ids, config.many, base.beta, config.seed + 1);
  const auto holdout = simulate_for(truth, new_ids, config.holdout_per_annotator, base.beta, config.seed + 2);
  TrainConfig fit = config.fit;
  fit.beta = base.beta;
  result.few_fit = fit_weights(stage1.basis, few, truth.catalog, fit);
  result.many_fit = fit_weights(stage1.basis, many, truth.catalog, fit);
  result.basis_unchanged = to_json(stage1.basis).dump() == before;

  result.few_accuracy = preference_accuracy(stage1.basis, result.few_fit.weights, holdout, truth.catalog);
  result.many_accuracy = preference_accuracy(stage1.basis, result.many_fit.weights, holdout, truth.catalog);
  result.truth_accuracy = preference_accuracy(truth.basis, truth.weights, holdout, truth.catalog);
  result.passed = result.basis_unchanged && result.few_accuracy >= result.many_accuracy - config.max_gap;
  return result;
}

// ---------------------------------------------------------------------------

CohortShiftConfig CohortShiftConfig::defaults() {
  CohortShiftConfig cfg;
  cfg.cohorts = {
      CohortSpec{"prism", 60, WeightDistribution::dirichlet(0.3)},
      CohortSpec{"16c", 20, WeightDistribution::one_hot({1.0, 0.0, 0.0, 0.0}, 0.05)},
      CohortSpec{"20c", 20, WeightDistribution::one_hot({0.0, 0.0, 1.0, 0.0}, 0.05)},
  };
  cfg.juries = {
      JuryDefinition{"16th c. only", {{"16c", 10}}},
      JuryDefinition{"20th c. only", {{"20c", 10}}},
      JuryDefinition{"PRISM only", {{"prism", 10}}},
      JuryDefinition{"16th c. majority", {{"16c", 10}, {"20c", 5}}},
      JuryDefinition{"All periods", {{"16c", 10}, {"20c", 10}, {"prism", 10}}},
  };
  cfg.slate.kind = SlateSpec::Kind::kContrast;
  cfg.slate.size = 10;
  cfg.slate.cohorts = {"16c", "20c"};
  return cfg;
}

CohortShiftConfig CohortShiftConfig::split_jury() {
  CohortShiftConfig cfg = defaults();
  cfg.juries = {JuryDefinition{"16th/20th c. split", {{"16c", 5}, {"20c", 5}}}};
  cfg.slate = SlateSpec{};
  cfg.slate.kind = SlateSpec::Kind::kRandom;
  cfg.slate.size = 10;
  cfg.slate.seed = 38;
  return cfg;
}

const voting::VoteOutcome& JuryRow::outcome(voting::Rule rule) const {
  for (std::size_t i = 0; i < std::size(voting::kAllRules); ++i) {
    if (voting::kAllRules[i] == rule) return outcomes.at(i);
  }
  throw Error("unknown_rule", "rule not evaluated");
}

std::vector<double> cohort_mean_weights(const WeightTable& weights, const std::string& cohort) {
  std::vector<double> mean;
  std::size_t count = 0;
  for (const auto& [id, e] : weights.entries) {
    if (e.cohort_id != cohort) continue;
    if (mean.empty()) mean.assign(e.w.size(), 0.0);
    for (std::size_t k = 0; k < e.w.size(); ++k) mean[k] += e.w[k];
    ++count;
  }
  if (count == 0) throw Error("unknown_cohort", "no annotators in cohort '" + cohort + "'");
  for (double& x : mean) x /= static_cast<double>(count);
  return mean;
}

std::vector<std::string> random_slate(const ItemCatalog& catalog, std::size_t size, std::uint64_t seed) {
  if (size < 1 || size > catalog.size()) throw Error("invalid_spec", "slate size must lie in [1, catalog size]");
  std::vector<std::string> out;
  std::mt19937_64 rng(seed);
  std::sample(catalog.ids().begin(), catalog.ids().end(), std::back_inserter(out), size, rng);
  return out;
}

std::vector<std::string> contrast_slate(const GroundTruth& truth, const std::vector<std::string>& cohorts,
                                        std::size_t size) {
  const std::size_t n = truth.catalog.size();
  if (cohorts.empty() || size < cohorts.size() || size > n) {
    throw Error("invalid_spec", "contrast slate needs 1..size cohorts and size <= catalog size");
  }
  const auto values = item_basis_values(truth.basis, truth.catalog);
  std::vector<std::vector<double>> rewards;
  for (const auto& c : cohorts) rewards.push_back(annotator_rewards(values, cohort_mean_weights(truth.weights, c)));

  // Fillers: the items whose best rank across cohorts is lowest.
  std::vector<std::vector<std::size_t>> rank(cohorts.size(), std::vector<std::size_t>(n));
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rewards[c][a] != rewards[c][b] ? rewards[c][a] < rewards[c][b] : a < b;
    });
    for (std::size_t p = 0; p < n; ++p) rank[c][order[p]] = p;
  }
  std::vector<std::size_t> by_worst(n);
  std::iota(by_worst.begin(), by_worst.end(), 0);
  auto best_rank = [&](std::size_t item) {
    std::size_t r = 0;
    for (const auto& rc : rank) r = std::max(r, rc[item]);
    return r;
  };
  std::sort(by_worst.begin(), by_worst.end(), [&](std::size_t a, std::size_t b) {
    return best_rank(a) != best_rank(b) ? best_rank(a) < best_rank(b) : a < b;
  });
  const std::size_t num_fillers = size - cohorts.size();
  std::vector<std::size_t> fillers(by_worst.begin(), by_worst.begin() + num_fillers);
  std::vector<double> filler_ceiling(cohorts.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    for (std::size_t f : fillers) filler_ceiling[c] = std::max(filler_ceiling[c], rewards[c][f]);
  }

  // Favourites: each cohort's top item among those every listed cohort still
  // prefers to all fillers.
  std::set<std::size_t> used(fillers.begin(), fillers.end());
  std::vector<std::size_t> favourites;
  for (std::size_t c = 0; c < cohorts.size(); ++c) {
    std::optional<std::size_t> best, fallback;
    for (std::size_t i = 0; i < n; ++i) {
      if (used.count(i)) continue;
      if (!fallback || rewards[c][i] > rewards[c][*fallback]) fallback = i;
      bool above = true;
      for (std::size_t o = 0; o < cohorts.size(); ++o) above = above && rewards[o][i] > filler_ceiling[o];
      if (above && (!best || rewards[c][i] > rewards[c][*best])) best = i;
    }
    const std::size_t pick = best ? *best : *fallback;
    used.insert(pick);
    favourites.push_back(pick);
  }
  std::vector<std::string> slate;
  for (std::size_t f : favourites) slate.push_back(truth.catalog.id(f));
  for (std::size_t f : fillers) slate.push_back(truth.catalog.id(f));
  return slate;
}

CohortShiftResult cohort_shift_experiment(const CohortShiftConfig& config) {
  if (config.cohorts.size() < 2) throw Error("invalid_config", "cohort shift needs at least 2 cohorts");
  CohortShiftResult result;
  result.config = config;
  result.truth = generate_ground_truth(config.K, config.d, config.cohorts, config.seed, config.num_items);
  const auto& truth = result.truth;

  const auto base_ids = cohort_members(truth.weights, config.cohorts[0].id);
  const auto base_data = simulate_for(truth, base_ids, config.base_per_annotator, config.beta, config.seed + 1);
  TrainConfig train = config.train;
  train.K = config.K;
  train.beta = config.beta;
  auto stage1 = train_joint(base_data, truth.catalog, train);
  result.base_train_nll = stage1.report.final_nll;
  result.pool = JuryPool{std::move(stage1.basis), std::move(stage1.weights)};

  const auto questions = sample_questions(truth.catalog.size(), config.adapt_questions, config.seed + 2);
  for (std::size_t c = 1; c < config.cohorts.size(); ++c) {
    const auto& cohort = config.cohorts[c].id;
    const auto data = simulate_questions(truth, cohort_members(truth.weights, cohort), questions, config.beta,
                                         config.seed + 2 + c);
    const auto fitted = fit_weights(result.pool.basis, data, truth.catalog, train);
    result.pool = add_cohort(result.pool, fitted.weights, cohort);
  }

  switch (config.slate.kind) {
    case SlateSpec::Kind::kRandom:
      result.slate = random_slate(truth.catalog, config.slate.size, config.slate.seed);
      break;
    case SlateSpec::Kind::kContrast:
      result.slate = contrast_slate(truth, config.slate.cohorts, config.slate.size);
      break;
    case SlateSpec::Kind::kExplicit:
      result.slate = config.slate.items;
      for (const auto& id : result.slate) truth.catalog.index_of(id);
      break;
  }

  const auto values = item_basis_values(truth.basis, truth.catalog);
  for (const auto& c : config.cohorts) {
    const auto mean = cohort_mean_weights(truth.weights, c.id);
    std::string best;
    double best_reward = -std::numeric_limits<double>::infinity();
    for (const auto& id : result.slate) {
      const std::size_t i = truth.catalog.index_of(id);
      const double r = kernels::active().dot(mean.data(), values.data() + i * config.K, config.K);
      if (r > best_reward || (r == best_reward && id < best)) {
        best = id;
        best_reward = r;
      }
    }
    result.cohort_favourites[c.id] = best;
  }

  for (const auto& def : config.juries) {
    JuryRow row;
    row.jury = def.name;
    row.spec = select_jury(result.pool, def.quotas, config.jury_seed);
    row.size = row.spec.juror_ids.size();
    const auto profile = jury_profile(row.spec, result.pool, result.slate, truth.catalog);
    if (profile.num_ballots() >= 2 && profile.num_candidates() >= 2) {
      row.spearman = voting::mean_pairwise_spearman(profile);
    }
    for (voting::Rule rule : voting::kAllRules) row.outcomes.push_back(voting::apply_rule(rule, profile));
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---------------------------------------------------------------------------
// JSON.

json to_json(const WeightDistribution& dist) {
  if (dist.kind == WeightDistribution::Kind::kDirichlet) {
    return json{{"type", "dirichlet"}, {"alpha", dist.alpha.size() == 1 ? json(dist.alpha[0]) : json(dist.alpha)}};
  }
  return json{{"type", "one_hot_mixture"}, {"p", dist.p}, {"epsilon", dist.epsilon}};
}

WeightDistribution weight_distribution_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "dirichlet") {
      WeightDistribution d;
      const auto& a = j.at("alpha");
      d.alpha = a.is_array() ? a.get<std::vector<double>>() : std::vector<double>{a.get<double>()};
      return d;
    }
    if (type == "one_hot_mixture") {
      return WeightDistribution::one_hot(j.at("p").get<std::vector<double>>(), j.value("epsilon", 0.0));
    }
    throw Error("invalid_spec", "unknown weight distribution '" + type + "'");
  } catch (const json::exception& e) {
    throw Error("invalid_spec", std::string("weight distribution: ") + e.what());
  }
}

json to_json(const CohortSpec& cohort) {
  return json{{"id", cohort.id}, {"size", cohort.size}, {"weights", to_json(cohort.weights)}};
}

CohortSpec cohort_from_json(const json& j) {
  try {
    return CohortSpec{j.at("id").get<std::string>(), j.at("size").get<std::size_t>(),
                      weight_distribution_from_json(j.at("weights"))};
  } catch (const json::exception& e) {
    throw Error("invalid_spec", std::string("cohort: ") + e.what());
  }
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw Error("schema", std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

json slate_to_json(const SlateSpec& s) {
  switch (s.kind) {
    case SlateSpec::Kind::kRandom: return json{{"type", "random"}, {"size", s.size}, {"seed", s.seed}};
    case SlateSpec::Kind::kContrast: return json{{"type", "contrast"}, {"size", s.size}, {"cohorts", s.cohorts}};
    case SlateSpec::Kind::kExplicit: return json{{"type", "explicit"}, {"items", s.items}};
  }
  return nullptr;
}

SlateSpec slate_from_json(const json& j) {
  SlateSpec s;
  const auto type = j.value("type", std::string("random"));
  if (type == "random") s.kind = SlateSpec::Kind::kRandom;
  else if (type == "contrast") s.kind = SlateSpec::Kind::kContrast;
  else if (type == "explicit") s.kind = SlateSpec::Kind::kExplicit;
  else throw Error("schema", "unknown slate type '" + type + "'");
  read_opt(j, "size", s.size);
  read_opt(j, "seed", s.seed);
  read_opt(j, "cohorts", s.cohorts);
  read_opt(j, "items", s.items);
  return s;
}

}  // namespace

json to_json(const RecoveryConfig& c) {
  return json{{"K_true", c.K_true},
              {"d", c.d},
              {"num_items", c.num_items},
              {"annotators", c.annotators},
              {"per_annotator", c.per_annotator},
              {"beta", c.beta},
              {"holdout_fraction", c.holdout_fraction},
              {"margin", c.margin},
              {"seed", c.seed},
              {"weights", to_json(c.weights)},
              {"train", apa::to_json(c.train)}};
}

RecoveryConfig recovery_config_from_json(const json& j) {
  reject_unknown(j,
                 {"experiment", "K_true", "d", "num_items", "annotators", "per_annotator", "beta", "holdout_fraction",
                  "margin", "seed", "weights", "train"},
                 "recovery config");
  try {
    RecoveryConfig c;
    read_opt(j, "K_true", c.K_true);
    read_opt(j, "d", c.d);
    read_opt(j, "num_items", c.num_items);
    read_opt(j, "annotators", c.annotators);
    read_opt(j, "per_annotator", c.per_annotator);
    read_opt(j, "beta", c.beta);
    read_opt(j, "holdout_fraction", c.holdout_fraction);
    read_opt(j, "margin", c.margin);
    read_opt(j, "seed", c.seed);
    if (j.contains("weights")) c.weights = weight_distribution_from_json(j["weights"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
    return c;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("recovery config: ") + e.what());
  }
}

json to_json(const AdaptationConfig& c) {
  return json{{"base", to_json(c.base)},
              {"new_annotators", c.new_annotators},
              {"few", c.few},
              {"many", c.many},
              {"holdout_per_annotator", c.holdout_per_annotator},
              {"max_gap", c.max_gap},
              {"new_weights", to_json(c.new_weights)},
              {"seed", c.seed},
              {"fit", to_json(c.fit)}};
}

AdaptationConfig adaptation_config_from_json(const json& j) {
  reject_unknown(j,
                 {"experiment", "base", "new_annotators", "few", "many", "holdout_per_annotator", "max_gap",
                  "new_weights", "seed", "fit"},
                 "adaptation config");
  try {
    AdaptationConfig c;
    if (j.contains("base")) c.base = recovery_config_from_json(j["base"]);
    read_opt(j, "new_annotators", c.new_annotators);
    read_opt(j, "few", c.few);
    read_opt(j, "many", c.many);
    read_opt(j, "holdout_per_annotator", c.holdout_per_annotator);
    read_opt(j, "max_gap", c.max_gap);
    read_opt(j, "seed", c.seed);
    if (j.contains("new_weights")) c.new_weights = weight_distribution_from_json(j["new_weights"]);
    if (j.contains("fit")) c.fit = train_config_from_json(j["fit"], c.fit);
    return c;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("adaptation config: ") + e.what());
  }
}

json to_json(const CohortShiftConfig& c) {
  json cohorts = json::array();
  for (const auto& co : c.cohorts) cohorts.push_back(to_json(co));
  json juries = json::array();
  for (const auto& jd : c.juries) juries.push_back(json{{"name", jd.name}, {"quotas", jd.quotas}});
  return json{{"K", c.K},
              {"d", c.d},
              {"num_items", c.num_items},
              {"beta", c.beta},
              {"seed", c.seed},
              {"cohorts", cohorts},
              {"base_per_annotator", c.base_per_annotator},
              {"adapt_questions", c.adapt_questions},
              {"train", apa::to_json(c.train)},
              {"juries", juries},
              {"slate", slate_to_json(c.slate)},
              {"jury_seed", c.jury_seed}};
}

CohortShiftConfig cohort_shift_config_from_json(const json& j) {
  reject_unknown(j,
                 {"experiment", "K", "d", "num_items", "beta", "seed", "cohorts", "base_per_annotator",
                  "adapt_questions", "train", "juries", "slate", "jury_seed"},
                 "cohort shift config");
  try {
    CohortShiftConfig c = CohortShiftConfig::defaults();
    read_opt(j, "K", c.K);
    read_opt(j, "d", c.d);
    read_opt(j, "num_items", c.num_items);
    read_opt(j, "beta", c.beta);
    read_opt(j, "seed", c.seed);
    read_opt(j, "base_per_annotator", c.base_per_annotator);
    read_opt(j, "adapt_questions", c.adapt_questions);
    read_opt(j, "jury_seed", c.jury_seed);
    if (j.contains("cohorts")) {
      c.cohorts.clear();
      for (const auto& co : j["cohorts"]) c.cohorts.push_back(cohort_from_json(co));
    }
    if (j.contains("juries")) {
      c.juries.clear();
      for (const auto& jd : j["juries"]) {
        c.juries.push_back(JuryDefinition{jd.at("name").get<std::string>(),
                                          jd.at("quotas").get<std::map<std::string, std::size_t>>()});
      }
    }
    if (j.contains("slate")) c.slate = slate_from_json(j["slate"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
    return c;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("cohort shift config: ") + e.what());
  }
}

json to_json(const RecoveryResult& r) {
  json metrics{{"fitted_holdout_accuracy", r.fitted_accuracy},
               {"truth_holdout_accuracy", r.truth_accuracy},
               {"fitted_holdout_nll", r.fitted_holdout_nll},
               {"truth_holdout_nll", r.truth_holdout_nll},
               {"train_final_nll", r.fit.report.final_nll},
               {"train_epochs", r.fit.report.epochs}};
  metrics["weight_alignment_tv"] = r.weight_error ? json(*r.weight_error) : json(nullptr);
  return json{{"experiment", "recovery"},
              {"config", to_json(r.config)},
              {"seeds", {{"seed", r.config.seed}, {"train_seed", r.config.train.seed}}},
              {"metrics", metrics},
              {"passed", r.passed},
              {"train_report", apa::to_json(r.fit.report)}};
}

json to_json(const AdaptationResult& r) {
  json metrics{{"base_fitted_holdout_accuracy", r.base_fitted_accuracy},
               {"few_holdout_accuracy", r.few_accuracy},
               {"many_holdout_accuracy", r.many_accuracy},
               {"truth_holdout_accuracy", r.truth_accuracy},
               {"basis_unchanged", r.basis_unchanged}};
  return json{{"experiment", "adaptation"},
              {"config", to_json(r.config)},
              {"seeds", {{"seed", r.config.seed}, {"base_seed", r.config.base.seed}}},
              {"metrics", metrics},
              {"passed", r.passed}};
}

json to_json(const CohortShiftResult& r) {
  json rows = json::array();
  json metrics = json::object();
  for (const auto& row : r.rows) {
    json winners = json::object();
    for (std::size_t i = 0; i < row.outcomes.size(); ++i) {
      winners[voting::to_string(voting::kAllRules[i])] =
          json{{"selected", row.outcomes[i].selected}, {"winner_set", row.outcomes[i].winner_set}};
    }
    rows.push_back(json{{"jury", row.jury},
                        {"size", row.size},
                        {"spearman", row.spearman ? json(*row.spearman) : json(nullptr)},
                        {"juror_ids", row.spec.juror_ids},
                        {"winners", winners}});
    metrics[row.jury + ".spearman"] = row.spearman ? json(*row.spearman) : json(nullptr);
  }
  metrics["base_train_nll"] = r.base_train_nll;
  return json{{"experiment", "cohort_shift"},
              {"config", to_json(r.config)},
              {"seeds", {{"seed", r.config.seed}, {"jury_seed", r.config.jury_seed}}},
              {"slate", r.slate},
              {"cohort_favourites", r.cohort_favourites},
              {"metrics", metrics},
              {"rows", rows}};
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_jury_table_csv(std::ostream& out, const json& report) {
  if (!report.contains("rows")) throw Error("schema", "report has no jury rows");
  out << "Jury,Size,Spearman";
  for (voting::Rule rule : voting::kAllRules) out << ',' << voting::display_name(rule);
  out << '\n';
  for (const auto& row : report.at("rows")) {
    out << csv_cell(row.at("jury").get<std::string>()) << ',' << row.at("size").get<std::size_t>() << ',';
    if (!row.at("spearman").is_null()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", row.at("spearman").get<double>());
      out << buf;
    }
    for (voting::Rule rule : voting::kAllRules) {
      out << ',' << csv_cell(row.at("winners").at(voting::to_string(rule)).at("selected").get<std::string>());
    }
    out << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const json& report) {
  out << "metric,value\n";
  for (const auto& [key, value] : report.at("metrics").items()) {
    out << csv_cell(key) << ',' << (value.is_null() ? std::string{} : value.dump()) << '\n';
  }
}

}  // namespace apa::lab
