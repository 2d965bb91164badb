#pragma once

// Synthetic stand-ins for real annotators: a ground-truth basis, cohorts of
// annotator weights, Boltzmann-sampled comparisons, and the experiments that
// exercise training, adaptation and jury voting against that ground truth.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apa/jury.hpp"
#include "apa/lore_optimizer.hpp"
#include "apa/preference_data.hpp"
#include "apa/reward_basis.hpp"
#include "apa/voting.hpp"
#include "json.hpp"

namespace apa::lab {

struct WeightDistribution {
  enum class Kind { kDirichlet, kOneHotMixture };
  Kind kind = Kind::kDirichlet;
  // Dirichlet concentration; a single value is broadcast to all K components.
  std::vector<double> alpha{1.0};
  // One-hot mixture: basis k is drawn with probability p[k], and the weight is
  // (1 - epsilon) e_k + epsilon * u with u ~ Dirichlet(1).
  std::vector<double> p;
  double epsilon = 0.0;

  static WeightDistribution dirichlet(double alpha);
  static WeightDistribution one_hot(std::vector<double> p, double epsilon = 0.0);
};

struct CohortSpec {
  std::string id;
  std::size_t size = 0;
  WeightDistribution weights;
};

struct GroundTruth {
  BasisModel basis;
  WeightTable weights;
  ItemCatalog catalog;
};

// Items are standard-normal embeddings named item-000, item-001, ...; basis
// rows are standard normal scaled by 1/sqrt(d) with zero bias; annotators are
// named <cohort>-000, <cohort>-001, ...
GroundTruth generate_ground_truth(std::size_t K, std::size_t d, const std::vector<CohortSpec>& cohorts,
                                  std::uint64_t seed, std::size_t num_items = 200);

// `per_annotator` uniformly drawn item pairs for every annotator in the truth
// table, labelled by the Boltzmann-rational choice rule.
PreferenceDataset simulate_comparisons(const GroundTruth& truth, std::size_t per_annotator, double beta,
                                       std::uint64_t seed);

// Labels a fixed question list (item index pairs) for the given annotators.
PreferenceDataset simulate_questions(const GroundTruth& truth, const std::vector<std::string>& annotators,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& questions,
                                     double beta, std::uint64_t seed);

// Uniformly drawn distinct item pairs.
std::vector<std::pair<std::size_t, std::size_t>> sample_questions(std::size_t num_items, std::size_t count,
                                                                  std::uint64_t seed);

// Fraction of records whose chosen item scores higher under the annotator's
// reward; exact ties count one half.
double preference_accuracy(const BasisModel& basis, const WeightTable& weights, const PreferenceDataset& data,
                           const ItemCatalog& catalog);

// Mean total-variation distance between fitted and true weights after the
// best relabelling of fitted heads. Requires equal K (at most 8).
double aligned_weight_error(const WeightTable& fitted, const WeightTable& truth, std::size_t K);

nlohmann::json to_json(const WeightDistribution& dist);
WeightDistribution weight_distribution_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortSpec& cohort);
CohortSpec cohort_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Stage-1 recovery.

struct RecoveryConfig {
  std::size_t K_true = 4;
  std::size_t d = 16;
  std::size_t num_items = 200;
  std::size_t annotators = 50;
  std::size_t per_annotator = 500;
  double beta = 1.0;
  double holdout_fraction = 0.2;
  double margin = 0.02;
  std::uint64_t seed = 0;
  WeightDistribution weights = WeightDistribution::dirichlet(0.5);
  TrainConfig train = default_train();

  static TrainConfig default_train();
};

struct RecoveryResult {
  RecoveryConfig config;
  double fitted_accuracy = 0.0;
  double truth_accuracy = 0.0;
  double fitted_holdout_nll = 0.0;
  double truth_holdout_nll = 0.0;
  std::optional<double> weight_error;
  bool passed = false;
  JointFit fit;
};

RecoveryResult recovery_experiment(const RecoveryConfig& config);

// ---------------------------------------------------------------------------
// Stage-3 adaptation: new annotators fitted over frozen bases with a small and
// a large number of comparisons, scored on the same fresh holdout.

struct AdaptationConfig {
  RecoveryConfig base;
  std::size_t new_annotators = 10;
  std::size_t few = 30;
  std::size_t many = 500;
  std::size_t holdout_per_annotator = 500;
  double max_gap = 0.05;
  WeightDistribution new_weights = WeightDistribution::dirichlet(0.5);
  std::uint64_t seed = 1;
  // Stage-3 weight fits for both the few- and many-comparison groups.
  TrainConfig fit = RecoveryConfig::default_train();
};

struct AdaptationResult {
  AdaptationConfig config;
  double base_fitted_accuracy = 0.0;
  double few_accuracy = 0.0;
  double many_accuracy = 0.0;
  double truth_accuracy = 0.0;
  bool basis_unchanged = false;
  bool passed = false;
  WeightFit few_fit;
  WeightFit many_fit;
};

AdaptationResult adaptation_experiment(const AdaptationConfig& config);

// ---------------------------------------------------------------------------
// Cohort shift: bases trained on the first cohort only, later cohorts fitted
// by weight-only adaptation on a shared question subset, then several juries
// vote on one candidate slate under every rule.

struct JuryDefinition {
  std::string name;
  std::map<std::string, std::size_t> quotas;
};

struct SlateSpec {
  enum class Kind { kRandom, kContrast, kExplicit };
  Kind kind = Kind::kRandom;
  std::size_t size = 10;
  std::uint64_t seed = 0;
  // kContrast: the favourite of each listed cohort under ground truth, padded
  // with items both cohorts rank low.
  std::vector<std::string> cohorts;
  std::vector<std::string> items;  // kExplicit
};

struct CohortShiftConfig {
  std::size_t K = 4;
  std::size_t d = 16;
  std::size_t num_items = 200;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::vector<CohortSpec> cohorts;  // cohorts[0] trains the bases
  std::size_t base_per_annotator = 300;
  std::size_t adapt_questions = 30;
  TrainConfig train = RecoveryConfig::default_train();
  std::vector<JuryDefinition> juries;
  SlateSpec slate;
  std::uint64_t jury_seed = 0;

  // Mirrors the time-period layout: a heterogeneous present-day base cohort
  // and two near-one-hot historical cohorts.
  static CohortShiftConfig defaults();
  // defaults() on a random slate with one jury split evenly between the two
  // historical cohorts. The slate seed was picked by search so that the four
  // rules disagree; it is a regression fixture.
  static CohortShiftConfig split_jury();
};

struct JuryRow {
  std::string jury;
  std::size_t size = 0;
  std::optional<double> spearman;  // undefined for single-member juries
  JurySpec spec;
  std::vector<voting::VoteOutcome> outcomes;  // voting::kAllRules order

  const voting::VoteOutcome& outcome(voting::Rule rule) const;
};

struct CohortShiftResult {
  CohortShiftConfig config;
  std::vector<std::string> slate;
  // Ground-truth favourite of each cohort on the slate (mean cohort weights).
  std::map<std::string, std::string> cohort_favourites;
  std::vector<JuryRow> rows;
  double base_train_nll = 0.0;
  GroundTruth truth;
  JuryPool pool;
};

CohortShiftResult cohort_shift_experiment(const CohortShiftConfig& config);

// Slate builders, exposed for fixtures.
std::vector<std::string> random_slate(const ItemCatalog& catalog, std::size_t size, std::uint64_t seed);
std::vector<std::string> contrast_slate(const GroundTruth& truth, const std::vector<std::string>& cohorts,
                                        std::size_t size);
// Mean ground-truth weight vector of a cohort.
std::vector<double> cohort_mean_weights(const WeightTable& weights, const std::string& cohort);

// ---------------------------------------------------------------------------
// Declarative configs and reports.

nlohmann::json to_json(const RecoveryConfig& config);
RecoveryConfig recovery_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdaptationConfig& config);
AdaptationConfig adaptation_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortShiftConfig& config);
CohortShiftConfig cohort_shift_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RecoveryResult& result);
nlohmann::json to_json(const AdaptationResult& result);
nlohmann::json to_json(const CohortShiftResult& result);

// Winners-by-rule table: Jury,Size,Spearman,IRV-PUT,Copeland,Borda,Plurality.
void write_jury_table_csv(std::ostream& out, const nlohmann::json& cohort_shift_report);
// One metric per row: metric,value.
void write_metrics_csv(std::ostream& out, const nlohmann::json& report);

}  // namespace apa::lab
