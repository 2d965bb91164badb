#include "apa/lore_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "apa/error.hpp"
#include "apa/kernels.hpp"

namespace apa {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid_config", what); };
  if (K < 1) fail("K must be >= 1");
  if (!(lr_theta > 0.0)) fail("lr_theta must be > 0");
  if (!(lr_w > 0.0)) fail("lr_w must be > 0");
  if (!(tolerance > 0.0)) fail("tolerance must be > 0");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) fail("init_scale must be finite and >= 0");
  if (!(l2_theta >= 0.0)) fail("l2_theta must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) fail("beta must be finite and >= 0");
  if (holdout_fraction && !(*holdout_fraction > 0.0 && *holdout_fraction < 1.0)) {
    fail("holdout_fraction must lie in (0, 1)");
  }
}

json to_json(const TrainConfig& cfg) {
  json j{{"K", cfg.K},
         {"max_epochs", cfg.max_epochs},
         {"lr_theta", cfg.lr_theta},
         {"lr_w", cfg.lr_w},
         {"tolerance", cfg.tolerance},
         {"seed", cfg.seed},
         {"init_scale", cfg.init_scale},
         {"l2_theta", cfg.l2_theta},
         {"max_halvings", cfg.max_halvings},
         {"beta", cfg.beta}};
  j["holdout_fraction"] = cfg.holdout_fraction ? json(*cfg.holdout_fraction) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  if (!j.is_object()) throw Error("schema", "train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "K") cfg.K = value.get<std::size_t>();
      else if (key == "max_epochs") cfg.max_epochs = value.get<std::size_t>();
      else if (key == "lr_theta") cfg.lr_theta = value.get<double>();
      else if (key == "lr_w") cfg.lr_w = value.get<double>();
      else if (key == "tolerance") cfg.tolerance = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "init_scale") cfg.init_scale = value.get<double>();
      else if (key == "l2_theta") cfg.l2_theta = value.get<double>();
      else if (key == "max_halvings") cfg.max_halvings = value.get<std::size_t>();
      else if (key == "beta") cfg.beta = value.get<double>();
      else if (key == "holdout_fraction") {
        if (value.is_null()) cfg.holdout_fraction.reset();
        else cfg.holdout_fraction = value.get<double>();
      } else {
        throw Error("schema", "unknown train config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error("schema", std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kTolerance: return "tolerance";
    case StopReason::kHalvingsExhausted: return "halvings_exhausted";
  }
  return "unknown";
}

json to_json(const TrainReport& report) {
  json halvings = json::array();
  for (const auto& h : report.halvings) {
    json e{{"epoch", h.epoch}, {"lr_theta", h.lr_theta}, {"lr_w", h.lr_w}};
    if (!h.annotator.empty()) e["annotator"] = h.annotator;
    halvings.push_back(std::move(e));
  }
  json j{{"epoch_nll", report.epoch_nll},
         {"halvings", halvings},
         {"stop_reason", to_string(report.stop_reason)},
         {"epochs", report.epochs},
         {"final_nll", report.final_nll}};
  if (!report.per_annotator.empty()) {
    json per = json::object();
    for (const auto& [id, fit] : report.per_annotator) {
      per[id] = json{{"epochs", fit.epochs},
                     {"stop_reason", to_string(fit.stop_reason)},
                     {"initial_nll", fit.initial_nll},
                     {"final_nll", fit.final_nll}};
    }
    j["per_annotator"] = per;
  }
  return j;
}

namespace {
constexpr double kFixedPointSlack = 1e-12;
}  // namespace

void project_to_simplex_inplace(std::span<double> v) {
  const std::size_t n = v.size();
  if (n == 0) return;
  // Points already on the simplex up to rounding are fixed points. Without
  // this, the rescale below can move a projected vector by an ulp.
  if (std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; }) &&
      std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) <= kFixedPointSlack) {
    return;
  }
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  // Largest rho with u[rho] - (sum_{i<=rho} u[i] - 1) / (rho + 1) > 0.
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cumsum += u[i];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) tau = t;
  }
  double sum = 0.0;
  for (double& x : v) {
    x = std::max(x - tau, 0.0);
    sum += x;
  }
  // One rescale absorbs the rounding left by the threshold step.
  if (sum > 0.0 && sum != 1.0) {
    for (double& x : v) x /= sum;
  }
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  project_to_simplex_inplace(out);
  return out;
}

namespace {

double squared_norm(std::span<const double> x) { return kernels::dot(x, x); }

class JointObjective {
 public:
  JointObjective(const IndexedPreferences& index, const ItemCatalog& catalog, std::size_t K, double beta,
                 double l2)
      : index_(index), catalog_(catalog), K_(K), beta_(beta), l2_(l2) {}

  double value(const BasisModel& model, std::span<const double> weights) const {
    const auto values = item_basis_values(model, catalog_);
    double nll = indexed_nll(index_, values, weights, K_, beta_);
    if (l2_ > 0.0) nll += 0.5 * l2_ * squared_norm(model.theta);
    return nll;
  }

  void gradient(const BasisModel& model, std::span<const double> weights, std::span<double> grad_theta,
                std::span<double> grad_w) const {
    const auto values = item_basis_values(model, catalog_);
    indexed_gradients(index_, catalog_, values, weights, K_, beta_, grad_theta, grad_w);
    if (l2_ > 0.0) kernels::axpy(l2_, model.theta, grad_theta);
  }

 private:
  const IndexedPreferences& index_;
  const ItemCatalog& catalog_;
  std::size_t K_;
  double beta_;
  double l2_;
};

double relative_improvement(double before, double after) {
  return (before - after) / std::max(std::abs(before), 1e-300);
}

}  // namespace

JointFit train_joint(const PreferenceDataset& data, const ItemCatalog& catalog, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error("empty_dataset", "training dataset is empty");
  const auto index = index_preferences(data, catalog);
  const std::size_t K = cfg.K;
  const std::size_t N = index.annotators.size();

  BasisModel model = BasisModel::zeros(K, catalog.dim(), cfg.beta);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& t : model.theta) t = cfg.init_scale * normal(rng);
  std::vector<double> weights(N * K, 1.0 / static_cast<double>(K));

  const JointObjective objective(index, catalog, K, cfg.beta, cfg.l2_theta);
  TrainReport report;
  double current = objective.value(model, weights);
  if (!std::isfinite(current)) throw Error("non_finite", "non-finite NLL at epoch 0");
  report.epoch_nll.push_back(current);

  // Steps follow the mean gradient: theta is scaled by the total record
  // count, each w_n by that annotator's count.
  const double theta_scale = 1.0 / static_cast<double>(index.rows.size());
  std::vector<double> grad_theta(model.theta.size());
  std::vector<double> grad_w(weights.size());
  double lr_theta = cfg.lr_theta;
  double lr_w = cfg.lr_w;
  BasisModel trial = model;
  std::vector<double> trial_w(weights.size());

  report.stop_reason = StopReason::kMaxEpochs;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    objective.gradient(model, weights, grad_theta, grad_w);
    double next = 0.0;
    std::size_t halvings = 0;
    bool accepted = false;
    while (true) {
      trial.theta = model.theta;
      kernels::axpy(-lr_theta * theta_scale, grad_theta, trial.theta);
      trial_w = weights;
      for (std::size_t n = 0; n < N; ++n) {
        std::span<double> w(trial_w.data() + n * K, K);
        const double scale = 1.0 / static_cast<double>(index.counts[n]);
        kernels::axpy(-lr_w * scale, std::span<const double>(grad_w.data() + n * K, K), w);
        project_to_simplex_inplace(w);
      }
      next = objective.value(trial, trial_w);
      if (std::isfinite(next) && next <= current) {
        accepted = true;
        break;
      }
      if (halvings == cfg.max_halvings) break;
      ++halvings;
      lr_theta *= 0.5;
      lr_w *= 0.5;
      report.halvings.push_back({epoch, lr_theta, lr_w, {}});
    }
    if (!accepted) {
      report.stop_reason = StopReason::kHalvingsExhausted;
      break;
    }
    const double rel = relative_improvement(current, next);
    std::swap(model.theta, trial.theta);
    std::swap(weights, trial_w);
    current = next;
    report.epoch_nll.push_back(current);
    report.epochs = epoch;
    if (rel < cfg.tolerance) {
      report.stop_reason = StopReason::kTolerance;
      break;
    }
  }
  report.final_nll = current;

  JointFit fit{std::move(model), {}, std::move(report)};
  for (std::size_t n = 0; n < N; ++n) {
    fit.weights.entries.emplace(
        index.annotators[n],
        WeightEntry{index.cohorts[n], std::vector<double>(weights.begin() + n * K, weights.begin() + (n + 1) * K)});
  }
  return fit;
}

namespace {

// NLL of one annotator as a function of w alone; `diffs` holds V(chosen) -
// V(rejected) for each of their comparisons, row-major.
double weight_nll(std::span<const double> diffs, std::span<const double> w, double beta) {
  const std::size_t K = w.size();
  const auto& k = kernels::active();
  double total = 0.0;
  for (std::size_t r = 0; r * K < diffs.size(); ++r) {
    total += softplus(-beta * k.dot(w.data(), diffs.data() + r * K, K));
  }
  return total;
}

void weight_gradient(std::span<const double> diffs, std::span<const double> w, double beta,
                     std::span<double> grad) {
  const std::size_t K = w.size();
  const auto& k = kernels::active();
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t r = 0; r * K < diffs.size(); ++r) {
    const double* diff = diffs.data() + r * K;
    const double z = beta * k.dot(w.data(), diff, K);
    k.axpy(-beta * logistic(-z), diff, grad.data(), K);
  }
}

}  // namespace

WeightFit fit_weights(const BasisModel& basis, const PreferenceDataset& data, const ItemCatalog& catalog,
                      const TrainConfig& cfg) {
  cfg.validate();
  basis.validate();
  if (data.empty()) throw Error("empty_dataset", "adaptation dataset is empty");
  const auto index = index_preferences(data, catalog);
  const std::size_t K = basis.K;
  const std::size_t N = index.annotators.size();
  const auto values = item_basis_values(basis, catalog);

  std::vector<std::vector<double>> diffs(N);
  for (const auto& row : index.rows) {
    auto& out = diffs[row.annotator];
    for (std::size_t c = 0; c < K; ++c) {
      out.push_back(values[row.chosen * K + c] - values[row.rejected * K + c]);
    }
  }

  WeightFit fit;
  std::vector<std::vector<double>> trajectories(N);
  StopReason overall = StopReason::kTolerance;
  for (std::size_t n = 0; n < N; ++n) {
    const std::string& id = index.annotators[n];
    std::vector<double> w(K, 1.0 / static_cast<double>(K));
    std::vector<double> grad(K), trial(K);
    double lr = cfg.lr_w;
    const double scale = 1.0 / static_cast<double>(index.counts[n]);
    double current = weight_nll(diffs[n], w, basis.beta);
    if (!std::isfinite(current)) throw Error("non_finite", "non-finite NLL at epoch 0 for '" + id + "'");
    AnnotatorFit af;
    af.initial_nll = current;
    auto& traj = trajectories[n];
    traj.push_back(current);
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      weight_gradient(diffs[n], w, basis.beta, grad);
      std::size_t halvings = 0;
      bool accepted = false;
      double next = 0.0;
      while (true) {
        trial = w;
        kernels::axpy(-lr * scale, grad, trial);
        project_to_simplex_inplace(trial);
        next = weight_nll(diffs[n], trial, basis.beta);
        if (std::isfinite(next) && next <= current) {
          accepted = true;
          break;
        }
        if (halvings == cfg.max_halvings) break;
        ++halvings;
        lr *= 0.5;
        fit.report.halvings.push_back({epoch, 0.0, lr, id});
      }
      if (!accepted) {
        af.stop_reason = StopReason::kHalvingsExhausted;
        break;
      }
      const double rel = relative_improvement(current, next);
      w.swap(trial);
      current = next;
      traj.push_back(current);
      af.epochs = epoch;
      if (rel < cfg.tolerance) {
        af.stop_reason = StopReason::kTolerance;
        break;
      }
    }
    af.final_nll = current;
    if (af.stop_reason == StopReason::kMaxEpochs) overall = StopReason::kMaxEpochs;
    else if (af.stop_reason == StopReason::kHalvingsExhausted && overall == StopReason::kTolerance) {
      overall = StopReason::kHalvingsExhausted;
    }
    fit.report.epochs = std::max(fit.report.epochs, af.epochs);
    fit.report.per_annotator.emplace(id, af);
    fit.weights.entries.emplace(id, WeightEntry{index.cohorts[n], std::move(w)});
  }

  // Summed objective per epoch; annotators that stopped early hold their
  // final value.
  for (std::size_t e = 0; e <= fit.report.epochs; ++e) {
    double total = 0.0;
    for (const auto& traj : trajectories) total += traj[std::min(e, traj.size() - 1)];
    fit.report.epoch_nll.push_back(total);
  }
  fit.report.final_nll = fit.report.epoch_nll.back();
  fit.report.stop_reason = overall;
  return fit;
}

}  // namespace apa
