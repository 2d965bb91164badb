#include "apa/cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "apa/error.hpp"
#include "apa/jury.hpp"
#include "apa/lore_optimizer.hpp"
#include "apa/preference_data.hpp"
#include "apa/reward_basis.hpp"
#include "apa/synthetic_lab.hpp"
#include "apa/voting.hpp"

namespace apa::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_logger_st("apa");
    l->set_pattern("[apa] [%l] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("APA_LOG")) level = spdlog::level::from_str(env);
    l->set_level(level);
    return l;
  }();
  return log;
}

struct Options {
  fs::path catalog, preferences, model, weights, candidates, config, out, input, manifest;
  std::string rule = "irv_put";
  std::string quotas;
  std::string cohort;
  std::string question_id;
  std::string experiment;
  std::uint64_t seed = 0;
  // Training overrides.
  std::size_t K = 0;
  std::size_t max_epochs = 0;
  double lr_theta = 0.0, lr_w = 0.0, tolerance = 0.0, init_scale = 0.0, l2 = 0.0, holdout = 0.0;
  std::size_t min_count = 1;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("parse", path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require_file(const fs::path& path, const char* flag) {
  if (path.empty()) throw Error("usage", std::string("missing required flag ") + flag);
  if (!fs::is_regular_file(path)) throw Error("io", std::string(flag) + ": no such file " + path.string());
}

fs::path prepare_out(const fs::path& out) {
  if (out.empty()) throw Error("usage", "missing required flag --out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error("io", "cannot create output directory " + out.string());
  return out;
}

// Applies --config (a JSON object of TrainConfig keys, plus "min_count") and
// then explicit flags.
TrainConfig resolve_train_config(const Options& o, const CLI::App& cmd, TrainConfig cfg, std::size_t* min_count) {
  if (!o.config.empty()) {
    require_file(o.config, "--config");
    json j = read_json(o.config);
    if (j.is_object() && j.contains("min_count")) {
      if (min_count) *min_count = j["min_count"].get<std::size_t>();
      j.erase("min_count");
    }
    cfg = train_config_from_json(j, cfg);
  }
  auto given = [&](const char* name) {
    const auto* opt = cmd.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--K")) cfg.K = o.K;
  if (given("--max-epochs")) cfg.max_epochs = o.max_epochs;
  if (given("--lr-theta")) cfg.lr_theta = o.lr_theta;
  if (given("--lr-w")) cfg.lr_w = o.lr_w;
  if (given("--tolerance")) cfg.tolerance = o.tolerance;
  if (given("--init-scale")) cfg.init_scale = o.init_scale;
  if (given("--l2")) cfg.l2_theta = o.l2;
  if (given("--holdout")) cfg.holdout_fraction = o.holdout;
  if (given("--seed")) cfg.seed = o.seed;
  if (min_count && given("--min-count")) *min_count = o.min_count;
  cfg.validate();
  return cfg;
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON file with training settings");
  cmd->add_option("--K", o.K, "Number of reward bases");
  cmd->add_option("--max-epochs", o.max_epochs, "Epoch budget");
  cmd->add_option("--lr-theta", o.lr_theta, "Basis learning rate");
  cmd->add_option("--lr-w", o.lr_w, "Weight learning rate");
  cmd->add_option("--tolerance", o.tolerance, "Relative NLL improvement stopping threshold");
  cmd->add_option("--init-scale", o.init_scale, "Std of the basis initialisation");
  cmd->add_option("--l2", o.l2, "L2 penalty on basis parameters");
}

int cmd_train(const Options& o, const CLI::App& cmd, const std::vector<std::string>& args) {
  require_file(o.catalog, "--catalog");
  require_file(o.preferences, "--preferences");
  const fs::path out = prepare_out(o.out);
  std::size_t min_count = 1;
  const TrainConfig cfg = resolve_train_config(o, cmd, TrainConfig{}, &min_count);

  const auto catalog = load_item_catalog(o.catalog);
  auto data = filter_min_count(load_preferences(o.preferences, catalog), min_count);
  logger()->info("train: {} records from {} annotators", data.size(), data.annotator_counts().size());

  PreferenceDataset holdout;
  if (cfg.holdout_fraction) {
    auto split = split_holdout(data, *cfg.holdout_fraction, cfg.seed);
    data = std::move(split.train);
    holdout = std::move(split.holdout);
  }
  const auto fit = train_joint(data, catalog, cfg);
  logger()->info("train: stopped after {} epochs ({}), NLL {}", fit.report.epochs, to_string(fit.report.stop_reason),
                 fit.report.final_nll);

  json report = to_json(fit.report);
  report["min_count"] = min_count;
  report["train_records"] = data.size();
  if (!holdout.empty()) {
    report["holdout"] = json{{"records", holdout.size()},
                             {"accuracy", lab::preference_accuracy(fit.basis, fit.weights, holdout, catalog)},
                             {"mean_nll", dataset_nll(fit.basis, fit.weights, holdout, catalog) /
                                              static_cast<double>(holdout.size())}};
  }
  save_basis(out / "model.json", fit.basis);
  save_weights(out / "weights.json", fit.weights);
  write_json(out / "train_report.json", report);

  json config = to_json(cfg);
  config["min_count"] = min_count;
  write_manifest(out / "manifest.json",
                 Manifest{"train", args, cfg.seed, config, {o.catalog, o.preferences},
                          {out / "model.json", out / "weights.json", out / "train_report.json"}});
  return 0;
}

int cmd_adapt(const Options& o, const CLI::App& cmd, const std::vector<std::string>& args) {
  require_file(o.model, "--model");
  require_file(o.catalog, "--catalog");
  require_file(o.preferences, "--preferences");
  if (!o.weights.empty()) require_file(o.weights, "--weights");
  const fs::path out = prepare_out(o.out);
  const TrainConfig cfg = resolve_train_config(o, cmd, TrainConfig{}, nullptr);

  const auto basis = load_basis(o.model);
  const auto catalog = load_item_catalog(o.catalog);
  const auto data = load_preferences(o.preferences, catalog);
  const auto fit = fit_weights(basis, data, catalog, cfg);

  JuryPool pool{basis, o.weights.empty() ? WeightTable{} : load_weights(o.weights)};
  pool = add_cohort(pool, fit.weights, o.cohort);
  WeightTable added;
  for (const auto& [id, e] : fit.weights.entries) added.entries.emplace(id, pool.weights.at(id));

  // The bases stay frozen: the model artifact is carried over byte for byte.
  const fs::path model_out = out / "model.json";
  std::error_code same_ec;
  if (!fs::equivalent(o.model, model_out, same_ec)) {
    fs::copy_file(o.model, model_out, fs::copy_options::overwrite_existing);
  }
  save_weights(out / "new_weights.json", added);
  save_weights(out / "pool_weights.json", pool.weights);
  write_json(out / "train_report.json", to_json(fit.report));

  std::vector<fs::path> inputs{o.model, o.catalog, o.preferences};
  if (!o.weights.empty()) inputs.push_back(o.weights);
  json config = to_json(cfg);
  config["cohort"] = o.cohort;
  write_manifest(out / "manifest.json",
                 Manifest{"adapt", args, cfg.seed, config, inputs,
                          {model_out, out / "new_weights.json", out / "pool_weights.json", out / "train_report.json"}});
  return 0;
}

int cmd_vote(const Options& o, const std::vector<std::string>& args) {
  require_file(o.model, "--model");
  require_file(o.weights, "--weights");
  require_file(o.catalog, "--catalog");
  require_file(o.candidates, "--candidates");
  if (o.quotas.empty()) throw Error("usage", "missing required flag --quotas");
  const auto rule = voting::parse_rule(o.rule);
  const auto quotas = parse_quotas(o.quotas);
  const fs::path out = prepare_out(o.out);

  const auto catalog = load_item_catalog(o.catalog);
  JuryPool pool{load_basis(o.model), load_weights(o.weights)};
  pool.validate();
  const auto candidates = load_candidates(o.candidates, catalog);
  const auto jury = select_jury(pool, quotas, o.seed);
  const std::string question = o.question_id.empty() ? o.candidates.stem().string() : o.question_id;
  const auto outcome = democratic_filter(jury, pool, candidates, catalog, rule, question);
  logger()->info("vote: {} jurors, rule {}, selected {}", jury.juror_ids.size(), o.rule, outcome.outcome.selected);

  json j = to_json(outcome);
  j["jury"] = to_json(jury);
  write_json(out / "outcome.json", j);
  std::ostringstream csv;
  write_score_csv(csv, outcome);
  write_text(out / "scores.csv", csv.str());
  write_manifest(out / "manifest.json",
                 Manifest{"vote", args, o.seed, json{{"rule", o.rule}, {"quotas", quotas}, {"question_id", question}},
                          {o.model, o.weights, o.catalog, o.candidates},
                          {out / "outcome.json", out / "scores.csv"}});
  return 0;
}

int cmd_simulate(const Options& o, const CLI::App& cmd, const std::vector<std::string>& args) {
  const fs::path out = prepare_out(o.out);
  json config_in = json::object();
  std::vector<fs::path> inputs;
  if (!o.config.empty()) {
    require_file(o.config, "--config");
    config_in = read_json(o.config);
    inputs.push_back(o.config);
  }
  std::string experiment = o.experiment;
  if (experiment.empty()) experiment = config_in.value("experiment", std::string("cohort_shift"));
  const bool seed_given = cmd.count("--seed") > 0;

  json report;
  json config;
  std::uint64_t seed = 0;
  if (experiment == "recovery") {
    auto cfg = lab::recovery_config_from_json(config_in);
    if (seed_given) cfg.seed = o.seed;
    seed = cfg.seed;
    config = lab::to_json(cfg);
    report = lab::to_json(lab::recovery_experiment(cfg));
  } else if (experiment == "adaptation") {
    auto cfg = lab::adaptation_config_from_json(config_in);
    if (seed_given) cfg.seed = o.seed;
    seed = cfg.seed;
    config = lab::to_json(cfg);
    report = lab::to_json(lab::adaptation_experiment(cfg));
  } else if (experiment == "cohort_shift") {
    auto cfg = lab::cohort_shift_config_from_json(config_in);
    if (seed_given) cfg.seed = o.seed;
    seed = cfg.seed;
    config = lab::to_json(cfg);
    report = lab::to_json(lab::cohort_shift_experiment(cfg));
  } else {
    throw Error("usage", "unknown experiment '" + experiment + "' (expected recovery, adaptation or cohort_shift)");
  }
  config["experiment"] = experiment;

  write_json(out / "report.json", report);
  std::ostringstream csv;
  if (experiment == "cohort_shift") lab::write_jury_table_csv(csv, report);
  else lab::write_metrics_csv(csv, report);
  write_text(out / "table.csv", csv.str());
  write_manifest(out / "manifest.json",
                 Manifest{"simulate", args, seed, config, inputs, {out / "report.json", out / "table.csv"}});
  return 0;
}

int cmd_report(const Options& o, const std::vector<std::string>& args) {
  require_file(o.input, "--input");
  const fs::path out = prepare_out(o.out);
  const json j = read_json(o.input);
  std::vector<fs::path> outputs;
  if (j.contains("outcome") && j.contains("profile")) {
    std::ostringstream winners;
    const auto& oc = j.at("outcome");
    winners << "question_id,rule,selected,winner_set\n";
    std::string set;
    for (const auto& w : oc.at("winner_set")) set += (set.empty() ? "" : " ") + w.get<std::string>();
    winners << j.value("question_id", std::string{}) << ',' << oc.at("rule").get<std::string>() << ','
            << oc.at("selected").get<std::string>() << ',' << set << '\n';
    write_text(out / "winners.csv", winners.str());
    outputs.push_back(out / "winners.csv");

    FilterOutcome fo;
    fo.candidates = j.at("candidates").get<std::vector<std::string>>();
    fo.profile = voting::profile_from_json(j.at("profile"));
    std::ostringstream scores;
    write_score_csv(scores, fo);
    write_text(out / "scores.csv", scores.str());
    outputs.push_back(out / "scores.csv");
  } else if (j.value("experiment", std::string{}) == "cohort_shift") {
    std::ostringstream csv;
    lab::write_jury_table_csv(csv, j);
    write_text(out / "table.csv", csv.str());
    outputs.push_back(out / "table.csv");
  } else if (j.contains("metrics")) {
    std::ostringstream csv;
    lab::write_metrics_csv(csv, j);
    write_text(out / "metrics.csv", csv.str());
    outputs.push_back(out / "metrics.csv");
  } else {
    throw Error("schema", o.input.string() + " is neither a vote outcome nor an experiment report");
  }
  write_manifest(out / "manifest.json", Manifest{"report", args, 0, json::object(), {o.input}, outputs});
  return 0;
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
  require_file(o.manifest, "--manifest");
  const json m = read_json(o.manifest);
  for (const auto& in : m.at("inputs")) {
    const fs::path p = in.at("path").get<std::string>();
    if (!fs::is_regular_file(p) || sha256_file(p) != in.at("sha256").get<std::string>()) {
      throw Error("input_changed", "input " + p.string() + " is missing or differs from the manifest");
    }
  }
  const int code = run(m.at("args").get<std::vector<std::string>>(), out, err);
  if (code != 0) return code;
  // The rerun rewrites the manifest in place; its output hashes must match.
  const json again = read_json(o.manifest);
  if (again.at("outputs") != m.at("outputs")) {
    throw Error("output_mismatch", "replayed outputs differ from " + o.manifest.string());
  }
  out << json{{"replayed", m.at("subcommand")}, {"outputs_match", true}}.dump() << '\n';
  return 0;
}

void print_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive pluralistic alignment: low-rank reward bases, jury voting and cohort adaptation", "apa"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Fit reward bases and annotator weights from preferences");
  train->add_option("--catalog", o.catalog, "Item catalog JSONL");
  train->add_option("--preferences", o.preferences, "Preference JSONL");
  train->add_option("--holdout", o.holdout, "Fraction of each annotator's records held out");
  train->add_option("--min-count", o.min_count, "Drop annotators with fewer records");
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--out", o.out, "Output directory");
  add_train_flags(train, o);

  auto* adapt = app.add_subcommand("adapt", "Fit new annotators over frozen bases and extend the juror pool");
  adapt->add_option("--model", o.model, "Model artifact JSON");
  adapt->add_option("--weights", o.weights, "Existing juror pool weight table");
  adapt->add_option("--catalog", o.catalog, "Item catalog JSONL");
  adapt->add_option("--preferences", o.preferences, "New cohort preference JSONL");
  adapt->add_option("--cohort", o.cohort, "Cohort tag assigned to the new annotators");
  adapt->add_option("--seed", o.seed, "Random seed");
  adapt->add_option("--out", o.out, "Output directory");
  add_train_flags(adapt, o);

  auto* vote = app.add_subcommand("vote", "Select a jury and aggregate its rankings of a candidate slate");
  vote->add_option("--model", o.model, "Model artifact JSON");
  vote->add_option("--weights", o.weights, "Juror pool weight table");
  vote->add_option("--catalog", o.catalog, "Item catalog JSONL");
  vote->add_option("--candidates", o.candidates, "Candidate slate JSONL");
  vote->add_option("--rule", o.rule, "plurality, borda, copeland or irv_put")
      ->check(CLI::IsMember({"plurality", "borda", "copeland", "irv_put"}));
  vote->add_option("--quotas", o.quotas, "Jury quotas, cohort=count,...");
  vote->add_option("--question-id", o.question_id, "Label stored in the outcome");
  vote->add_option("--seed", o.seed, "Jury sampling seed");
  vote->add_option("--out", o.out, "Output directory");

  auto* simulate = app.add_subcommand("simulate", "Run a synthetic experiment");
  simulate->add_option("--config", o.config, "Experiment config JSON");
  simulate->add_option("--experiment", o.experiment, "recovery, adaptation or cohort_shift");
  simulate->add_option("--seed", o.seed, "Override the experiment seed");
  simulate->add_option("--out", o.out, "Output directory");

  auto* report = app.add_subcommand("report", "Render an outcome or experiment JSON as CSV");
  report->add_option("--input", o.input, "outcome.json or report.json");
  report->add_option("--out", o.out, "Output directory");

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", o.manifest, "manifest.json")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (*train) return cmd_train(o, *train, args);
    if (*adapt) return cmd_adapt(o, *adapt, args);
    if (*vote) return cmd_vote(o, args);
    if (*simulate) return cmd_simulate(o, *simulate, args);
    if (*report) return cmd_report(o, args);
    if (*replay) return cmd_replay(o, out, err);
  } catch (const Error& e) {
    print_error(err, e.code(), e.what());
    return e.code() == "usage" ? 2 : 1;
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace apa::cli
