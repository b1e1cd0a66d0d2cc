// Command-line front end: feature extraction, model training, C-test
// generation, oracle verification, encoding benchmarks, evaluation and
// LP/MPS export.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctg/eval.hpp"
#include "ctg/strategies.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitSolverLimit = 3;
constexpr int kExitOracleCap = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ctg::IoError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ctg::IoError("cannot write file: " + path);
  out << content;
}

std::set<std::string> load_lexicon(const std::string& path) {
  std::set<std::string> out;
  std::ifstream in(path);
  if (!in) throw ctg::IoError("cannot open lexicon: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

struct ProviderFlags {
  std::string features_file;
  std::string lexicon_file;
  bool strict = false;

  ctg::feat::ProviderConfig make() const {
    ctg::feat::ProviderConfig cfg;
    cfg.strict = strict;
    std::string features = features_file;
    std::string lexicon = lexicon_file;
    if (const char* dir = std::getenv("CTEST_RESOURCE_DIR")) {
      if (features.empty() && fs::exists(fs::path(dir) / "features.csv"))
        features = (fs::path(dir) / "features.csv").string();
      if (lexicon.empty() && fs::exists(fs::path(dir) / "lexicon.txt"))
        lexicon = (fs::path(dir) / "lexicon.txt").string();
    }
    if (!features.empty()) cfg.providers.push_back(ctg::feat::make_precomputed_provider(features));
    std::set<std::string> words;
    if (!lexicon.empty()) words = load_lexicon(lexicon);
    cfg.providers.push_back(ctg::feat::make_builtin_provider(std::move(words)));
    cfg.providers.push_back(ctg::feat::make_surrogate_resource_provider());
    return cfg;
  }
};

struct Loaded {
  ctg::feat::Instance instance;
  ctg::feat::FeatureTables tables;
};

Loaded load_instance(const std::string& text_path, const ProviderFlags& providers) {
  Loaded out;
  out.instance = ctg::feat::make_instance(ctg::corpus::tokenize(read_file(text_path)));
  if (out.instance.n() == 0)
    throw ctg::NotEnoughCandidatesError("text has no gap candidates (needs >= 3 sentences)");
  out.tables = ctg::feat::compute_features(out.instance, providers.make());
  return out;
}

ctg::strat::SizeRule size_rule_from(const std::string& name) {
  if (name == "ceil") return ctg::strat::SizeRule::CeilHalf;
  if (name == "floor") return ctg::strat::SizeRule::FloorHalf;
  throw ctg::DomainError("unknown size rule: " + name);
}

int run_extract(const std::string& text, const std::string& out_path,
                const ProviderFlags& providers, bool json_mode) {
  Loaded loaded = load_instance(text, providers);
  ctg::feat::save_features(loaded.tables, out_path);
  std::size_t warned = 0;
  for (const auto& w : loaded.tables.warnings) warned += w.cells;
  if (json_mode) {
    ordered_json j;
    j["n"] = loaded.instance.n();
    j["rows"] = 0;
    std::size_t rows = 0;
    for (std::size_t i = 0; i < loaded.instance.n(); ++i)
      rows += static_cast<std::size_t>(loaded.instance.word_length(i) - 1);
    j["rows"] = rows;
    j["default_cells"] = warned;
    j["features_out"] = out_path;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "n=" << loaded.instance.n() << "\n";
    if (warned > 0)
      std::cout << "warning: " << warned
                << " feature cells defaulted to 0 (no provider coverage)\n";
  }
  return kExitOk;
}

int run_train(const std::string& features_path, const std::string& labels_path,
              const std::string& model_out, ctg::model::TrainConfig cfg, bool json_mode) {
  ctg::feat::FeatureTables tables = ctg::feat::load_features(features_path);
  std::vector<double> labels;
  {
    std::ifstream in(labels_path);
    if (!in) throw ctg::IoError("cannot open labels: " + labels_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      labels.push_back(std::stod(line));
    }
  }
  // rows follow the feature CSV order: candidates ascending, sizes ascending
  std::vector<ctg::feat::FeatureVector> X;
  const auto& schema = ctg::feat::FeatureSchema::standard();
  for (std::size_t i = 0; i < tables.statics.candidate_count(); ++i) {
    for (int j = 1; j < tables.statics.word_length(i); ++j) {
      ctg::feat::FeatureVector x{};
      for (int k = 0; k < ctg::feat::kFeatureDim; ++k) {
        switch (schema.dependency(k)) {
          case ctg::feat::DependencyClass::Static:
            x[static_cast<std::size_t>(k)] = tables.statics.at(i, j, k);
            break;
          case ctg::feat::DependencyClass::SizeDependent: {
            const auto& u = schema.size_dependent();
            auto pos = std::find(u.begin(), u.end(), k) - u.begin();
            x[static_cast<std::size_t>(k)] =
                tables.size_features[i].at(j, static_cast<int>(pos));
            break;
          }
          case ctg::feat::DependencyClass::PlacementDependent:
            break;  // placement columns are zero in training rows from files
        }
      }
      X.push_back(x);
    }
  }
  if (X.size() != labels.size())
    throw ctg::DomainError("feature rows (" + std::to_string(X.size()) + ") and labels (" +
                           std::to_string(labels.size()) + ") differ");

  ctg::model::TreeEnsemble ens = ctg::model::train_gbrt(X, labels, cfg);
  ctg::model::save_model(ens, model_out);
  std::vector<double> preds;
  preds.reserve(X.size());
  for (const auto& x : X) preds.push_back(ctg::model::predict(ens, x));
  const double train_rmse = ctg::model::rmse(preds, labels);
  if (json_mode) {
    ordered_json j;
    j["rows"] = X.size();
    j["trees"] = ens.trees.size();
    j["train_rmse"] = train_rmse;
    j["model_out"] = model_out;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "train_rmse=" << train_rmse << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C-test generation with difficulty targeting"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  bool json_mode = false;
  app.add_flag("--json", json_mode, "machine-readable JSON output");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for every random component");
  app.require_subcommand(1);

  // ---- extract ----
  auto* extract = app.add_subcommand("extract", "tokenize a text and write its feature CSV");
  std::string x_text, x_out;
  ProviderFlags x_providers;
  extract->add_option("--text", x_text, "input UTF-8 text file")->required();
  extract->add_option("--features-out", x_out, "output feature CSV")->required();
  extract->add_option("--features", x_providers.features_file,
                      "pre-computed feature CSV consulted first");
  extract->add_option("--lexicon", x_providers.lexicon_file, "lexicon file, one word per line");
  extract->add_flag("--strict", x_providers.strict, "fail instead of defaulting missing cells");

  // ---- train ----
  auto* train = app.add_subcommand("train", "fit the gap error-rate model");
  std::string t_features, t_labels, t_out;
  ctg::model::TrainConfig t_cfg;
  train->add_option("--features", t_features, "feature CSV")->required();
  train->add_option("--labels", t_labels, "error-rate per feature row, one per line")->required();
  train->add_option("--model-out", t_out, "output model JSON")->required();
  train->add_option("--rounds", t_cfg.rounds, "boosting rounds");
  train->add_option("--depth", t_cfg.max_depth, "maximum tree depth");
  train->add_option("--shrinkage", t_cfg.shrinkage, "learning rate");
  train->add_option("--min-leaf", t_cfg.min_samples_leaf, "minimum samples per leaf");

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "generate a C-test for a target difficulty");
  std::string g_text, g_model, g_out, g_strategy = "mip", g_encoding = "epigraph";
  std::string g_size_rule = "ceil", g_branching = "widest", g_external;
  ProviderFlags g_providers;
  double g_tau = 0.5;
  std::size_t g_m = 20;
  std::vector<std::string> g_pins;
  std::vector<std::size_t> g_excludes;
  int g_max_size = 0;
  double g_time_limit = 0.0;
  int g_threads = 1;
  bool g_no_vary_resources = false;
  gen->add_option("--text", g_text)->required();
  gen->add_option("--model", g_model)->required();
  gen->add_option("--tau", g_tau, "target difficulty in [0,1]");
  gen->add_option("--m", g_m, "number of gaps");
  gen->add_option("--strategy", g_strategy, "stat | sel | size | mip | external");
  gen->add_option("--out", g_out, "output C-test JSON")->required();
  gen->add_option("--features", g_providers.features_file);
  gen->add_option("--lexicon", g_providers.lexicon_file);
  gen->add_flag("--strict", g_providers.strict);
  gen->add_option("--pin", g_pins, "force candidate:size, e.g. --pin 7:3");
  gen->add_option("--exclude", g_excludes, "never gap this candidate");
  gen->add_option("--max-size", g_max_size, "cap gap sizes");
  gen->add_option("--encoding", g_encoding, "epigraph | minmax | indicator | pwl");
  gen->add_option("--time-limit", g_time_limit, "solver wall-clock limit in seconds");
  gen->add_option("--threads", g_threads, "solver worker threads");
  gen->add_option("--branching", g_branching, "widest | lex");
  gen->add_option("--size-rule", g_size_rule, "ceil | floor default gap size");
  gen->add_flag("--no-vary-resources", g_no_vary_resources,
                "freeze the resource-backed size features at the default size");
  gen->add_option("--external", g_external, "C-test JSON for the external strategy");

  // ---- oracle ----
  auto* oracle = app.add_subcommand("oracle", "cross-check the solver against brute force");
  std::string o_text, o_model;
  ProviderFlags o_providers;
  double o_tau = 0.5;
  std::size_t o_m = 2;
  std::uint64_t o_cap = 10'000'000;
  oracle->add_option("--text", o_text)->required();
  oracle->add_option("--model", o_model)->required();
  oracle->add_option("--tau", o_tau)->required();
  oracle->add_option("--m", o_m)->required();
  oracle->add_option("--cap", o_cap, "evaluation cap for the exhaustive oracle");
  oracle->add_option("--features", o_providers.features_file);
  oracle->add_option("--lexicon", o_providers.lexicon_file);

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "time the objective encodings");
  std::string b_dir, b_model, b_out;
  std::vector<std::string> b_encodings = {"epigraph", "minmax", "indicator", "pwl"};
  std::vector<double> b_taus = {0.1, 0.9};
  std::size_t b_m = 0;
  double b_time_limit = 0.0;
  ProviderFlags b_providers;
  bench->add_option("--instances", b_dir, "directory of .txt instances")->required();
  bench->add_option("--model", b_model)->required();
  bench->add_option("--out", b_out, "output CSV")->required();
  bench->add_option("--encodings", b_encodings, "subset of epigraph minmax indicator pwl");
  bench->add_option("--tau", b_taus, "target difficulties to run");
  bench->add_option("--m", b_m, "gaps per instance (default: n/2 capped at 20)");
  bench->add_option("--time-limit", b_time_limit, "per-solve limit in seconds");
  bench->add_option("--features", b_providers.features_file);
  bench->add_option("--lexicon", b_providers.lexicon_file);

  // ---- eval ----
  auto* evalc = app.add_subcommand("eval", "score generation results against responses");
  std::string e_results, e_responses, e_out, e_learner;
  std::size_t e_r = 5;
  bool e_simulate = false;
  evalc->add_option("--results", e_results, "directory of result JSON files")->required();
  evalc->add_option("--responses", e_responses, "directory of response JSON files");
  evalc->add_option("--out", e_out, "output CSV")->required();
  evalc->add_flag("--simulate", e_simulate, "synthesize responses from a learner model");
  evalc->add_option("--learner-model", e_learner, "model JSON playing the learner");
  evalc->add_option("--r", e_r, "simulated responses per gap");

  // ---- export ----
  auto* exportc = app.add_subcommand("export", "write the optimization model to LP or MPS");
  std::string ex_text, ex_model, ex_out, ex_format = "lp", ex_encoding = "epigraph";
  ProviderFlags ex_providers;
  double ex_tau = 0.5;
  std::size_t ex_m = 20;
  exportc->add_option("--text", ex_text)->required();
  exportc->add_option("--model", ex_model)->required();
  exportc->add_option("--tau", ex_tau)->required();
  exportc->add_option("--m", ex_m)->required();
  exportc->add_option("--format", ex_format, "lp | mps");
  exportc->add_option("--encoding", ex_encoding);
  exportc->add_option("--out", ex_out)->required();
  exportc->add_option("--features", ex_providers.features_file);
  exportc->add_option("--lexicon", ex_providers.lexicon_file);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) return run_extract(x_text, x_out, x_providers, json_mode);

    if (*train) {
      t_cfg.seed = seed;
      return run_train(t_features, t_labels, t_out, t_cfg, json_mode);
    }

    if (*gen) {
      if (g_strategy == "stat" && gen->count("--tau") > 0)
        std::cerr << "warning: the static strategy ignores --tau\n";
      Loaded loaded = load_instance(g_text, g_providers);
      ctg::model::TreeEnsemble ens = ctg::model::load_model(g_model);
      ctg::strat::GenerationRequest req;
      req.strategy = g_strategy;
      req.tau = g_tau;
      req.m = g_m;
      req.size_rule = size_rule_from(g_size_rule);
      req.build.encoding = ctg::mip::encoding_from_string(g_encoding);
      req.build.vary_resource_features = !g_no_vary_resources;
      req.build.max_size = g_max_size;
      for (const std::string& pin : g_pins) {
        auto colon = pin.find(':');
        if (colon == std::string::npos)
          throw ctg::DomainError("--pin expects candidate:size, got " + pin);
        req.build.pins.push_back({static_cast<std::size_t>(std::stoul(pin.substr(0, colon))),
                                  std::stoi(pin.substr(colon + 1))});
      }
      for (std::size_t ex : g_excludes) req.build.excludes.push_back(ex);
      req.solve.time_limit_s = g_time_limit;
      req.solve.threads = g_threads;
      req.solve.branching = g_branching;
      req.external_path = g_external;

      ctg::strat::GenerationResult res =
          ctg::strat::generate(loaded.instance, loaded.tables, ens, req);
      write_file(g_out, ctg::strat::result_to_json(res) + "\n");
      if (json_mode) {
        ordered_json j;
        j["tau"] = res.tau;
        j["tau_hat"] = res.tau_hat;
        j["objective"] = res.objective;
        j["strategy"] = res.strategy;
        if (res.solver) {
          j["status"] = res.solver->status;
          j["nodes"] = res.solver->nodes;
          j["time_s"] = res.solver->time_s;
        }
        std::cout << j.dump() << "\n";
      } else {
        std::cout << "tau_hat=" << res.tau_hat << " objective=" << res.objective << "\n";
        if (res.solver)
          std::cout << "status=" << res.solver->status << " nodes=" << res.solver->nodes
                    << " time_s=" << res.solver->time_s << "\n";
      }
      if (res.solver && res.solver->status == "limit" && res.per_gap_pred.empty())
        return kExitSolverLimit;
      return kExitOk;
    }

    if (*oracle) {
      Loaded loaded = load_instance(o_text, o_providers);
      ctg::model::TreeEnsemble ens = ctg::model::load_model(o_model);
      ctg::solver::Solution exhaustive =
          ctg::solver::brute_force(loaded.instance, loaded.tables, ens, o_tau, o_m, o_cap);
      auto [model_, map] = ctg::mip::build(loaded.instance, loaded.tables, ens, o_tau, o_m);
      ctg::solver::Solution searched =
          ctg::solver::solve(model_, map, loaded.instance, ens, o_tau);
      const bool match = std::fabs(exhaustive.objective - searched.objective) <= 1e-9;
      if (json_mode) {
        ordered_json j;
        j["brute_force"] = exhaustive.objective;
        j["solver"] = searched.objective;
        j["match"] = match;
        std::cout << j.dump() << "\n";
      } else {
        std::cout << "brute_force=" << exhaustive.objective
                  << " solver=" << searched.objective << " "
                  << (match ? "MATCH" : "MISMATCH") << "\n";
      }
      return match ? kExitOk : 1;
    }

    if (*bench) {
      std::vector<Loaded> loadeds;
      std::vector<std::string> failures;
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(b_dir)) {
        if (entry.path().extension() == ".txt") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& path : files) {
        try {
          loadeds.push_back(load_instance(path.string(), b_providers));
        } catch (const ctg::Error& e) {
          failures.push_back(path.string() + ": " + e.what());
        }
      }
      if (loadeds.empty()) throw ctg::DomainError("no usable .txt instances in " + b_dir);
      ctg::model::TreeEnsemble ens = ctg::model::load_model(b_model);
      ctg::eval::BenchOptions opts;
      opts.encodings.clear();
      for (const std::string& e : b_encodings)
        opts.encodings.push_back(ctg::mip::encoding_from_string(e));
      opts.m = b_m;
      opts.solve.time_limit_s = b_time_limit;
      std::vector<ctg::eval::BenchInstance> instances;
      for (const Loaded& l : loadeds) instances.push_back({&l.instance, &l.tables});
      ctg::eval::EvaluationReport report =
          ctg::eval::bench_objectives(instances, ens, b_taus, opts);
      write_file(b_out, report.bench_csv());
      std::cout << report.bench_csv();
      for (const std::string& f : failures) std::cerr << "error: " << f << "\n";
      return failures.empty() ? kExitOk : kExitInput;
    }

    if (*evalc) {
      std::vector<std::string> failures;
      std::vector<ctg::eval::EvalRecord> records;
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(e_results)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      ctg::model::TreeEnsemble learner;
      if (e_simulate) learner = ctg::model::load_model(e_learner);
      for (const auto& path : files) {
        try {
          ctg::strat::GenerationResult res =
              ctg::strat::result_from_json(read_file(path.string()));
          double distance;
          if (e_simulate) {
            ctg::feat::Instance instance = ctg::feat::make_instance(res.ctest.document);
            ctg::feat::FeatureTables tables =
                ctg::feat::compute_features(instance, ctg::feat::ProviderConfig::defaults());
            ctg::eval::ResponseSet sim = ctg::eval::simulate_responses(
                instance, tables, learner, res, e_r, seed);
            distance = std::fabs(res.tau -
                                 ctg::eval::observed_difficulty(sim, res.ctest.gap_count()));
          } else if (!e_responses.empty()) {
            fs::path rp = fs::path(e_responses) / path.filename();
            ctg::eval::ResponseSet rs = ctg::eval::ResponseSet::from_json(read_file(rp.string()));
            distance = std::fabs(res.tau -
                                 ctg::eval::observed_difficulty(rs, res.ctest.gap_count()));
          } else {
            distance = std::fabs(res.tau - res.tau_hat);
          }
          records.push_back({res.strategy, res.tau, distance});
        } catch (const ctg::Error& e) {
          failures.push_back(path.string() + ": " + e.what());
        }
      }
      ctg::eval::EvaluationReport report = ctg::eval::compare_strategies(records);
      write_file(e_out, report.strategy_csv());
      std::cout << report.strategy_csv();
      for (const std::string& f : failures) std::cerr << "error: " << f << "\n";
      return failures.empty() ? kExitOk : kExitInput;
    }

    if (*exportc) {
      Loaded loaded = load_instance(ex_text, ex_providers);
      ctg::model::TreeEnsemble ens = ctg::model::load_model(ex_model);
      ctg::mip::BuildOptions build;
      build.encoding = ctg::mip::encoding_from_string(ex_encoding);
      auto [model_, map] =
          ctg::mip::build(loaded.instance, loaded.tables, ens, ex_tau, ex_m, build);
      if (ex_format == "lp")
        ctg::mip::export_lp(model_, ex_out);
      else if (ex_format == "mps")
        ctg::mip::export_mps(model_, ex_out);
      else
        throw ctg::DomainError("unknown format: " + ex_format);
      std::cout << ctg::mip::stats_to_json(model_.stats()) << "\n";
      return kExitOk;
    }
  } catch (const ctg::TooLargeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOracleCap;
  } catch (const ctg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
