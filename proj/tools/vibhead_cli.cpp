// vibhead command line: synth, train, auth, eval.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vibhead.hpp"

namespace fs = std::filesystem;
using namespace vibhead;

namespace {

constexpr int kExitAccept = 0;
constexpr int kExitReject = 1;
constexpr int kExitError = 2;

/// One `--key` flag per config key; explicit aliases are merged into the
/// same option.
class ConfigFlags {
 public:
  ConfigFlags(CLI::App* app, const std::map<std::string, std::string>& aliases = {}) {
    app->add_option("--config", config_file_, "key = value file applied before flags");
    for (const auto& key : config_keys()) {
      std::string names = "--" + flag_name(key.name);
      if (auto it = aliases.find(key.name); it != aliases.end()) names = it->second + "," + names;
      options_[key.name] = app->add_option(names, values_[key.name], key.help);
    }
  }

  RunConfig resolve(RunConfig base = {}) const {
    if (!config_file_.empty()) base = load_config(config_file_, base);
    for (const auto& key : config_keys())
      if (options_.at(key.name)->count() > 0) set_config_value(base, key.name, values_.at(key.name));
    base.validate();
    return base;
  }

 private:
  static std::string flag_name(std::string s) {
    for (char& c : s)
      if (c == '_') c = '-';
    return s;
  }

  std::string config_file_;
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

int cmd_synth(const RunConfig& cfg, const fs::path& out) {
  const auto entries = write_corpus(out, cfg.corpus, cfg.synth);
  std::cout << "wrote " << entries.size() << " recordings and " << kCorpusManifest << " to " << out.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out) {
  const auto corpus = load_corpus(data);
  const auto samples = corpus_features(corpus, cfg.features);
  const auto users = corpus_users(samples, cfg.registered_users);
  const auto part = partition_samples(samples, users, cfg.train_fraction, cfg.split_seed);
  std::cerr << "training " << users.size() + 1 << " classifiers on " << samples.size() << " samples\n";
  const auto ensemble = build_ensemble(part.train, cfg.train, cfg.thresholds);
  const auto manifest = save_ensemble(out, ensemble, cfg);
  std::cout << "wrote " << manifest.member_archives.size() + 1 << " archives and " << kEnsembleManifest << " to "
            << out.string() << '\n';
  return 0;
}

int cmd_auth(const fs::path& ensemble_dir, const fs::path& sample, std::optional<double> alpha,
             std::optional<double> beta) {
  auto loaded = load_ensemble(ensemble_dir);
  Thresholds t = loaded.ensemble.thresholds();
  if (alpha) t.alpha = *alpha;
  if (beta) t.beta = *beta;
  loaded.ensemble.set_thresholds(t);
  const CorpusFile file{sample, load_recording(sample.string())};
  const auto x = features_from_file(file, loaded.config.features);
  const auto decision = authenticate(loaded.ensemble, x);
  write_decision(std::cout, decision);
  return decision.accepted() ? kExitAccept : kExitReject;
}

struct Grid {
  std::vector<double> clip_ms;
  std::vector<std::size_t> users;
};

/// "T=400,600,800,1000;N=6-10"; either part may be omitted.
Grid parse_grid(const std::string& spec, double default_t, std::size_t default_n) {
  Grid g;
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ';');) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ParseError, "grid part '" + part + "' needs key=values");
    const std::string key = part.substr(0, eq);
    std::stringstream vs(part.substr(eq + 1));
    for (std::string v; std::getline(vs, v, ',');) {
      if (key == "T") {
        g.clip_ms.push_back(parse_number(v, "grid T"));
      } else if (key == "N") {
        const auto dash = v.find('-');
        const auto lo = detail::parse_config_value<std::size_t>("grid N", v.substr(0, dash));
        const auto hi = dash == std::string::npos ? lo : detail::parse_config_value<std::size_t>("grid N", v.substr(dash + 1));
        for (std::size_t n = lo; n <= hi; ++n) g.users.push_back(n);
      } else {
        fail(ErrorCode::ParseError, "unknown grid key '" + key + "', expected T or N");
      }
    }
  }
  if (g.clip_ms.empty() && spec.find("T=") == std::string::npos) g.clip_ms.push_back(default_t);
  if (g.users.empty() && spec.find("N=") == std::string::npos) g.users.push_back(default_n);
  return g;
}

std::string cell_name(double t, std::size_t n) {
  return "report_T" + format_number(t) + "_N" + std::to_string(n) + ".txt";
}

int cmd_eval(const fs::path& ensemble_dir, const fs::path& data, const std::string& grid_spec, fs::path out,
             const ConfigFlags& flags) {
  auto loaded = load_ensemble(ensemble_dir);
  if (out.empty()) out = ensemble_dir;
  fs::create_directories(out);
  const auto corpus = load_corpus(data);
  std::ostringstream summary;
  write_summary_header(summary);

  if (grid_spec.empty()) {
    const auto samples = corpus_features(corpus, loaded.config.features);
    const auto part = partition_samples(samples, loaded.manifest.users, loaded.manifest.train_fraction,
                                        loaded.manifest.split_seed);
    const auto result = evaluate_partition(loaded.ensemble, part, loaded.manifest.clip_ms);
    std::ostringstream report;
    write_report(report, result.report);
    write_text_atomic(out / "report.txt", report.str());
    write_summary_rows(summary, result.report);
    std::cout << report.str();
  } else {
    const RunConfig cfg = flags.resolve(loaded.config);
    const auto grid = parse_grid(grid_spec, loaded.manifest.clip_ms, loaded.manifest.users.size());
    auto features_for = [&](double t) {
      FeatureConfig fc = cfg.features;
      fc.clip_ms = t;
      std::cerr << "extracting features at T = " << format_number(t) << " ms\n";
      return corpus_features(corpus, fc);
    };
    std::size_t written = 0;
    sweep(grid.clip_ms, grid.users, features_for, cfg.experiment(), [&](const EvalReport& r) {
      std::ostringstream report;
      write_report(report, r);
      write_text_atomic(out / cell_name(r.params.clip_ms, r.params.users), report.str());
      write_summary_rows(summary, r);
      ++written;
      std::cerr << "cell T=" << format_number(r.params.clip_ms) << " N=" << r.params.users << " done\n";
    });
    std::cout << "wrote " << written << " reports to " << out.string() << '\n';
  }
  write_text_atomic(out / "summary.csv", summary.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Head-vibration user authentication toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  fs::path synth_out;
  synth->add_option("--out", synth_out, "corpus directory")->required();
  ConfigFlags synth_flags(synth, {{"synth_seed", "--seed"}});

  auto* train = app.add_subcommand("train", "train the N+1 classifier ensemble");
  fs::path train_data, train_out;
  train->add_option("--data", train_data, "corpus directory")->required();
  train->add_option("--out", train_out, "ensemble directory")->required();
  ConfigFlags train_flags(train, {{"T_ms", "--T"}, {"train_seed", "--seed"}});

  auto* auth = app.add_subcommand("auth", "authenticate one recording");
  fs::path auth_ensemble, auth_sample;
  std::optional<double> auth_alpha, auth_beta;
  auth->add_option("--ensemble", auth_ensemble, "ensemble directory")->required();
  auth->add_option("--sample", auth_sample, "recording CSV")->required();
  auth->add_option("--alpha", auth_alpha, "override the global threshold");
  auth->add_option("--beta", auth_beta, "override the leave-one-out threshold");

  auto* eval = app.add_subcommand("eval", "evaluate an ensemble or sweep a grid");
  fs::path eval_ensemble, eval_data, eval_out;
  std::string eval_grid;
  eval->add_option("--ensemble", eval_ensemble, "ensemble directory")->required();
  eval->add_option("--data", eval_data, "corpus directory")->required();
  eval->add_option("--grid", eval_grid, "retrain per cell, e.g. \"T=400,600,800,1000;N=6-10\"");
  eval->add_option("--out", eval_out, "report directory (default: the ensemble directory)");
  ConfigFlags eval_flags(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_flags.resolve(), synth_out);
    if (train->parsed()) return cmd_train(train_flags.resolve(), train_data, train_out);
    if (auth->parsed()) return cmd_auth(auth_ensemble, auth_sample, auth_alpha, auth_beta);
    if (eval->parsed()) return cmd_eval(eval_ensemble, eval_data, eval_grid, eval_out, eval_flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
