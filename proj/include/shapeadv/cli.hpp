// Copyright 2026 The ShapeAdv Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: gen-data, train-classifier, train-ae, attack,
// defend, eval and export. Every subcommand writes config.json (the resolved
// options) into its output directory before doing any work.

#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <numeric>
#include <iostream>

#include "shapeadv/harness.hpp"

namespace shapeadv::cli {

namespace fs = std::filesystem;

struct GenDataArgs {
  fs::path out;
  std::uint64_t seed = 7;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t points = 256;
  std::vector<std::string> categories;  // empty: all eight
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  std::size_t epochs = 12;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::vector<std::size_t> head_widths{128};  // classifier only
  std::string decoder = "mlp";                // auto-encoder only
};

struct SorArgs {
  std::size_t k = 2;
  double c = 2.5;
};

struct AttackArgs {
  fs::path model;
  fs::path ae;
  fs::path data;
  fs::path out;
  std::vector<std::string> methods{"latent-l2"};
  std::string mode = "untargeted";
  std::optional<double> lambda;  // fixed lambda; disables the search
  std::size_t steps = 200;
  double lr = 0.01;
  std::size_t k = 1;
  std::size_t naug = 32;
  std::size_t rounds = 6;
  double lambda_lo = 0.1;
  double lambda_hi = 1000.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t per_class = 0;
  bool include_misclassified = false;
  std::vector<std::string> defenses;
  std::vector<fs::path> transfer;
  SorArgs sor;
};

struct DefendArgs {
  std::string defense = "none";
  fs::path model;
  fs::path ae;
  fs::path data;
  fs::path attack_dir;
  fs::path out;
  std::size_t jobs = 1;
  SorArgs sor;
};

struct EvalArgs {
  fs::path attack_dir;
  fs::path out;  // defaults to <attack_dir>/eval
  std::vector<fs::path> transfer;
};

struct ExportArgs {
  fs::path in;
  fs::path out;
  std::string format = "text";
};

struct Args {
  std::string command;
  GenDataArgs gen;
  TrainArgs train_clf;
  TrainArgs train_ae;
  AttackArgs attack;
  DefendArgs defend;
  EvalArgs eval;
  ExportArgs exp;
};

namespace detail {

inline void add_sor(CLI::App* app, SorArgs& s) {
  app->add_option("--sor-k", s.k, "SOR neighbors")->capture_default_str();
  app->add_option("--sor-c", s.c, "SOR threshold multiplier")->capture_default_str();
}

inline void add_jobs(CLI::App* app, std::size_t& jobs) {
  app->add_option("--jobs", jobs, "worker threads")->envname("SHAPEADV_JOBS")->check(CLI::PositiveNumber)
      ->capture_default_str();
}

inline void add_train(CLI::App* app, TrainArgs& t) {
  app->add_option("--data", t.data, "dataset directory")->required();
  app->add_option("--out", t.out, "output directory")->required();
  app->add_option("--epochs", t.epochs)->capture_default_str();
  app->add_option("--batch", t.batch)->capture_default_str();
  app->add_option("--lr", t.lr)->capture_default_str();
  app->add_option("--seed", t.seed)->capture_default_str();
}

}  // namespace detail

/// Registers all subcommands on `app`, binding them to `args`.
inline void configure(CLI::App& app, Args& args) {
  app.require_subcommand(1);
  app.fallthrough(false);

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--out", args.gen.out, "output directory")->required();
  gen->add_option("--seed", args.gen.seed)->capture_default_str();
  gen->add_option("--train-per-class", args.gen.train_per_class)->capture_default_str();
  gen->add_option("--test-per-class", args.gen.test_per_class)->capture_default_str();
  gen->add_option("--points", args.gen.points)->capture_default_str();
  gen->add_option("--categories", args.gen.categories, "comma-separated subset")->delimiter(',');

  CLI::App* clf = app.add_subcommand("train-classifier", "train the victim classifier");
  detail::add_train(clf, args.train_clf);
  clf->add_option("--head-widths", args.train_clf.head_widths, "hidden widths of the head")->delimiter(',')
      ->capture_default_str();

  args.train_ae.epochs = 30;
  CLI::App* ae = app.add_subcommand("train-ae", "train the point-cloud auto-encoder");
  detail::add_train(ae, args.train_ae);
  ae->add_option("--decoder", args.train_ae.decoder)->check(CLI::IsMember({"mlp", "patch"}))->capture_default_str();

  AttackArgs& a = args.attack;
  CLI::App* atk = app.add_subcommand("attack", "run attacks over the test split");
  atk->add_option("--model", a.model, "victim classifier checkpoint")->required();
  atk->add_option("--ae", a.ae, "auto-encoder checkpoint (latent methods)");
  atk->add_option("--data", a.data, "dataset directory")->required();
  atk->add_option("--out", a.out, "output directory")->required();
  atk->add_option("--method", a.methods, "comma-separated methods")->delimiter(',')->capture_default_str();
  atk->add_option("--mode", a.mode)->check(CLI::IsMember({"untargeted", "targeted"}))->capture_default_str();
  atk->add_option("--lambda", a.lambda, "fixed lambda (disables the search)");
  atk->add_option("--steps", a.steps)->capture_default_str();
  atk->add_option("--lr", a.lr)->capture_default_str();
  atk->add_option("--k", a.k, "auxiliary neighbors")->capture_default_str();
  atk->add_option("--naug", a.naug, "points added by add-point")->capture_default_str();
  atk->add_option("--rounds", a.rounds, "lambda search rounds")->capture_default_str();
  atk->add_option("--lambda-lo", a.lambda_lo)->capture_default_str();
  atk->add_option("--lambda-hi", a.lambda_hi)->capture_default_str();
  atk->add_option("--seed", a.seed)->capture_default_str();
  detail::add_jobs(atk, a.jobs);
  atk->add_option("--per-class", a.per_class, "attack only the first n test instances per class")
      ->capture_default_str();
  atk->add_flag("--include-misclassified", a.include_misclassified);
  atk->add_option("--defense", a.defenses, "defenses to evaluate adversaries under")->delimiter(',')
      ->check(CLI::IsMember({"none", "sor", "ae"}));
  atk->add_option("--transfer", a.transfer, "extra classifier checkpoints");
  detail::add_sor(atk, a.sor);

  DefendArgs& d = args.defend;
  CLI::App* def = app.add_subcommand("defend", "evaluate a defense on clean data and stored adversaries");
  def->add_option("--defense", d.defense)->check(CLI::IsMember({"none", "sor", "ae"}))->capture_default_str();
  def->add_option("--model", d.model, "classifier checkpoint")->required();
  def->add_option("--ae", d.ae, "auto-encoder checkpoint (ae defense)");
  def->add_option("--data", d.data, "dataset directory")->required();
  def->add_option("--attack-dir", d.attack_dir, "output of an attack run");
  def->add_option("--out", d.out, "output directory")->required();
  detail::add_jobs(def, d.jobs);
  detail::add_sor(def, d.sor);

  CLI::App* ev = app.add_subcommand("eval", "summarize an attack directory");
  ev->add_option("attack_dir", args.eval.attack_dir, "output of an attack run")->required();
  ev->add_option("--out", args.eval.out);
  ev->add_option("--transfer", args.eval.transfer, "classifier checkpoints to transfer adversaries to");

  CLI::App* ex = app.add_subcommand("export", "convert PC3D clouds to text or binary");
  ex->add_option("--in", args.exp.in, "PC3D file or directory")->required();
  ex->add_option("--out", args.exp.out, "output directory")->required();
  ex->add_option("--format", args.exp.format)->check(CLI::IsMember({"text", "binary"}))->capture_default_str();
}

// ---------------------------------------------------------------------------
// Subcommands

inline void write_config(const fs::path& dir, const Json& config) {
  fs::create_directories(dir);
  shapeadv::detail::write_file(dir / "config.json", config.dump(1) + "\n");
}

inline std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const fs::path& p : paths) out.push_back(p.string());
  return out;
}

inline void check_classes(const ClassifierModel& m, const Dataset& ds, const fs::path& where) {
  if (m.classes != ds.classes()) {
    throw std::invalid_argument(where.string() + ": classifier has " + std::to_string(m.classes) +
                                " classes, dataset has " + std::to_string(ds.classes()));
  }
}

inline int gen_data(const GenDataArgs& g, std::ostream& log) {
  DatasetConfig dc;
  if (!g.categories.empty()) {
    dc.categories.clear();
    for (const std::string& c : g.categories) dc.categories.push_back(parse_category(c));
  }
  dc.train_per_class = g.train_per_class;
  dc.test_per_class = g.test_per_class;
  dc.points = g.points;
  dc.seed = g.seed;
  Json cats = Json::array();
  for (Category c : dc.categories) cats.push_back(category_name(c));
  write_config(g.out, Json{{"command", "gen-data"}, {"seed", g.seed}, {"train_per_class", g.train_per_class},
                           {"test_per_class", g.test_per_class}, {"points", g.points}, {"categories", cats}});
  const Dataset ds = build_dataset(dc);
  save_dataset(g.out, ds);
  log << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test clouds to " << g.out.string() << "\n";
  return 0;
}

inline Json train_config_json(const char* command, const TrainArgs& t) {
  return Json{{"command", command}, {"data", t.data.string()}, {"epochs", t.epochs},
              {"batch", t.batch},   {"lr", t.lr},                {"seed", t.seed}};
}

inline TrainConfig train_config(const TrainArgs& t) {
  TrainConfig tc;
  tc.epochs = t.epochs;
  tc.batch_size = t.batch;
  tc.learning_rate = t.lr;
  tc.seed = t.seed;
  return tc;
}

inline Json history_json(const std::vector<EpochStats>& history) {
  Json h = Json::array();
  for (const EpochStats& e : history) {
    h.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy},
                 {"test_accuracy", e.test_accuracy}, {"test_chamfer", e.test_chamfer}});
  }
  return h;
}

inline int train_classifier_cmd(const TrainArgs& t, std::ostream& log) {
  Json config = train_config_json("train-classifier", t);
  config["head_widths"] = t.head_widths;
  write_config(t.out, config);
  const Dataset ds = load_dataset(t.data);
  ClassifierArch arch;
  arch.head_widths = t.head_widths;
  const auto trained = train_classifier(ds.train, ds.test, ds.classes(), train_config(t), arch,
                                        [&](const EpochStats& e) {
                                          log << "epoch " << e.epoch << " loss " << e.loss << " train "
                                              << e.train_accuracy << " test " << e.test_accuracy << "\n";
                                        });
  save_model(t.out / "classifier.ckpt", trained.model);
  shapeadv::detail::write_file(t.out / "history.json", history_json(trained.history).dump(1) + "\n");
  return 0;
}

inline int train_ae_cmd(const TrainArgs& t, std::ostream& log) {
  Json config = train_config_json("train-ae", t);
  config["decoder"] = t.decoder;
  write_config(t.out, config);
  const Dataset ds = load_dataset(t.data);
  const DecoderKind kind = t.decoder == "patch" ? DecoderKind::Patch : DecoderKind::Mlp;
  const auto trained = train_autoencoder(ds.train, ds.test, train_config(t), kind, ds.points, {},
                                         [&](const EpochStats& e) {
                                           log << "epoch " << e.epoch << " loss " << e.loss << " test chamfer "
                                               << e.test_chamfer << "\n";
                                         });
  save_model(t.out / "ae.ckpt", trained.model);
  shapeadv::detail::write_file(t.out / "history.json", history_json(trained.history).dump(1) + "\n");
  return 0;
}

inline DefensePipeline make_defense(const std::string& name, const SorArgs& sor,
                                    const std::shared_ptr<const AutoencoderModel>& ae) {
  switch (parse_defense(name)) {
    case DefenseKind::None: return DefensePipeline::none();
    case DefenseKind::Sor: return DefensePipeline::sor({sor.k, sor.c});
    case DefenseKind::PointAe:
      if (!ae) throw std::invalid_argument("defense ae needs --ae");
      return DefensePipeline::pointae(ae);
  }
  throw std::logic_error("unreachable");
}

inline int attack_cmd(const AttackArgs& a, std::ostream& log) {
  SuiteOptions opts;
  for (const std::string& m : a.methods) opts.methods.push_back(parse_method(m));
  opts.attack.mode = parse_mode(a.mode);
  opts.attack.lambda_search = !a.lambda.has_value();
  if (a.lambda) opts.attack.lambda = *a.lambda;
  opts.attack.steps = a.steps;
  opts.attack.learning_rate = a.lr;
  opts.attack.k = a.k;
  opts.attack.n_aug = a.naug;
  opts.attack.rounds = a.rounds;
  opts.attack.lambda_lo = a.lambda_lo;
  opts.attack.lambda_hi = a.lambda_hi;
  opts.seed = a.seed;
  opts.jobs = a.jobs;
  opts.per_class = a.per_class;
  opts.include_misclassified = a.include_misclassified;

  Json config{{"command", "attack"},
              {"model", a.model.string()},
              {"ae", a.ae.string()},
              {"data", a.data.string()},
              {"jobs", a.jobs},
              {"sor", {{"k", a.sor.k}, {"c", a.sor.c}}},
              {"transfer", path_strings(a.transfer)}};
  write_config(a.out, config);

  bool needs_ae = std::any_of(opts.methods.begin(), opts.methods.end(), is_latent) ||
                  std::find(a.defenses.begin(), a.defenses.end(), "ae") != a.defenses.end();
  if (needs_ae && a.ae.empty()) throw std::invalid_argument("--ae is required for latent methods and the ae defense");

  const Dataset ds = load_dataset(a.data);
  const ClassifierModel victim = load_classifier(a.model);
  check_classes(victim, ds, a.model);
  std::shared_ptr<const AutoencoderModel> ae;
  if (!a.ae.empty()) ae = std::make_shared<const AutoencoderModel>(load_autoencoder(a.ae));
  std::vector<ClassifierModel> others;
  for (const fs::path& p : a.transfer) {
    others.push_back(load_classifier(p));
    check_classes(others.back(), ds, p);
  }

  Suite suite;
  suite.victim = &victim;
  suite.autoencoder = ae.get();
  suite.train = ds.train;
  suite.test = ds.test;
  suite.class_names = ds.class_names;
  for (const std::string& d : a.defenses) suite.defenses.push_back({d, make_defense(d, a.sor, ae)});
  for (std::size_t i = 0; i < others.size(); ++i) suite.transfer.push_back({a.transfer[i].string(), &others[i]});

  const auto start = std::chrono::steady_clock::now();
  const EvalReport rep = run_suite(suite, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Json full = suite_config(suite, opts);
  full["run"] = config;
  write_report(a.out, rep, full, true);
  log << report_table(rep);
  log << "attacked " << rep.attacked.size() << " instances in " << seconds << " s\n";

  std::size_t errors = 0;
  for (const MethodReport& m : rep.methods) errors += m.errors;
  if (errors) {
    for (const InstanceRecord& r : rep.records) {
      if (!r.error.empty()) log << "error: " << method_name(r.method) << " instance " << r.instance << ": " << r.error << "\n";
    }
    return 1;
  }
  return 0;
}

inline std::string adversary_name(const InstanceRecord& r) {
  char name[32];
  std::snprintf(name, sizeof name, "%05zu.pc3d", r.instance);
  return name;
}

inline int defend_cmd(const DefendArgs& d, std::ostream& log) {
  write_config(d.out, Json{{"command", "defend"},
                           {"defense", d.defense},
                           {"model", d.model.string()},
                           {"ae", d.ae.string()},
                           {"data", d.data.string()},
                           {"attack_dir", d.attack_dir.string()},
                           {"jobs", d.jobs},
                           {"sor", {{"k", d.sor.k}, {"c", d.sor.c}}}});
  const Dataset ds = load_dataset(d.data);
  const ClassifierModel m = load_classifier(d.model);
  check_classes(m, ds, d.model);
  std::shared_ptr<const AutoencoderModel> ae;
  if (!d.ae.empty()) ae = std::make_shared<const AutoencoderModel>(load_autoencoder(d.ae));
  const DefensePipeline pipeline = make_defense(d.defense, d.sor, ae);

  std::vector<std::size_t> hit(ds.test.size());
  parallel_for(ds.test.size(), d.jobs,
               [&](std::size_t i) { hit[i] = defended_predict(m, pipeline, ds.test[i].cloud) == ds.test[i].label; });
  const double clean = static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) /
                       static_cast<double>(ds.test.size());
  Json out{{"defense", d.defense}, {"clean_accuracy", clean}};
  log << "clean accuracy under " << d.defense << ": " << clean << "\n";

  if (!d.attack_dir.empty()) {
    Json config;
    const EvalReport rep = read_report(d.attack_dir / "report.json", &config);
    Json residual = Json::array();
    for (const MethodReport& mr : rep.methods) {
      std::vector<const InstanceRecord*> recs;
      for (const InstanceRecord& r : rep.records) {
        if (r.method == mr.method && r.error.empty()) recs.push_back(&r);
      }
      std::vector<std::size_t> goal(recs.size());
      parallel_for(recs.size(), d.jobs, [&](std::size_t i) {
        const InstanceRecord& r = *recs[i];
        const PointCloud adv =
            read_cloud(d.attack_dir / "adversaries" / std::string(method_name(r.method)) / adversary_name(r));
        goal[i] = shapeadv::detail::record_goal(r, defended_predict(m, pipeline, adv)) ? 1 : 0;
      });
      const std::size_t n = std::accumulate(goal.begin(), goal.end(), std::size_t{0});
      const double rate = recs.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(recs.size());
      residual.push_back({{"method", method_name(mr.method)},
                          {"attempted", recs.size()},
                          {"undefended_success_rate", mr.success_rate},
                          {"succeeded", n},
                          {"success_rate", rate}});
      log << method_name(mr.method) << ": " << mr.success_rate << " undefended, " << rate << " under " << d.defense
          << "\n";
    }
    out["residual"] = residual;
  }
  shapeadv::detail::write_file(d.out / "defend.json", out.dump(1) + "\n");
  return 0;
}

inline int eval_cmd(const EvalArgs& e, std::ostream& log) {
  const fs::path out = e.out.empty() ? e.attack_dir / "eval" : e.out;
  write_config(out, Json{{"command", "eval"}, {"attack_dir", e.attack_dir.string()},
                         {"transfer", path_strings(e.transfer)}});
  Json config;
  EvalReport rep = read_report(e.attack_dir / "report.json", &config);
  std::vector<ClassifierModel> targets;
  for (const fs::path& p : e.transfer) targets.push_back(load_classifier(p));
  std::vector<const ClassifierModel*> target_ptrs;
  for (const ClassifierModel& m : targets) target_ptrs.push_back(&m);

  for (MethodReport& mr : rep.methods) {
    if (target_ptrs.empty() || mr.attempted == 0) continue;
    std::vector<PointCloud> adv;
    std::vector<std::size_t> labels;
    for (const InstanceRecord& r : rep.records) {
      if (r.method != mr.method || !r.error.empty()) continue;
      adv.push_back(read_cloud(e.attack_dir / "adversaries" / std::string(method_name(r.method)) / adversary_name(r)));
      labels.push_back(r.label);
    }
    const std::vector<double> rates = transfer_eval(adv, labels, target_ptrs);
    for (std::size_t t = 0; t < rates.size(); ++t) {
      const auto fooled = static_cast<std::size_t>(std::llround(rates[t] * static_cast<double>(adv.size())));
      mr.transfer.push_back({e.transfer[t].string(), fooled, rates[t]});
    }
  }

  Json rows = Json::array();
  for (const MethodReport& mr : rep.methods) rows.push_back(to_json(mr));
  Json j{{"attack_dir", e.attack_dir.string()}, {"attacked", rep.attacked.size()}, {"methods", rows}};
  shapeadv::detail::write_file(out / "eval.json", j.dump(1) + "\n");
  const std::string table = report_table(rep);
  shapeadv::detail::write_file(out / "eval.txt", table);
  log << table;
  return 0;
}

inline int export_cmd(const ExportArgs& x, std::ostream& log) {
  write_config(x.out, Json{{"command", "export"}, {"in", x.in.string()}, {"format", x.format}});
  const CloudFormat format = x.format == "text" ? CloudFormat::Text : CloudFormat::Binary;
  const char* ext = format == CloudFormat::Text ? ".txt" : ".pc3d";
  std::vector<std::pair<fs::path, fs::path>> jobs;  // source, relative destination
  if (fs::is_directory(x.in)) {
    for (const auto& entry : fs::recursive_directory_iterator(x.in)) {
      const fs::path ext_in = entry.path().extension();
      if (entry.is_regular_file() && (ext_in == ".pc3d" || ext_in == ".txt")) {
        jobs.emplace_back(entry.path(), fs::relative(entry.path(), x.in).replace_extension(ext));
      }
    }
    std::sort(jobs.begin(), jobs.end());
  } else {
    jobs.emplace_back(x.in, x.in.filename().replace_extension(ext));
  }
  for (const auto& [src, rel] : jobs) write_cloud(x.out / rel, read_cloud(src), format);
  log << "exported " << jobs.size() << " clouds to " << x.out.string() << "\n";
  return 0;
}

/// Parses argv and runs the chosen subcommand. Returns the process exit code:
/// 0 iff nothing failed.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cerr) {
  CLI::App app{"shape-aware adversarial attacks on point-cloud classifiers", "shapeadv"};
  Args args;
  configure(app, args);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
      log << "error: unknown subcommand '" << argv[1] << "'\n";
    } else {
      log << "error: " << e.what() << "\n";
    }
    log << app.help();
    return e.get_exit_code();
  }
  args.command = app.get_subcommands().front()->get_name();
  try {
    if (args.command == "gen-data") return gen_data(args.gen, log);
    if (args.command == "train-classifier") return train_classifier_cmd(args.train_clf, log);
    if (args.command == "train-ae") return train_ae_cmd(args.train_ae, log);
    if (args.command == "attack") return attack_cmd(args.attack, log);
    if (args.command == "defend") return defend_cmd(args.defend, log);
    if (args.command == "eval") return eval_cmd(args.eval, log);
    if (args.command == "export") return export_cmd(args.exp, log);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  log << app.help();
  return 2;
}

}  // namespace shapeadv::cli
