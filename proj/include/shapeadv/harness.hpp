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

// Attack suites over a test split: per-instance records, success rates,
// Chamfer statistics over category (or victim-target pair) means, residual
// success under defenses and transfer to other classifiers.

#pragma once

#include <atomic>
#include <mutex>
#include <thread>

#include "shapeadv/attacks.hpp"
#include "shapeadv/data.hpp"
#include "shapeadv/defenses.hpp"

namespace shapeadv {

struct InstanceRecord {
  std::size_t instance = 0;  // index into the test split
  std::size_t label = 0;
  std::optional<std::size_t> target;
  std::size_t clean_predicted = 0;  // victim prediction on the unattacked input
  Method method = Method::LatentL2;
  std::uint64_t seed = 0;
  bool success = false;
  std::size_t predicted = 0;
  double chamfer_to_input = 0.0;
  std::optional<double> latent_l2;
  double regularizer = 0.0;
  double lambda = 0.0;
  std::size_t best_step = 0;
  std::size_t steps_run = 0;
  std::vector<std::size_t> auxiliary;
  std::vector<std::pair<std::string, std::size_t>> defended;     // defense -> prediction
  std::vector<std::pair<std::string, std::size_t>> transferred;  // model -> prediction
  std::string error;  // non-empty when the attack threw

  // In memory only; adversaries go to PC3D files, traces to a JSON-lines file.
  PointCloud adversary;
  std::vector<TraceEntry> trace;
};

struct ChamferStats {
  double best = 0.0;
  double average = 0.0;
  double worst = 0.0;
};

struct GroupMean {
  std::string key;
  std::size_t count = 0;
  double mean = 0.0;
};

struct DefenseOutcome {
  std::string defense;
  std::size_t succeeded = 0;
  double success_rate = 0.0;
};

struct TransferOutcome {
  std::string model;
  std::size_t fooled = 0;
  double rate = 0.0;
};

struct MethodReport {
  Method method = Method::LatentL2;
  AttackMode mode = AttackMode::Untargeted;
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  std::size_t errors = 0;
  double success_rate = 0.0;
  std::optional<ChamferStats> chamfer;  // empty when nothing succeeded
  std::vector<GroupMean> groups;
  std::vector<DefenseOutcome> defenses;
  std::vector<TransferOutcome> transfer;
};

struct CleanAccuracy {
  std::string defense;
  double accuracy = 0.0;
};

struct EvalReport {
  std::size_t test_instances = 0;
  std::vector<std::size_t> attacked;  // test instances the suite attacked
  std::vector<CleanAccuracy> clean;   // "none" first, then one per defense
  std::vector<MethodReport> methods;
  std::vector<InstanceRecord> records;  // sorted by (method order, instance)
};

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of entries with success set. Works on records and AttackResults.
template <class Range>
double attack_success_rate(const Range& results) {
  std::size_t n = 0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    ++n;
    hits += r.success ? 1 : 0;
  }
  if (n == 0) throw std::invalid_argument("attack_success_rate: no results");
  return static_cast<double>(hits) / static_cast<double>(n);
}

/// best / average / worst over per-group means of the given values. Returns
/// nullopt when there are no groups at all.
inline std::optional<ChamferStats> chamfer_stats(const std::map<std::string, std::vector<double>>& groups) {
  if (groups.empty()) return std::nullopt;
  std::vector<double> means;
  for (const auto& [key, values] : groups) {
    if (values.empty()) throw std::invalid_argument("chamfer_stats: group '" + key + "' is empty");
    means.push_back(exact_sum(values) / static_cast<double>(values.size()));
  }
  ChamferStats s;
  s.best = *std::min_element(means.begin(), means.end());
  s.worst = *std::max_element(means.begin(), means.end());
  s.average = exact_sum(means) / static_cast<double>(means.size());
  // The correctly rounded mean can land a ulp outside [min, max] only when
  // all means coincide; pin it in that case.
  s.average = std::clamp(s.average, s.best, s.worst);
  return s;
}

/// "best / average / worst" in units of 1e-3, or "n/a" for empty stats.
inline std::string chamfer_row(const std::optional<ChamferStats>& s) {
  if (!s) return "n/a";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.3f / %.3f / %.3f", s->best * 1e3, s->average * 1e3, s->worst * 1e3);
  return buf;
}

/// Untargeted success of stored adversaries against each target model:
/// the fraction whose prediction differs from the true label.
inline std::vector<double> transfer_eval(std::span<const PointCloud> adversaries,
                                         std::span<const std::size_t> labels,
                                         std::span<const ClassifierModel* const> targets) {
  if (adversaries.size() != labels.size()) throw std::invalid_argument("transfer_eval: size mismatch");
  if (adversaries.empty()) throw std::invalid_argument("transfer_eval: no adversaries");
  std::vector<double> rates;
  for (const ClassifierModel* m : targets) {
    std::size_t fooled = 0;
    for (std::size_t i = 0; i < adversaries.size(); ++i) fooled += predict(*m, adversaries[i]) != labels[i] ? 1 : 0;
    rates.push_back(static_cast<double>(fooled) / static_cast<double>(adversaries.size()));
  }
  return rates;
}

// ---------------------------------------------------------------------------
// Suites

struct NamedDefense {
  std::string name;
  DefensePipeline pipeline;
};

struct NamedClassifier {
  std::string name;
  const ClassifierModel* model = nullptr;
};

/// In-memory inputs of an experiment. Everything is shared read-only.
struct Suite {
  const ClassifierModel* victim = nullptr;
  const AutoencoderModel* autoencoder = nullptr;
  std::span<const LabeledCloud> train;
  std::span<const LabeledCloud> test;
  std::vector<std::string> class_names;
  std::vector<NamedDefense> defenses;
  std::vector<NamedClassifier> transfer;
};

struct SuiteOptions {
  std::vector<Method> methods;
  AttackConfig attack;  // target is drawn per instance in targeted mode
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t per_class = 0;  // 0: every test instance, else the first n of each class
  bool include_misclassified = false;  // also attack instances the victim already gets wrong
};

/// Seeded target != label, shared by all methods for the instance.
inline std::size_t draw_target(std::uint64_t seed, std::size_t instance, std::size_t label, std::size_t classes) {
  std::mt19937_64 rng(derive_seed(seed, {instance, 0x74617267ULL}));
  std::uniform_int_distribution<std::size_t> pick(0, classes - 2);
  const std::size_t t = pick(rng);
  return t >= label ? t + 1 : t;
}

inline std::uint64_t instance_seed(std::uint64_t seed, std::size_t instance, Method method) {
  return derive_seed(seed, {instance, static_cast<std::uint64_t>(method) + 1});
}

/// Runs fn(i) for i in [0, n) on `jobs` threads. Each index is claimed once.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

namespace detail {

inline std::string group_key(const InstanceRecord& r, std::span<const std::string> names) {
  std::string key = names[r.label];
  if (r.target) key += "->" + names[*r.target];
  return key;
}

inline bool record_goal(const InstanceRecord& r, std::size_t predicted) {
  return r.target ? predicted == *r.target : predicted != r.label;
}

}  // namespace detail

/// Aggregates per-method numbers from records. Used by run_suite and to
/// re-derive a stored report.
inline std::vector<MethodReport> summarize(std::span<const InstanceRecord> records, std::span<const Method> methods,
                                           AttackMode mode, std::span<const std::string> class_names,
                                           std::span<const std::string> defenses,
                                           std::span<const std::string> transfer) {
  std::vector<MethodReport> out;
  for (Method method : methods) {
    MethodReport rep;
    rep.method = method;
    rep.mode = mode;
    std::map<std::string, std::vector<double>> groups;
    std::vector<std::size_t> defended(defenses.size(), 0);
    std::vector<std::size_t> fooled(transfer.size(), 0);
    for (const InstanceRecord& r : records) {
      if (r.method != method) continue;
      if (!r.error.empty()) {
        ++rep.errors;
        continue;
      }
      ++rep.attempted;
      if (r.success) {
        ++rep.succeeded;
        groups[detail::group_key(r, class_names)].push_back(r.chamfer_to_input);
      }
      for (std::size_t d = 0; d < defenses.size(); ++d) {
        for (const auto& [name, pred] : r.defended) {
          if (name == defenses[d] && detail::record_goal(r, pred)) ++defended[d];
        }
      }
      for (std::size_t t = 0; t < transfer.size(); ++t) {
        for (const auto& [name, pred] : r.transferred) {
          if (name == transfer[t] && pred != r.label) ++fooled[t];
        }
      }
    }
    const double n = static_cast<double>(rep.attempted);
    rep.success_rate = rep.attempted ? static_cast<double>(rep.succeeded) / n : 0.0;
    rep.chamfer = chamfer_stats(groups);
    for (const auto& [key, values] : groups) {
      rep.groups.push_back({key, values.size(), exact_sum(values) / static_cast<double>(values.size())});
    }
    for (std::size_t d = 0; d < defenses.size(); ++d) {
      rep.defenses.push_back({defenses[d], defended[d], rep.attempted ? static_cast<double>(defended[d]) / n : 0.0});
    }
    for (std::size_t t = 0; t < transfer.size(); ++t) {
      rep.transfer.push_back({transfer[t], fooled[t], rep.attempted ? static_cast<double>(fooled[t]) / n : 0.0});
    }
    out.push_back(std::move(rep));
  }
  return out;
}

/// Attacks every correctly classified test instance (optionally a per-class
/// prefix; optionally misclassified ones too) with every method. Results do
/// not depend on opts.jobs.
inline EvalReport run_suite(const Suite& suite, const SuiteOptions& opts) {
  if (suite.victim == nullptr) throw std::invalid_argument("run_suite: no victim classifier");
  if (opts.methods.empty()) throw std::invalid_argument("run_suite: no attack methods");
  const std::size_t classes = suite.victim->classes;
  if (suite.class_names.size() != classes) throw std::invalid_argument("run_suite: class names do not match victim");

  EvalReport rep;
  rep.test_instances = suite.test.size();

  // Clean accuracy, undefended and per defense.
  std::vector<std::vector<std::size_t>> clean_pred(1 + suite.defenses.size(),
                                                   std::vector<std::size_t>(suite.test.size()));
  parallel_for(suite.test.size(), opts.jobs, [&](std::size_t i) {
    clean_pred[0][i] = predict(*suite.victim, suite.test[i].cloud);
    for (std::size_t d = 0; d < suite.defenses.size(); ++d) {
      clean_pred[d + 1][i] = defended_predict(*suite.victim, suite.defenses[d].pipeline, suite.test[i].cloud);
    }
  });
  for (std::size_t d = 0; d < clean_pred.size(); ++d) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < suite.test.size(); ++i) hits += clean_pred[d][i] == suite.test[i].label ? 1 : 0;
    rep.clean.push_back({d == 0 ? "none" : suite.defenses[d - 1].name,
                         suite.test.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(suite.test.size())});
  }

  std::vector<std::size_t> taken(classes, 0);
  for (std::size_t i = 0; i < suite.test.size(); ++i) {
    const std::size_t y = suite.test[i].label;
    if (opts.per_class && taken[y] >= opts.per_class) continue;
    ++taken[y];
    if (opts.include_misclassified || clean_pred[0][i] == y) rep.attacked.push_back(i);
  }

  rep.records.resize(opts.methods.size() * rep.attacked.size());
  const AttackContext ctx{suite.victim, suite.autoencoder, suite.train};
  parallel_for(rep.records.size(), opts.jobs, [&](std::size_t job) {
    const Method method = opts.methods[job / rep.attacked.size()];
    const std::size_t i = rep.attacked[job % rep.attacked.size()];
    const LabeledCloud& e = suite.test[i];
    InstanceRecord& r = rep.records[job];
    r.instance = i;
    r.label = e.label;
    r.clean_predicted = clean_pred[0][i];
    r.method = method;
    r.seed = instance_seed(opts.seed, i, method);
    AttackConfig cfg = opts.attack;
    cfg.seed = r.seed;
    if (cfg.mode == AttackMode::Targeted) {
      cfg.target = draw_target(opts.seed, i, e.label, classes);
      r.target = cfg.target;
    }
    try {
      AttackResult res = run_attack(method, ctx, e.cloud, e.label, cfg);
      r.success = res.success;
      r.predicted = res.predicted;
      r.chamfer_to_input = res.chamfer_to_input;
      r.latent_l2 = res.latent_l2;
      r.regularizer = res.regularizer;
      r.lambda = res.lambda;
      r.best_step = res.best_step;
      r.steps_run = res.steps_run;
      r.auxiliary = res.auxiliary;
      for (const NamedDefense& d : suite.defenses) {
        r.defended.emplace_back(d.name, defended_predict(*suite.victim, d.pipeline, res.adversary));
      }
      for (const NamedClassifier& t : suite.transfer) {
        r.transferred.emplace_back(t.name, predict(*t.model, res.adversary));
      }
      r.adversary = std::move(res.adversary);
      r.trace = std::move(res.trace);
    } catch (const std::exception& ex) {
      r.error = ex.what();
    }
  });

  std::vector<std::string> defense_names;
  for (const NamedDefense& d : suite.defenses) defense_names.push_back(d.name);
  std::vector<std::string> transfer_names;
  for (const NamedClassifier& t : suite.transfer) transfer_names.push_back(t.name);
  rep.methods = summarize(rep.records, opts.methods, opts.attack.mode, suite.class_names, defense_names,
                          transfer_names);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

using Json = nlohmann::ordered_json;

inline Json to_json(const AttackConfig& c) {
  return Json{{"mode", mode_name(c.mode)},   {"lambda", c.lambda},
              {"lambda_search", c.lambda_search}, {"lambda_lo", c.lambda_lo},
              {"lambda_hi", c.lambda_hi},    {"rounds", c.rounds},
              {"steps", c.steps},            {"learning_rate", c.learning_rate},
              {"k", c.k},                    {"n_aug", c.n_aug}};
}

inline AttackConfig attack_config_from_json(const Json& j) {
  AttackConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.lambda_search = j.at("lambda_search").get<bool>();
  c.lambda_lo = j.at("lambda_lo").get<double>();
  c.lambda_hi = j.at("lambda_hi").get<double>();
  c.rounds = j.at("rounds").get<std::size_t>();
  c.steps = j.at("steps").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.k = j.at("k").get<std::size_t>();
  c.n_aug = j.at("n_aug").get<std::size_t>();
  return c;
}

inline Json to_json(const InstanceRecord& r) {
  Json j{{"instance", r.instance}, {"method", method_name(r.method)}, {"label", r.label}};
  j["target"] = r.target ? Json(*r.target) : Json(nullptr);
  j["seed"] = r.seed;
  j["clean_predicted"] = r.clean_predicted;
  if (!r.error.empty()) {
    j["error"] = r.error;
    return j;
  }
  j["success"] = r.success;
  j["predicted"] = r.predicted;
  j["chamfer_to_input"] = r.chamfer_to_input;
  j["latent_l2"] = r.latent_l2 ? Json(*r.latent_l2) : Json(nullptr);
  j["regularizer"] = r.regularizer;
  j["lambda"] = r.lambda;
  j["best_step"] = r.best_step;
  j["steps_run"] = r.steps_run;
  j["auxiliary"] = r.auxiliary;
  Json d = Json::object();
  for (const auto& [name, pred] : r.defended) d[name] = pred;
  j["defended"] = d;
  Json t = Json::object();
  for (const auto& [name, pred] : r.transferred) t[name] = pred;
  j["transferred"] = t;
  return j;
}

inline InstanceRecord record_from_json(const Json& j) {
  InstanceRecord r;
  r.instance = j.at("instance").get<std::size_t>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.label = j.at("label").get<std::size_t>();
  if (!j.at("target").is_null()) r.target = j.at("target").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.clean_predicted = j.at("clean_predicted").get<std::size_t>();
  if (j.contains("error")) {
    r.error = j.at("error").get<std::string>();
    return r;
  }
  r.success = j.at("success").get<bool>();
  r.predicted = j.at("predicted").get<std::size_t>();
  r.chamfer_to_input = j.at("chamfer_to_input").get<double>();
  if (!j.at("latent_l2").is_null()) r.latent_l2 = j.at("latent_l2").get<double>();
  r.regularizer = j.at("regularizer").get<double>();
  r.lambda = j.at("lambda").get<double>();
  r.best_step = j.at("best_step").get<std::size_t>();
  r.steps_run = j.at("steps_run").get<std::size_t>();
  r.auxiliary = j.at("auxiliary").get<std::vector<std::size_t>>();
  for (const auto& [name, pred] : j.at("defended").items()) r.defended.emplace_back(name, pred.get<std::size_t>());
  for (const auto& [name, pred] : j.at("transferred").items()) r.transferred.emplace_back(name, pred.get<std::size_t>());
  return r;
}

inline Json to_json(const MethodReport& m) {
  Json j{{"method", method_name(m.method)}, {"mode", mode_name(m.mode)}, {"attempted", m.attempted},
         {"succeeded", m.succeeded},       {"errors", m.errors},         {"success_rate", m.success_rate}};
  if (m.chamfer) {
    j["chamfer"] = {{"best", m.chamfer->best}, {"average", m.chamfer->average}, {"worst", m.chamfer->worst}};
  } else {
    j["chamfer"] = {{"empty", true}};
  }
  j["chamfer_row_e-3"] = chamfer_row(m.chamfer);
  j["grouping"] = m.mode == AttackMode::Targeted ? "victim-target pair" : "category";
  Json groups = Json::array();
  for (const GroupMean& g : m.groups) groups.push_back({{"group", g.key}, {"count", g.count}, {"mean", g.mean}});
  j["groups"] = groups;
  Json defenses = Json::array();
  for (const DefenseOutcome& d : m.defenses) {
    defenses.push_back({{"defense", d.defense}, {"succeeded", d.succeeded}, {"success_rate", d.success_rate}});
  }
  j["defenses"] = defenses;
  Json transfer = Json::array();
  for (const TransferOutcome& t : m.transfer) {
    transfer.push_back({{"model", t.model}, {"fooled", t.fooled}, {"rate", t.rate}});
  }
  j["transfer"] = transfer;
  return j;
}

/// The part of the configuration that determines the records; read_report
/// relies on these keys.
inline Json suite_config(const Suite& suite, const SuiteOptions& opts) {
  Json methods = Json::array();
  for (Method m : opts.methods) methods.push_back(method_name(m));
  Json defenses = Json::array();
  for (const NamedDefense& d : suite.defenses) defenses.push_back(d.name);
  Json transfer = Json::array();
  for (const NamedClassifier& t : suite.transfer) transfer.push_back(t.name);
  return Json{{"methods", methods},         {"attack", to_json(opts.attack)}, {"seed", opts.seed},
              {"per_class", opts.per_class}, {"include_misclassified", opts.include_misclassified},
              {"class_names", suite.class_names}, {"defenses", defenses},
              {"transfer_names", transfer}};
}

/// Whole report. `config` is echoed verbatim under "config".
inline Json report_json(const EvalReport& rep, const Json& config) {
  Json j;
  j["format"] = "shapeadv-report";
  j["version"] = 1;
  j["config"] = config;
  j["test_instances"] = rep.test_instances;
  j["attacked"] = rep.attacked;
  Json clean = Json::array();
  for (const CleanAccuracy& c : rep.clean) clean.push_back({{"defense", c.defense}, {"accuracy", c.accuracy}});
  j["clean_accuracy"] = clean;
  Json methods = Json::array();
  for (const MethodReport& m : rep.methods) methods.push_back(to_json(m));
  j["methods"] = methods;
  Json records = Json::array();
  for (const InstanceRecord& r : rep.records) records.push_back(to_json(r));
  j["records"] = records;
  return j;
}

/// Plain-text table: one row per method.
inline std::string report_table(const EvalReport& rep) {
  std::ostringstream os;
  os << "clean accuracy:";
  for (const CleanAccuracy& c : rep.clean) os << "  " << c.defense << " " << std::fixed << std::setprecision(3) << c.accuracy;
  os << "\n";
  os << std::left << std::setw(12) << "method" << std::setw(12) << "mode" << std::setw(10) << "success"
     << "chamfer best / average / worst (x1e-3)\n";
  for (const MethodReport& m : rep.methods) {
    os << std::left << std::setw(12) << method_name(m.method) << std::setw(12) << mode_name(m.mode) << std::setw(10)
       << std::fixed << std::setprecision(3) << m.success_rate << chamfer_row(m.chamfer) << "\n";
    for (const DefenseOutcome& d : m.defenses) {
      os << "    after " << d.defense << ": " << std::setprecision(3) << d.success_rate << "\n";
    }
    for (const TransferOutcome& t : m.transfer) {
      os << "    transfer to " << t.model << ": " << std::setprecision(3) << t.rate << "\n";
    }
  }
  return os.str();
}

/// Writes report.json, report.txt, one PC3D per adversary under
/// adversaries/<method>/ and, if requested, traces.jsonl.
inline void write_report(const std::filesystem::path& out, const EvalReport& rep, const Json& config,
                         bool traces) {
  std::filesystem::create_directories(out);
  detail::write_file(out / "report.json", report_json(rep, config).dump(1) + "\n");
  detail::write_file(out / "report.txt", report_table(rep));
  std::string lines;
  for (const InstanceRecord& r : rep.records) {
    if (!r.error.empty()) continue;
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << r.instance << ".pc3d";
    write_cloud(out / "adversaries" / std::string(method_name(r.method)) / name.str(), r.adversary);
    if (traces) {
      Json t{{"instance", r.instance}, {"method", method_name(r.method)}, {"lambda", r.lambda}};
      Json steps = Json::array();
      for (const TraceEntry& e : r.trace) steps.push_back({e.step, e.adversarial, e.regularizer});
      t["trace"] = steps;
      lines += t.dump() + "\n";
    }
  }
  if (traces) detail::write_file(out / "traces.jsonl", lines);
}

/// Rebuilds the aggregates of a stored report from its records.
inline EvalReport read_report(const std::filesystem::path& file, Json* config = nullptr) {
  const Json j = Json::parse(detail::read_file(file));
  if (j.at("format") != "shapeadv-report") throw FormatError(file.string() + ": not a report");
  EvalReport rep;
  rep.test_instances = j.at("test_instances").get<std::size_t>();
  rep.attacked = j.at("attacked").get<std::vector<std::size_t>>();
  for (const auto& c : j.at("clean_accuracy")) {
    rep.clean.push_back({c.at("defense").get<std::string>(), c.at("accuracy").get<double>()});
  }
  for (const auto& r : j.at("records")) rep.records.push_back(record_from_json(r));
  const Json& cfg = j.at("config");
  std::vector<Method> methods;
  for (const auto& m : cfg.at("methods")) methods.push_back(parse_method(m.get<std::string>()));
  const auto names = cfg.at("class_names").get<std::vector<std::string>>();
  const auto defenses = cfg.at("defenses").get<std::vector<std::string>>();
  const auto transfer = cfg.at("transfer_names").get<std::vector<std::string>>();
  rep.methods = summarize(rep.records, methods, parse_mode(cfg.at("attack").at("mode").get<std::string>()), names,
                          defenses, transfer);
  if (config) *config = cfg;
  return rep;
}

}  // namespace shapeadv
