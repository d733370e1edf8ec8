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

#include <gtest/gtest.h>

#include <filesystem>

#include "rigs.hpp"
#include "shapeadv/harness.hpp"

namespace shapeadv {
namespace {

namespace fs = std::filesystem;

struct Flag {
  bool success;
};

TEST(SuccessRate, ExactFractions) {
  EXPECT_EQ(attack_success_rate(std::vector<Flag>{{true}, {true}}), 1.0);
  EXPECT_EQ(attack_success_rate(std::vector<Flag>{{false}, {false}}), 0.0);
  EXPECT_EQ(attack_success_rate(std::vector<Flag>{{true}, {false}, {true}, {true}}), 0.75);
  EXPECT_THROW(attack_success_rate(std::vector<Flag>{}), std::invalid_argument);
}

TEST(ChamferStats, GroupMeans) {
  const auto one = chamfer_stats({{"box", {2e-3, 4e-3}}});
  ASSERT_TRUE(one);
  EXPECT_EQ(one->best, 3e-3);
  EXPECT_EQ(one->average, 3e-3);
  EXPECT_EQ(one->worst, 3e-3);
  const auto two = chamfer_stats({{"a", {1e-3}}, {"b", {3e-3}}});
  ASSERT_TRUE(two);
  EXPECT_EQ(two->best, 1e-3);
  EXPECT_EQ(two->average, 2e-3);
  EXPECT_EQ(two->worst, 3e-3);
  EXPECT_EQ(chamfer_row(two), "1.000 / 2.000 / 3.000");
  EXPECT_FALSE(chamfer_stats({}));
  EXPECT_EQ(chamfer_row(std::nullopt), "n/a");
  EXPECT_THROW(chamfer_stats({{"a", {}}}), std::invalid_argument);
}

TEST(ChamferStats, OrderedOnRandomGroups) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(300.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::string, std::vector<double>> groups;
    const int n = 1 + trial % 9;
    for (int g = 0; g < n; ++g) {
      auto& v = groups[std::to_string(g)];
      v.resize(1 + static_cast<std::size_t>(g) % 4);
      for (double& x : v) x = e(rng);
    }
    const auto s = chamfer_stats(groups);
    ASSERT_TRUE(s);
    EXPECT_LE(s->best, s->average);
    EXPECT_LE(s->average, s->worst);
  }
}

TEST(Transfer, ConstantClassifier) {
  ClassifierModel constant = init_classifier(3, 1, ClassifierArch{{4}, {}});
  for (Dense& d : constant.point_mlp) d.weight.fill(0.0);
  constant.head[0].weight.fill(0.0);
  constant.head[0].bias = Tensor::vector({0.0, 1.0, 0.0});
  const std::vector<PointCloud> adv(5, PointCloud{{0, 0, 0}});
  const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
  const std::vector<const ClassifierModel*> targets{&constant};
  EXPECT_EQ(transfer_eval(adv, labels, targets), std::vector<double>{0.6});
  EXPECT_THROW(transfer_eval(adv, std::vector<std::size_t>{0}, targets), std::invalid_argument);
}

TEST(Seeds, TargetsAndInstanceSeeds) {
  for (std::size_t i = 0; i < 200; ++i) {
    const std::size_t label = i % 8;
    const std::size_t t = draw_target(9, i, label, 8);
    EXPECT_NE(t, label);
    EXPECT_LT(t, 8u);
    EXPECT_EQ(t, draw_target(9, i, label, 8));
  }
  EXPECT_NE(instance_seed(1, 3, Method::Chamfer), instance_seed(1, 3, Method::LatentL2));
  EXPECT_NE(instance_seed(1, 3, Method::Chamfer), instance_seed(1, 4, Method::Chamfer));
  EXPECT_NE(instance_seed(1, 3, Method::Chamfer), instance_seed(2, 3, Method::Chamfer));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (std::size_t jobs : {1u, 2u, 7u}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

class SmallSuite : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto& s = rigs::small();
    ae_ = std::make_shared<const AutoencoderModel>(s.autoencoder);
    other_ = std::make_unique<ClassifierModel>(init_classifier(3, 123, ClassifierArch{{32, 64}, {32}}));
  }
  static void TearDownTestSuite() {
    ae_.reset();
    other_.reset();
  }

  Suite suite() const {
    const auto& s = rigs::small();
    Suite suite;
    suite.victim = &s.classifier;
    suite.autoencoder = &s.autoencoder;
    suite.train = s.data.train;
    suite.test = s.data.test;
    suite.class_names = s.data.class_names;
    suite.defenses = {{"sor", DefensePipeline::sor({})}, {"ae", DefensePipeline::pointae(ae_)}};
    suite.transfer = {{"victim", &s.classifier}, {"other", other_.get()}};
    return suite;
  }

  static SuiteOptions options(AttackMode mode, std::size_t jobs) {
    SuiteOptions o;
    o.methods = {Method::LatentL2, Method::Chamfer, Method::Auxiliary, Method::ShiftPoint, Method::AddPoint};
    o.attack.mode = mode;
    o.attack.steps = 30;
    o.attack.rounds = 2;
    o.seed = 42;
    o.jobs = jobs;
    o.per_class = 2;
    return o;
  }

  static inline std::shared_ptr<const AutoencoderModel> ae_;
  static inline std::unique_ptr<ClassifierModel> other_;
};

std::string records_json(const EvalReport& r) {
  Json j = Json::array();
  for (const InstanceRecord& rec : r.records) j.push_back(to_json(rec));
  return j.dump();
}

TEST_F(SmallSuite, ParallelismDoesNotChangeResults) {
  const EvalReport one = run_suite(suite(), options(AttackMode::Targeted, 1));
  const EvalReport three = run_suite(suite(), options(AttackMode::Targeted, 3));
  EXPECT_EQ(records_json(one), records_json(three));
  ASSERT_EQ(one.records.size(), three.records.size());
  for (std::size_t i = 0; i < one.records.size(); ++i) {
    EXPECT_EQ(one.records[i].adversary, three.records[i].adversary);
  }
  EXPECT_EQ(report_json(one, Json::object()).dump(), report_json(three, Json::object()).dump());
}

TEST_F(SmallSuite, ReportInvariantsAndSelfConsistency) {
  const Suite s = suite();
  SuiteOptions opts = options(AttackMode::Untargeted, 2);
  const EvalReport rep = run_suite(s, opts);
  ASSERT_FALSE(rep.attacked.empty());
  EXPECT_EQ(rep.records.size(), rep.attacked.size() * opts.methods.size());
  ASSERT_EQ(rep.clean.size(), 3u);
  EXPECT_EQ(rep.clean[0].defense, "none");
  for (const MethodReport& m : rep.methods) {
    EXPECT_GE(m.success_rate, 0.0);
    EXPECT_LE(m.success_rate, 1.0);
    if (m.chamfer) {
      EXPECT_LE(m.chamfer->best, m.chamfer->average);
      EXPECT_LE(m.chamfer->average, m.chamfer->worst);
    }
    // Transfer to the victim itself reproduces the success rate.
    ASSERT_EQ(m.transfer.size(), 2u);
    EXPECT_EQ(m.transfer[0].model, "victim");
    EXPECT_EQ(m.transfer[0].rate, m.success_rate) << method_name(m.method);
    for (const GroupMean& g : m.groups) EXPECT_EQ(g.key.find("->"), std::string::npos);
  }
  for (const InstanceRecord& r : rep.records) {
    EXPECT_EQ(r.clean_predicted, r.label);
    EXPECT_TRUE(r.error.empty()) << r.error;
  }

  const fs::path dir = fs::temp_directory_path() / "shapeadv_harness_test_report";
  fs::remove_all(dir);
  const Json config = suite_config(s, opts);
  write_report(dir, rep, config, true);
  Json back_config;
  const EvalReport back = read_report(dir / "report.json", &back_config);
  EXPECT_EQ(back_config, config);
  EXPECT_EQ(report_json(back, config).dump(), report_json(rep, config).dump());
  EXPECT_TRUE(fs::exists(dir / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "traces.jsonl"));
  const InstanceRecord& first = rep.records.front();
  char name[32];
  std::snprintf(name, sizeof name, "%05zu.pc3d", first.instance);
  const PointCloud stored = read_cloud(dir / "adversaries" / std::string(method_name(first.method)) / name);
  EXPECT_LT(chamfer_sq(stored, first.adversary), 1e-10);
  fs::remove_all(dir);
}

TEST_F(SmallSuite, TargetedGroupsByPair) {
  SuiteOptions opts = options(AttackMode::Targeted, 2);
  opts.methods = {Method::ShiftPoint};
  const EvalReport rep = run_suite(suite(), opts);
  for (const InstanceRecord& r : rep.records) {
    ASSERT_TRUE(r.target);
    EXPECT_NE(*r.target, r.label);
  }
  for (const GroupMean& g : rep.methods[0].groups) EXPECT_NE(g.key.find("->"), std::string::npos) << g.key;
}

TEST_F(SmallSuite, ErrorsAreRecordedPerInstance) {
  SuiteOptions opts = options(AttackMode::Untargeted, 1);
  opts.methods = {Method::Auxiliary, Method::ShiftPoint};
  opts.attack.k = 1000;  // more neighbors than any class has
  const EvalReport rep = run_suite(suite(), opts);
  ASSERT_EQ(rep.methods.size(), 2u);
  EXPECT_EQ(rep.methods[0].errors, rep.attacked.size());
  EXPECT_EQ(rep.methods[0].attempted, 0u);
  EXPECT_EQ(rep.methods[1].errors, 0u);
  for (const InstanceRecord& r : rep.records) {
    if (r.method == Method::Auxiliary) EXPECT_FALSE(r.error.empty());
  }
}

TEST_F(SmallSuite, IncludeMisclassified) {
  SuiteOptions opts = options(AttackMode::Untargeted, 1);
  opts.methods = {Method::ShiftPoint};
  opts.per_class = 0;
  opts.include_misclassified = true;
  const EvalReport rep = run_suite(suite(), opts);
  EXPECT_EQ(rep.attacked.size(), rigs::small().data.test.size());
}

}  // namespace
}  // namespace shapeadv
