#include "adp/rollout.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace adp;

namespace {

PushEnv at(Eigen::Vector2d agent, Eigen::Vector2d block) {
  return PushEnv::from_positions(agent, block, Eigen::Vector2d(0.0, 0.45));
}

DiffusionPolicy untrained_policy() {
  DenoiserDims d;
  d.hidden = {32};
  return DiffusionPolicy(init_params(1, d), make_noise_schedule(100, 1e-3, 0.2));
}

bool same_episode(const EpisodeResult& a, const EpisodeResult& b) {
  if (a.trace.size() != b.trace.size()) return false;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    const auto &x = a.trace[i], &y = b.trace[i];
    if (x.step != y.step || x.true_stage != y.true_stage ||
        x.scheduled_stage != y.scheduled_stage || x.n_action_steps != y.n_action_steps ||
        x.num_inference_steps != y.num_inference_steps) {
      return false;
    }
  }
  return a.env_seed == b.env_seed && a.success == b.success &&
         a.success_step == b.success_step && a.control_steps == b.control_steps &&
         a.replans == b.replans && a.denoiser_calls == b.denoiser_calls;
}

}  // namespace

TEST_SUITE("envbench") {

TEST_CASE("zero action leaves positions unchanged") {
  auto env = PushEnv::reset(3);
  const auto agent = env.agent, block = env.block;
  const auto r = env_step(env, Eigen::Vector2d::Zero());
  CHECK(env.agent == agent);
  CHECK(env.block == block);
  CHECK(env.steps == 1);
  CHECK(r.obs == env.observation());
}

TEST_CASE("reset ranges") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto env = PushEnv::reset(s);
    CHECK(env.block.x() >= -0.3);
    CHECK(env.block.x() <= 0.3);
    CHECK(env.block.y() >= -0.3);
    CHECK(env.block.y() <= 0.05);
    CHECK(env.target == Eigen::Vector2d(0.0, 0.45));
    const double behind = (env.block - env.agent).dot(env.push_direction());
    CHECK(behind >= 0.2 - 1e-12);
    CHECK(behind <= 0.4 + 1e-12);
    CHECK(env.stage == classify_stage(env));
  }
  CHECK(PushEnv::reset(7).agent == PushEnv::reset(7).agent);
}

TEST_CASE("stage thresholds on hand-built states") {
  const Eigen::Vector2d origin(0.0, 0.0);
  CHECK(classify_stage(at({0.5, 0.0}, origin)) == Stage::kApproach);
  CHECK(classify_stage(at({0.0, -0.1}, origin)) == Stage::kAlign);
  CHECK(classify_stage(at({0.05, 0.0}, origin)) == Stage::kAlign);
  CHECK(classify_stage(at({0.0, -0.05}, origin)) == Stage::kPush);
  CHECK(classify_stage(at({0.0, -0.06}, origin)) == Stage::kPush);
  CHECK(classify_stage(at({0.0, -0.061}, origin)) == Stage::kAlign);
  CHECK(classify_stage(at({0.0, 0.31}, {0.0, 0.36})) == Stage::kReach);
  CHECK(classify_stage(at({0.0, 0.28}, {0.0, 0.33})) == Stage::kPush);
  CHECK(classify_stage(at({0.0, 0.37}, {0.0, 0.42})) == Stage::kComplete);
  CHECK(classify_stage(at({0.9, 0.9}, {0.0, 0.42})) == Stage::kComplete);
}

TEST_CASE("step after done throws") {
  auto env = at({0.0, 0.37}, {0.0, 0.42});
  CHECK(env.done);
  CHECK(env.success);
  CHECK_THROWS_AS(env_step(env, Eigen::Vector2d::Zero()), EnvError);
  PushEnvConfig short_cfg;
  short_cfg.max_steps = 3;
  auto timed = PushEnv::reset(1, short_cfg);
  for (int i = 0; i < 3; ++i) env_step(timed, Eigen::Vector2d::Zero());
  CHECK(timed.done);
  CHECK_FALSE(timed.success);
  CHECK_THROWS_AS(env_step(timed, Eigen::Vector2d::Zero()), EnvError);
}

TEST_CASE("expert succeeds from 100 seeds with bounded actions") {
  int ok = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto env = PushEnv::reset(s);
    while (!env.done) {
      const auto a = scripted_expert(env);
      REQUIRE(a.cwiseAbs().maxCoeff() <= 1.0);
      env_step(env, a);
    }
    ok += env.success && env.steps < env.cfg.max_steps;
  }
  CHECK(ok == 100);
  CHECK(scripted_expert(at({0.0, 0.40}, {0.0, 0.45})).norm() < 1e-9);
}

TEST_CASE("noise-free demonstrations replay to success") {
  const auto ds = generate_demos(5, 11, 0.0, 16);
  ds.validate();
  REQUIRE(ds.size() == 5);
  for (const auto& t : ds.trajectories) {
    auto env = PushEnv::reset(t.seed);
    for (int i = 0; i < t.length(); ++i) {
      CHECK((env.observation() - t.obs[static_cast<std::size_t>(i)]).norm() == 0.0);
      env_step(env, t.actions[static_cast<std::size_t>(i)]);
    }
    CHECK(env.success);
  }
}

TEST_CASE("window slicing") {
  auto ds = generate_demos(3, 12, 0.2, 16);
  CHECK(ds.pad_after == 15);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int len = ds.trajectories[i].length();
    CHECK(ds.num_windows(i) == len);
    const ActionSeq last = ds.window(i, len - 1);
    for (int r = 0; r < 16; ++r) {
      CHECK((last.row(r).transpose() - ds.trajectories[i].actions.back()).norm() == 0.0);
    }
  }
  ds.pad_after = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int len = ds.trajectories[i].length();
    CHECK(ds.num_windows(i) == len - 16 + 1);
    total += static_cast<std::size_t>(len - 15);
    const ActionSeq w = ds.window(i, 2);
    for (int r = 0; r < 16; ++r) {
      CHECK((w.row(r).transpose() - ds.trajectories[i].actions[static_cast<std::size_t>(2 + r)]).norm() == 0.0);
    }
  }
  CHECK(ds.total_windows() == total);
  ds.pad_after = 16;
  CHECK_THROWS(ds.validate());
}

TEST_CASE("dataset file round trip") {
  const auto ds = generate_demos(2, 13, 0.1, 16);
  const auto path = std::filesystem::temp_directory_path() / "adp_test_demos.bin";
  save_dataset(path, ds);
  const auto back = load_dataset(path);
  CHECK(back.pad_after == ds.pad_after);
  CHECK(back.horizon == ds.horizon);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.trajectories[i].seed == ds.trajectories[i].seed);
    CHECK(back.trajectories[i].actions == ds.trajectories[i].actions);
    CHECK(back.trajectories[i].obs == ds.trajectories[i].obs);
  }
  std::filesystem::remove(path);
}

TEST_CASE("fixed budget call counting") {
  const auto policy = untrained_policy();
  RolloutOptions o;
  o.env.max_steps = 64;
  const auto r = rollout(policy, 5, FixedBudget{8, 100}, o, 1);
  REQUIRE_FALSE(r.success);
  CHECK(r.control_steps == 64);
  CHECK(r.replans == 8);
  CHECK(r.denoiser_calls == 800);
  o.sampler = SamplerKind::kDdim;
  CHECK(rollout(policy, 5, FixedBudget{8, 10}, o, 1).denoiser_calls == 80);
  CHECK_THROWS(rollout(policy, 5, FixedBudget{8, 101}, o, 1));
}

TEST_CASE("stage budgets spend fewer calls than the fixed baseline") {
  const auto policy = untrained_policy();
  ScheduleTable table;
  table.ranges = {8, 16, 20, 40};
  for (int s = 0; s < kNumStages; ++s) {
    table.entries.push_back({std::string(kStageNames[static_cast<std::size_t>(s)]),
                             s == 1 ? 8 : 16, s == 1 ? 40 : 20});
  }
  OracleClassifier oracle;
  HvtsBudget hb{table, SchedulerConfig{}, &oracle, 0};
  RolloutOptions o;
  o.env.max_steps = 64;
  const std::vector<std::uint64_t> seeds{1};
  const auto base = evaluate(policy, 3, FixedBudget{8, 100}, o, seeds);
  const auto hv = evaluate(policy, 3, hb, o, seeds);
  CHECK(hv.calls_per_step < base.calls_per_step);
  CHECK(base.calls_per_step == doctest::Approx(12.5));
  CHECK(hv.classifier_calls > 0);
  CHECK(compare_speedup(base, hv).nfe_speedup > 1.0);
}

TEST_CASE("oracle schedule trace follows the true stage") {
  const auto policy = untrained_policy();
  ScheduleTable table;
  for (int s = 0; s < kNumStages; ++s) {
    table.entries.push_back({std::string(kStageNames[static_cast<std::size_t>(s)]), 8 + s, 20 + 5 * s});
  }
  OracleClassifier oracle;
  HvtsBudget hb{table, SchedulerConfig{0.0, 1, 0}, &oracle, 0};
  RolloutOptions o;
  o.env.max_steps = 40;
  const auto r = rollout(policy, 9, hb, o, 2);
  REQUIRE_FALSE(r.trace.empty());
  for (const auto& t : r.trace) {
    CHECK(t.scheduled_stage == t.true_stage);
    CHECK(t.n_action_steps == 8 + t.true_stage);
    CHECK(t.num_inference_steps == 20 + 5 * t.true_stage);
  }
}

TEST_CASE("rollouts are deterministic") {
  const auto policy = untrained_policy();
  RolloutOptions o;
  o.env.max_steps = 48;
  for (auto kind : {SamplerKind::kDdpm, SamplerKind::kDdim}) {
    o.sampler = kind;
    CHECK(same_episode(rollout(policy, 4, FixedBudget{8, 20}, o, 3),
                       rollout(policy, 4, FixedBudget{8, 20}, o, 3)));
  }
  ExpertPolicy expert;
  CHECK(same_episode(rollout(expert, 4, FixedBudget{8, 20}, o, 3),
                     rollout(expert, 4, FixedBudget{8, 20}, o, 3)));
}

TEST_CASE("reference policies bracket the success rate") {
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto rnd = evaluate(RandomPolicy(), 20, FixedBudget{8, 10}, {}, seeds);
  CHECK(rnd.success_rate == 0.0);
  CHECK(rnd.total_calls == 0);
  const auto exp = evaluate(ExpertPolicy(), 50, FixedBudget{8, 10}, {}, seeds);
  CHECK(exp.success_rate == 1.0);
  CHECK(exp.early_success_rate <= exp.success_rate);
  CHECK(exp.episodes == 100);
  CHECK(exp.per_seed_success.size() == 2);
}

TEST_CASE("speedup comparison") {
  Metrics a, b;
  a.seeds = b.seeds = {1, 2, 3};
  a.episodes_per_seed = b.episodes_per_seed = 50;
  a.calls_per_step = 12.5;
  b.calls_per_step = 2.5;
  a.success_rate = 0.9;
  b.success_rate = 0.88;
  const auto r = compare_speedup(a, b);
  CHECK(r.nfe_speedup == doctest::Approx(5.0));
  CHECK(r.success_delta == doctest::Approx(-0.02));
  b.seeds = {1, 2, 4};
  CHECK_THROWS(compare_speedup(a, b));
  b.seeds = a.seeds;
  b.episodes_per_seed = 49;
  CHECK_THROWS(compare_speedup(a, b));
}

TEST_CASE("early success uses the step fraction") {
  ExpertPolicy expert;
  RolloutOptions o;
  const auto r = rollout(expert, 21, FixedBudget{8, 10}, o, 1);
  REQUIRE(r.success);
  CHECK(r.early_success == (*r.success_step <= static_cast<int>(0.6 * o.env.max_steps)));
  o.early_fraction = 0.0;
  CHECK_FALSE(rollout(expert, 21, FixedBudget{8, 10}, o, 1).early_success);
}

}  // TEST_SUITE
