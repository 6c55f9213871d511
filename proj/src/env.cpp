#include "adp/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace adp {
namespace {

Eigen::Vector2d rotate(const Eigen::Vector2d& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// Beyond this angle from the push axis the expert circles the block first.
constexpr double kOrbitAngle = 1.2;
// Pushing continues while the agent stays roughly behind the block.
constexpr double kPushSlack = 0.03;
constexpr double kPushCos = 0.7;

double signed_angle(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
  return std::atan2(from.x() * to.y() - from.y() * to.x(), from.dot(to));
}

bool pushing_contact(const PushEnv& env) {
  const Eigen::Vector2d rel = env.block - env.agent;
  const double d = rel.norm();
  if (d > env.cfg.contact_radius + env.cfg.contact_slack || d < 1e-12) {
    return false;
  }
  return rel.dot(env.push_direction()) / d >= env.cfg.align_cos;
}

}  // namespace

PushEnv PushEnv::reset(std::uint64_t seed, const PushEnvConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bx(-0.3, 0.3);
  std::uniform_real_distribution<double> by(-0.3, 0.05);
  PushEnv env;
  env.cfg = cfg;
  env.target = cfg.target;
  env.block = {bx(rng), by(rng)};
  // Agent starts behind the block relative to the target, laterally offset.
  std::uniform_real_distribution<double> back(0.2, 0.4);
  std::uniform_real_distribution<double> side(-0.15, 0.15);
  const Eigen::Vector2d dir = env.push_direction();
  const Eigen::Vector2d perp(-dir.y(), dir.x());
  env.agent = (env.block - back(rng) * dir + side(rng) * perp)
                  .cwiseMax(-0.95)
                  .cwiseMin(0.95);
  env.stage = classify_stage(env);
  return env;
}

PushEnv PushEnv::from_positions(const Eigen::Vector2d& agent,
                                const Eigen::Vector2d& block,
                                const Eigen::Vector2d& target,
                                const PushEnvConfig& cfg) {
  PushEnv env;
  env.cfg = cfg;
  env.agent = agent;
  env.block = block;
  env.target = target;
  env.stage = classify_stage(env);
  env.success = env.stage == Stage::kComplete;
  env.done = env.success;
  return env;
}

Observation PushEnv::observation() const {
  Observation o(kObsDim);
  o << kRelScale * (block - agent), kRelScale * (target - block),
      push_direction();
  return o;
}

Eigen::Vector2d PushEnv::push_direction() const {
  const Eigen::Vector2d d = target - block;
  const double n = d.norm();
  return n > 1e-12 ? Eigen::Vector2d(d / n) : Eigen::Vector2d(1.0, 0.0);
}

Eigen::Vector2d PushEnv::pre_push_pose() const {
  return block - push_direction() * (cfg.contact_radius + 0.02);
}

Stage classify_stage(const PushEnv& env) {
  const auto& c = env.cfg;
  const double to_target = (env.block - env.target).norm();
  if (to_target < c.target_tolerance) return Stage::kComplete;
  if (pushing_contact(env)) {
    return to_target < c.reach_radius ? Stage::kReach : Stage::kPush;
  }
  if ((env.agent - env.pre_push_pose()).norm() <= c.align_radius) {
    return Stage::kAlign;
  }
  return Stage::kApproach;
}

StepResult env_step(PushEnv& env, const Eigen::Vector2d& action) {
  if (env.done) throw EnvError("env_step called after the episode ended");
  Eigen::Vector2d a = action;
  const double n = a.norm();
  if (!std::isfinite(n)) throw EnvError("non-finite action");
  if (n > 1.0) a /= n;
  const Eigen::Vector2d before = env.agent;
  env.agent += env.cfg.max_speed * a;
  env.agent = env.agent.cwiseMax(-1.0).cwiseMin(1.0);

  const Eigen::Vector2d rel = env.block - env.agent;
  const double r = env.cfg.contact_radius;
  if (rel.squaredNorm() < r * r) {
    const Eigen::Vector2d motion = env.agent - before;
    const double speed = motion.norm();
    if (speed > 1e-12) {
      // Flat pusher: slide the block along the motion until the overlap ends.
      const Eigen::Vector2d u = motion / speed;
      const double pu = rel.dot(u);
      const double t = -pu + std::sqrt(pu * pu - rel.squaredNorm() + r * r);
      env.block += t * u;
    } else {
      const double d = rel.norm();
      const Eigen::Vector2d normal =
          d > 1e-12 ? Eigen::Vector2d(rel / d) : env.push_direction();
      env.block = env.agent + r * normal;
    }
    env.block = env.block.cwiseMax(-1.0).cwiseMin(1.0);
  }
  ++env.steps;
  env.stage = classify_stage(env);
  env.success = env.stage == Stage::kComplete;
  env.done = env.success || env.steps >= env.cfg.max_steps;
  return {env.observation(), env.done};
}

Eigen::Vector2d scripted_expert(const PushEnv& env) {
  const auto& c = env.cfg;
  if (classify_stage(env) == Stage::kComplete) return Eigen::Vector2d::Zero();

  const Eigen::Vector2d dir = env.push_direction();
  const Eigen::Vector2d rel = env.agent - env.block;
  const double dist = rel.norm();
  const Eigen::Vector2d pre = env.pre_push_pose();
  const double cos_behind =
      dist > 1e-12 ? (-rel).dot(dir) / dist : -1.0;

  if (dist <= c.contact_radius + kPushSlack && cos_behind >= kPushCos) {
    // Close the gap and advance the block along dir by at most one step.
    const double s = std::min((env.target - env.block).norm(), c.max_speed);
    const double advance = std::max(0.0, dist - c.contact_radius) + s;
    return dir * std::min(1.0, advance / c.max_speed);
  }
  Eigen::Vector2d goal;
  const double ang = dist > 1e-12 ? signed_angle(rel, -dir) : M_PI;
  if (std::abs(ang) > kOrbitAngle) {
    // Orbit around the block toward the side opposite the target.
    const double orbit = c.contact_radius + 0.05;
    const Eigen::Vector2d unit =
        dist > 1e-12 ? Eigen::Vector2d(rel / dist) : Eigen::Vector2d(-dir);
    const double turn = std::copysign(std::min(std::abs(ang), 0.8), ang);
    goal = env.block + orbit * rotate(unit, turn);
  } else {
    goal = pre;
  }
  Eigen::Vector2d a = (goal - env.agent) / c.max_speed;
  const double n = a.norm();
  if (n > 1.0) a /= n;
  return a;
}

ExpertEpisode run_expert_episode(std::uint64_t seed, double noise_level,
                                 const PushEnvConfig& cfg, DemoLabels labels) {
  ExpertEpisode ep;
  ep.traj.seed = seed;
  PushEnv env = PushEnv::reset(seed, cfg);
  std::mt19937_64 rng(seed ^ 0xA0761D6478BD642FULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  while (!env.done) {
    const Eigen::Vector2d clean = scripted_expert(env);
    Eigen::Vector2d a = clean;
    if (noise_level > 0) {
      a += noise_level * Eigen::Vector2d(noise(rng), noise(rng));
      a = a.cwiseMax(-1.0).cwiseMin(1.0);
    }
    ep.traj.obs.push_back(env.observation());
    ep.traj.actions.emplace_back(labels == DemoLabels::kExpert ? clean : a);
    env_step(env, a);
  }
  ep.success = env.success;
  return ep;
}

DemoDataset generate_demos(int n, std::uint64_t seed, double noise_level,
                           int horizon, const PushEnvConfig& cfg,
                           int max_attempts, DemoLabels labels) {
  if (n < 1) throw std::invalid_argument("generate_demos needs n >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (max_attempts <= 0) max_attempts = 10 * n;
  DemoDataset ds;
  ds.obs_dim = PushEnv::kObsDim;
  ds.action_dim = PushEnv::kActionDim;
  ds.horizon = horizon;
  ds.pad_after = horizon - 1;
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 seeds(seq);
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(ds.size()) < n;
       ++attempt) {
    auto ep = run_expert_episode(seeds(), noise_level, cfg, labels);
    // Episodes shorter than one window contribute no training pairs.
    if (ep.success && ep.traj.length() >= horizon) {
      ds.trajectories.push_back(std::move(ep.traj));
    }
  }
  if (static_cast<int>(ds.size()) < n) {
    throw DemoGenerationError("only " + std::to_string(ds.size()) + " of " +
                              std::to_string(n) +
                              " demonstrations succeeded within the retry budget");
  }
  return ds;
}

Frame render_frame(const PushEnv& env, int size) {
  Frame f;
  f.width = f.height = size;
  f.rgb.assign(static_cast<std::size_t>(size * size * 3), 255);
  auto to_px = [size](double v) { return (v + 1.0) * 0.5 * (size - 1); };
  auto disk = [&](const Eigen::Vector2d& c, double radius, std::uint8_t r,
                  std::uint8_t g, std::uint8_t b) {
    const double cx = to_px(c.x()), cy = to_px(-c.y());
    const double rp = std::max(1.5, radius * 0.5 * (size - 1));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rp * rp) {
          auto* px = &f.rgb[static_cast<std::size_t>((y * size + x) * 3)];
          px[0] = r;
          px[1] = g;
          px[2] = b;
        }
      }
    }
  };
  disk(env.target, env.cfg.target_tolerance, 60, 200, 60);
  disk(env.block, env.cfg.contact_radius * 0.6, 210, 50, 50);
  disk(env.agent, env.cfg.contact_radius * 0.4, 40, 80, 220);
  return f;
}

}  // namespace adp
