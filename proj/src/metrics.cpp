#include "adp/rollout.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace adp {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::uint64_t episode_env_seed(std::uint64_t s, int i) {
  return splitmix64(splitmix64(s) ^ static_cast<std::uint64_t>(i));
}

Metrics evaluate(const ChunkPolicy& policy, int n_episodes,
                 const BudgetSource& budget, const RolloutOptions& opts,
                 const std::vector<std::uint64_t>& seeds,
                 std::vector<EpisodeResult>* episodes) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate needs n_episodes >= 1");
  if (seeds.empty()) throw std::invalid_argument("evaluate needs at least one seed");
  Metrics m;
  m.seeds = seeds;
  m.episodes_per_seed = n_episodes;
  std::vector<double> early;
  std::int64_t replans = 0;
  for (const auto s : seeds) {
    int succ = 0, early_succ = 0;
    for (int i = 0; i < n_episodes; ++i) {
      const std::uint64_t env_seed = episode_env_seed(s, i);
      EpisodeResult r = rollout(policy, env_seed, budget, opts,
                                splitmix64(env_seed ^ 0xD1B54A32D192ED03ULL));
      succ += r.success;
      early_succ += r.early_success;
      m.total_calls += r.denoiser_calls;
      m.total_steps += r.control_steps;
      replans += r.replans;
      m.classifier_calls += r.classifier_calls;
      m.classifier_failures += r.classifier_failures;
      m.wall_time += r.wall_time;
      if (episodes) episodes->push_back(std::move(r));
    }
    m.per_seed_success.push_back(static_cast<double>(succ) / n_episodes);
    early.push_back(static_cast<double>(early_succ) / n_episodes);
  }
  m.episodes = n_episodes * static_cast<int>(seeds.size());
  m.success_rate = mean_of(m.per_seed_success);
  m.success_std = std_of(m.per_seed_success);
  m.early_success_rate = mean_of(early);
  m.early_success_std = std_of(early);
  m.calls_per_step = m.total_steps > 0
                         ? static_cast<double>(m.total_calls) / m.total_steps
                         : 0.0;
  m.calls_per_replan =
      replans > 0 ? static_cast<double>(m.total_calls) / replans : 0.0;
  m.mean_steps = static_cast<double>(m.total_steps) / m.episodes;
  return m;
}

SpeedupReport compare_speedup(const Metrics& baseline, const Metrics& candidate) {
  if (baseline.seeds != candidate.seeds ||
      baseline.episodes_per_seed != candidate.episodes_per_seed) {
    throw std::invalid_argument("speedup needs identical seeds and episode counts");
  }
  SpeedupReport r;
  r.baseline = baseline.label;
  r.candidate = candidate.label;
  if (candidate.calls_per_step > 0.0) {
    r.nfe_speedup = baseline.calls_per_step / candidate.calls_per_step;
  }
  const double base_lat =
      baseline.total_steps > 0 ? baseline.wall_time / baseline.total_steps : 0.0;
  const double cand_lat =
      candidate.total_steps > 0 ? candidate.wall_time / candidate.total_steps : 0.0;
  if (cand_lat > 0.0) r.latency_speedup = base_lat / cand_lat;
  r.success_delta = candidate.success_rate - baseline.success_rate;
  return r;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<Metrics>& rows,
                       const std::vector<SpeedupReport>& speedups) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "policy,episodes,success,success_std,early_success,early_success_std,"
        "calls_per_step,calls_per_replan,mean_steps,total_calls,"
        "classifier_calls,classifier_failures,nfe_speedup,success_delta\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i];
    const SpeedupReport sp = i < speedups.size() ? speedups[i] : SpeedupReport{};
    os << m.label << ',' << m.episodes << ',' << fmt("%.12g", m.success_rate)
       << ',' << fmt("%.12g", m.success_std) << ','
       << fmt("%.12g", m.early_success_rate) << ','
       << fmt("%.12g", m.early_success_std) << ','
       << fmt("%.12g", m.calls_per_step) << ','
       << fmt("%.12g", m.calls_per_replan) << ',' << fmt("%.12g", m.mean_steps)
       << ',' << m.total_calls << ',' << m.classifier_calls << ','
       << m.classifier_failures << ',' << fmt("%.12g", sp.nfe_speedup) << ','
       << fmt("%.12g", sp.success_delta) << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_episodes_csv(const std::filesystem::path& path,
                        const std::vector<EpisodeResult>& episodes) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "env_seed,success,success_step,early_success,control_steps,replans,"
        "denoiser_calls,classifier_calls,classifier_failures\n";
  for (const auto& e : episodes) {
    os << e.env_seed << ',' << e.success << ','
       << (e.success_step ? std::to_string(*e.success_step) : std::string())
       << ',' << e.early_success << ',' << e.control_steps << ',' << e.replans
       << ',' << e.denoiser_calls << ',' << e.classifier_calls << ','
       << e.classifier_failures << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string format_speedup_table(const std::vector<Metrics>& rows,
                                 const std::vector<SpeedupReport>& speedups) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %10s %10s %12s %12s %12s %10s %10s\n",
                "Policy", "Succ(%)", "Early(%)", "NFE/step", "NFE/replan",
                "Lat(ms)", "Speedup", "WallSpd");
  os << line;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i];
    const SpeedupReport sp = i < speedups.size() ? speedups[i] : SpeedupReport{};
    const double lat_ms =
        m.total_steps > 0 ? 1e3 * m.wall_time / m.total_steps : 0.0;
    std::snprintf(line, sizeof line,
                  "%-14s %10.1f %10.1f %12.3f %12.2f %12.3f %9.2fx %9.2fx\n",
                  m.label.c_str(), 100.0 * m.success_rate,
                  100.0 * m.early_success_rate, m.calls_per_step,
                  m.calls_per_replan, lat_ms, sp.nfe_speedup, sp.latency_speedup);
    os << line;
  }
  os << "Early success: completion within 60% of the episode step limit.\n";
  return os.str();
}

}  // namespace adp
