#pragma once

#include "adp/diffusion.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace adp {

/// One recorded expert episode: obs[t] was observed before actions[t] was
/// applied.
struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<Observation> obs;
  std::vector<Eigen::VectorXd> actions;

  int length() const { return static_cast<int>(actions.size()); }
};

/// Expert episodes sliced on demand into overlapping horizon-length windows.
/// Window (i, t) pairs obs[t] of trajectory i with actions[t .. t+horizon-1];
/// with pad_after = p, starts run up to length - horizon + p and indices past
/// the end repeat the final action. p = 0 gives length - horizon + 1 windows.
struct DemoDataset {
  int obs_dim = 6;
  int action_dim = 2;
  int horizon = 16;
  int pad_after = 0;  // 0 <= pad_after < horizon
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  int num_windows(std::size_t i) const;
  std::size_t total_windows() const;
  ActionSeq window(std::size_t i, int start) const;
  const Observation& window_obs(std::size_t i, int start) const;

  /// Throws std::invalid_argument when empty or dimensionally inconsistent,
  /// or when a trajectory is shorter than the horizon.
  void validate() const;
};

/// File layout (all integers and floats little-endian):
///   "ADPDEMO1" | u32 version=1 | u32 n_traj | u32 obs_dim | u32 action_dim |
///   u32 horizon | u32 pad_after | per trajectory: u64 seed, u32 length,
///   length*obs_dim f64 observations, length*action_dim f64 actions.
void save_dataset(const std::filesystem::path& path, const DemoDataset& ds);
DemoDataset load_dataset(const std::filesystem::path& path);

}  // namespace adp
