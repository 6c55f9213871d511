#include "adp/dataset.hpp"

#include "adp/binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

namespace adp {
namespace {

constexpr std::string_view kDatasetMagic = "ADPDEMO1";
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

int DemoDataset::num_windows(std::size_t i) const {
  return std::max(0, trajectories.at(i).length() - horizon + 1 + pad_after);
}

std::size_t DemoDataset::total_windows() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    n += static_cast<std::size_t>(num_windows(i));
  }
  return n;
}

ActionSeq DemoDataset::window(std::size_t i, int start) const {
  const auto& tr = trajectories.at(i);
  if (start < 0 || start >= num_windows(i)) {
    throw std::out_of_range("window start out of range");
  }
  ActionSeq w(horizon, action_dim);
  const int last = tr.length() - 1;
  for (int t = 0; t < horizon; ++t) {
    w.row(t) =
        tr.actions[static_cast<std::size_t>(std::min(start + t, last))].transpose();
  }
  return w;
}

const Observation& DemoDataset::window_obs(std::size_t i, int start) const {
  if (start < 0 || start >= num_windows(i)) {
    throw std::out_of_range("window start out of range");
  }
  return trajectories.at(i).obs[static_cast<std::size_t>(start)];
}

void DemoDataset::validate() const {
  if (trajectories.empty()) throw std::invalid_argument("dataset is empty");
  if (obs_dim < 1 || action_dim < 1 || horizon < 1) {
    throw std::invalid_argument("dataset dimensions must be positive");
  }
  if (pad_after < 0 || pad_after >= horizon) {
    throw std::invalid_argument("pad_after must lie in [0, horizon)");
  }
  for (const auto& tr : trajectories) {
    if (tr.obs.size() != tr.actions.size()) {
      throw std::invalid_argument("trajectory obs/action counts differ");
    }
    if (tr.length() < horizon) {
      throw std::invalid_argument("trajectory shorter than the horizon");
    }
    for (const auto& o : tr.obs) {
      if (o.size() != obs_dim || !o.allFinite()) {
        throw std::invalid_argument("bad observation in trajectory");
      }
    }
    for (const auto& a : tr.actions) {
      if (a.size() != action_dim || !a.allFinite()) {
        throw std::invalid_argument("bad action in trajectory");
      }
    }
  }
}

void save_dataset(const std::filesystem::path& path, const DemoDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  binio::write_magic(os, kDatasetMagic);
  binio::write_u32(os, kDatasetVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(ds.trajectories.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(ds.obs_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(ds.action_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(ds.horizon));
  binio::write_u32(os, static_cast<std::uint32_t>(ds.pad_after));
  for (const auto& tr : ds.trajectories) {
    binio::write_u64(os, tr.seed);
    binio::write_u32(os, static_cast<std::uint32_t>(tr.length()));
    for (const auto& o : tr.obs) {
      for (Eigen::Index j = 0; j < o.size(); ++j) binio::write_f64(os, o[j]);
    }
    for (const auto& a : tr.actions) {
      for (Eigen::Index j = 0; j < a.size(); ++j) binio::write_f64(os, a[j]);
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

DemoDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  binio::expect_magic(is, kDatasetMagic);
  if (binio::read_u32(is) != kDatasetVersion) {
    throw binio::FormatError("unsupported dataset version");
  }
  DemoDataset ds;
  const std::uint32_t n = binio::read_u32(is);
  ds.obs_dim = static_cast<int>(binio::read_u32(is));
  ds.action_dim = static_cast<int>(binio::read_u32(is));
  ds.horizon = static_cast<int>(binio::read_u32(is));
  ds.pad_after = static_cast<int>(binio::read_u32(is));
  ds.trajectories.resize(n);
  for (auto& tr : ds.trajectories) {
    tr.seed = binio::read_u64(is);
    const std::uint32_t len = binio::read_u32(is);
    tr.obs.assign(len, Observation(ds.obs_dim));
    tr.actions.assign(len, Eigen::VectorXd(ds.action_dim));
    for (auto& o : tr.obs) {
      for (Eigen::Index j = 0; j < o.size(); ++j) o[j] = binio::read_f64(is);
    }
    for (auto& a : tr.actions) {
      for (Eigen::Index j = 0; j < a.size(); ++j) a[j] = binio::read_f64(is);
    }
  }
  ds.validate();
  return ds;
}

}  // namespace adp
