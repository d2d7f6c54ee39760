#pragma once

#include <cstdint>
#include <string>

#include "purelab/network.hpp"
#include "purelab/ntk.hpp"

namespace purelab {

// On-disk container: one text header line of space-separated key=value
// tokens starting with the magic word, then the payload as little-endian
// 64-bit floats, row-major. Schema tags: net1 (payload W, m*d values) and
// ntk1 (payload W, V+, V-, b_vec, sigma_vec; 3*m*d + 2*m values).
struct CheckpointMeta {
  std::string schema;  // "net1" or "ntk1"
  int d = 0;
  int k = 0;
  int m = 0;
  double b = 0.0;
  double sigma_rho = 0.0;
  double lambda = 0.0;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  bool single_v = false;  // ntk1 only
};

void save_net_checkpoint(const std::string& path, const SymmetricNet& net,
                         const CheckpointMeta& meta);

SymmetricNet load_net_checkpoint(const std::string& path,
                                 CheckpointMeta* meta_out = nullptr);

void save_ntk_checkpoint(const std::string& path, const NtkModel& model,
                         const CheckpointMeta& meta);

NtkModel load_ntk_checkpoint(const std::string& path,
                             CheckpointMeta* meta_out = nullptr);

}  // namespace purelab
