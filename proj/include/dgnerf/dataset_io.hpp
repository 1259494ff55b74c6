#pragma once

#include <string>
#include <vector>

#include "dgnerf/geometry.hpp"
#include "dgnerf/image.hpp"
#include "dgnerf/scenegen.hpp"

namespace dgnerf {

// One synthetic scene capture: per-frame RGB, ground-truth depth, coarse
// prior depth, the ground-truth trajectory, and the generation manifest.
struct Dataset {
  CameraIntrinsics K;
  double near = 0.1;
  double far = 4.0;
  std::vector<Image> images;
  std::vector<DepthMap> depth_gt;
  std::vector<DepthMap> priors;
  std::vector<PoseSE3> gt_poses;
  PriorDepthConfig prior_cfg;
  uint64_t seed = 0;

  int n_frames() const { return int(images.size()); }
};

// Directory layout:
//   frame_000.ppm, depth_000.txt, prior_000.txt, ...
//   traj_gt.txt
//   manifest.json   (intrinsics, bounds, prior config, seeds)
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace dgnerf
