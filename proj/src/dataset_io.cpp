#include "dgnerf/dataset_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace dgnerf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, i, ext);
  return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  for (int i = 0; i < ds.n_frames(); ++i) {
    save_ppm(dir + "/" + frame_name("frame", i, "ppm"), ds.images[size_t(i)]);
    save_depth_text(dir + "/" + frame_name("depth", i, "txt"), ds.depth_gt[size_t(i)]);
    save_depth_text(dir + "/" + frame_name("prior", i, "txt"), ds.priors[size_t(i)]);
  }
  std::vector<std::pair<int, PoseSE3>> traj;
  for (int i = 0; i < ds.n_frames(); ++i) traj.emplace_back(i, ds.gt_poses[size_t(i)]);
  save_trajectory(dir + "/traj_gt.txt", traj);

  json m;
  m["n_frames"] = ds.n_frames();
  m["intrinsics"] = {{"fx", ds.K.fx},       {"fy", ds.K.fy}, {"cx", ds.K.cx},
                     {"cy", ds.K.cy},       {"width", ds.K.width},
                     {"height", ds.K.height}};
  m["bounds"] = {{"near", ds.near}, {"far", ds.far}};
  m["prior"] = {{"s_true", ds.prior_cfg.s_true},
                {"k_true", ds.prior_cfg.k_true},
                {"noise_std", ds.prior_cfg.noise_std},
                {"corruption_fraction", ds.prior_cfg.corruption_fraction},
                {"corruption_patch", ds.prior_cfg.corruption_patch},
                {"rng_seed", ds.prior_cfg.rng_seed}};
  m["seed"] = ds.seed;
  std::ofstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("cannot write manifest: " + dir);
  f << m.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("missing manifest.json in " + dir);
  json m = json::parse(f);
  Dataset ds;
  int n = m.at("n_frames").get<int>();
  const auto& K = m.at("intrinsics");
  ds.K.fx = K.at("fx").get<double>();
  ds.K.fy = K.at("fy").get<double>();
  ds.K.cx = K.at("cx").get<double>();
  ds.K.cy = K.at("cy").get<double>();
  ds.K.width = K.at("width").get<int>();
  ds.K.height = K.at("height").get<int>();
  ds.near = m.at("bounds").at("near").get<double>();
  ds.far = m.at("bounds").at("far").get<double>();
  const auto& p = m.at("prior");
  ds.prior_cfg.s_true = p.at("s_true").get<double>();
  ds.prior_cfg.k_true = p.at("k_true").get<double>();
  ds.prior_cfg.noise_std = p.at("noise_std").get<double>();
  ds.prior_cfg.corruption_fraction = p.at("corruption_fraction").get<double>();
  ds.prior_cfg.corruption_patch = p.at("corruption_patch").get<int>();
  ds.prior_cfg.rng_seed = p.at("rng_seed").get<uint64_t>();
  ds.seed = m.at("seed").get<uint64_t>();

  for (int i = 0; i < n; ++i) {
    ds.images.push_back(load_ppm(dir + "/" + frame_name("frame", i, "ppm")));
    ds.depth_gt.push_back(load_depth_text(dir + "/" + frame_name("depth", i, "txt")));
    ds.priors.push_back(load_depth_text(dir + "/" + frame_name("prior", i, "txt")));
  }
  auto traj = load_trajectory(dir + "/traj_gt.txt");
  if (int(traj.size()) != n) throw std::runtime_error("trajectory/frame count mismatch");
  for (auto& [idx, pose] : traj) ds.gt_poses.push_back(pose);
  return ds;
}

}  // namespace dgnerf
