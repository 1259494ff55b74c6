#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace dgnerf {

// Row-major RGB image, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> px;  // size width*height*3, interleaved rgb

  Image() = default;
  Image(int w, int h) : width(w), height(h), px(size_t(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) { return px[(size_t(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return px[(size_t(y) * width + x) * 3 + c]; }

  Eigen::Vector3d pixel(int x, int y) const {
    return {at(x, y, 0), at(x, y, 1), at(x, y, 2)};
  }
  void set_pixel(int x, int y, const Eigen::Vector3d& rgb) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = rgb[c];
  }
};

// Scalar per-pixel map (depths, priors, masks).
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> d;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), d(size_t(w) * h, 0.0) {}

  double& at(int x, int y) { return d[size_t(y) * width + x]; }
  double at(int x, int y) const { return d[size_t(y) * width + x]; }
};

// 8-bit binary PPM (P6). Round-trips deterministically for a given image.
void save_ppm(const std::string& path, const Image& img);
Image load_ppm(const std::string& path);

// Text array format: "H W" header line then one row of %.17g values per
// image row. %.17g round-trips doubles exactly.
void save_depth_text(const std::string& path, const DepthMap& m);
DepthMap load_depth_text(const std::string& path);

}  // namespace dgnerf
