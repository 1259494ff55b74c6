#include "dgnerf/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dgnerf {

void save_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    double v = std::clamp(img.px[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

Image load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w, h, maxv;
  f >> magic >> w >> h >> maxv;
  if (magic != "P6" || maxv != 255) throw std::runtime_error("unsupported ppm: " + path);
  f.get();  // single whitespace after header
  Image img(w, h);
  std::vector<unsigned char> buf(img.px.size());
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) throw std::runtime_error("truncated ppm: " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.px[i] = buf[i] / 255.0;
  return img;
}

void save_depth_text(const std::string& path, const DepthMap& m) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << m.height << " " << m.width << "\n";
  char num[40];
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      std::snprintf(num, sizeof(num), "%.17g", m.at(x, y));
      f << num << (x + 1 == m.width ? "" : " ");
    }
    f << "\n";
  }
}

DepthMap load_depth_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  int h, w;
  f >> h >> w;
  if (!f || h <= 0 || w <= 0) throw std::runtime_error("bad depth header: " + path);
  DepthMap m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!(f >> m.at(x, y))) throw std::runtime_error("truncated depth file: " + path);
  return m;
}

}  // namespace dgnerf
