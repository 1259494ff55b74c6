#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dgnerf/autodiff.hpp"

namespace dgnerf {

struct FieldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FieldConfig {
  int hidden_layers = 4;
  int hidden_width = 64;
  int l_pos = 6;  // position encoding frequencies
  int l_dir = 4;  // direction encoding frequencies
  // Standard NeRF conditions color on the view direction. For Lambertian
  // synthetic scenes at low resolution that capacity lets a wrong geometry
  // repaint itself per view, so the trainer can switch it off.
  bool use_view_dirs = true;
};

// MLP radiance field. Trunk consumes encoded positions; the density head is
// a linear layer with softplus, the color branch takes trunk features
// concatenated with the encoded view direction and ends in a sigmoid.
struct FieldParams {
  FieldConfig cfg;
  std::vector<Eigen::MatrixXd> weights;  // one per layer, input-major (in x out)
  std::vector<Eigen::VectorXd> biases;

  // Layer order: trunk[hidden_layers], sigma head, color hidden, color out.
  static FieldParams init(const FieldConfig& cfg, uint64_t seed);

  int trunk_layers() const { return cfg.hidden_layers; }
  size_t parameter_count() const;

  // Text checkpoint with a shape header; %.17g keeps the round trip
  // bit-exact.
  void save(const std::string& path) const;
  static FieldParams load(const std::string& path);

  bool operator==(const FieldParams& o) const;
};

int encoding_dim(int L);  // 3 + 6L

// [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^{L-1} pi v), cos(2^{L-1} pi v)]
Eigen::VectorXd positional_encoding(const Eigen::Vector3d& v, int L);

// Rows of `x` (n x 3) encoded to n x (3 + 6L).
ad::Var positional_encoding_on_tape(ad::Tape& tape, ad::Var x, int L);

// Field parameters registered on a tape (leaves when trainable).
struct FieldVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  const FieldConfig* cfg = nullptr;
};

FieldVars field_leaves(ad::Tape& tape, const FieldParams& params, bool trainable);

struct FieldOutput {
  ad::Var sigma;  // n x 1, >= 0
  ad::Var color;  // n x 3, in (0,1)
};

// Batched forward: positions as rows, one shared view direction.
// `dir_encoded` is the 1 x (3+6*l_dir) encoding of the unit direction.
FieldOutput field_forward_batch(ad::Tape& tape, const FieldVars& f, ad::Var x,
                                ad::Var dir_encoded);

// Same with one encoded direction row per position (cross-ray batching).
FieldOutput field_forward_rows(ad::Tape& tape, const FieldVars& f, ad::Var x,
                               ad::Var dir_encoded_rows);

// Single-point convenience (builds a throwaway tape).
std::pair<Eigen::Vector3d, double> field_forward(const FieldParams& params,
                                                 const Eigen::Vector3d& x,
                                                 const Eigen::Vector3d& d);

// Direction encoding helper shared by batch callers.
ad::Var encode_direction_on_tape(ad::Tape& tape, ad::Var dir_row, int L);

}  // namespace dgnerf
