#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "irmae/rng.hpp"
#include "irmae/tensor.hpp"

namespace irmae {

// The seven generative factors of one synthetic shape image.
struct ShapeFactors {
  int kind;  // 0 square, 1 circle
  std::size_t size, cx, cy;
  double r, g, b;
};

struct ShapesSet {
  Tensor images;  // [N,3,32,32] f32 in [-1,1]
  std::vector<ShapeFactors> factors;
};

// One shape per image on a black background: size uniform in [3,8], center
// uniform in [8,24]^2, color uniform per channel, square or circle.
// Sample i depends only on rng and i, so prefixes agree across sizes.
ShapesSet gen_shapes(std::size_t n, const Rng& rng);

// Rasterizes one image from its factors into out[3*32*32] (row-major CHW).
void rasterize_shape(const ShapeFactors& f, float* out);

struct MnistSet {
  Tensor images;  // [N,1,32,32] f32
  std::vector<int> labels;
};

// Reads <dir>/<split>-images-idx3-ubyte and <split>-labels-idx1-ubyte
// (split: "train" or "t10k"). 28x28 inputs are zero-padded to 32x32.
// Values map to [-1,1], or [0,1] when unit_range is set.
MnistSet load_mnist(const std::string& dir, const std::string& split, bool unit_range = false);

struct ToyManifoldSet {
  Tensor samples;  // [N,D] f32
  Tensor basis;    // [D,r] f64, orthonormal columns
  Tensor coords;   // [N,r] f64
  std::size_t dim = 0, rank = 0;
  double noise_sigma = 0.0;
};

// x = B u + noise with B a random orthonormal-column basis and u ~ N(0, I_r).
ToyManifoldSet gen_toy_manifold(std::size_t dim, std::size_t rank, std::size_t n,
                                double noise_sigma, const Rng& rng);

// Index batches covering every sample exactly once; last partial batch kept.
std::vector<std::vector<int>> epoch_batches(std::size_t n, std::size_t batch_size, bool shuffle,
                                            Rng& rng);

// Row gather along the leading axis.
Tensor gather(const Tensor& data, const std::vector<int>& rows);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& rows);

}  // namespace irmae
