#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "irmae/models.hpp"
#include "irmae/rng.hpp"
#include "irmae/tensor.hpp"

namespace irmae {

struct MvgModel {
  Tensor mean;      // [d] f64
  Tensor cov;       // [d,d] f64 (maximum-likelihood, 1/N)
  Tensor chol;      // [d,d] f64 lower-triangular, of cov + jitter*I
  double jitter = 0.0;
};

MvgModel fit_mvg(const Tensor& codes);
// samples = mean + L.eps, returned as [n,d] f32
Tensor sample_mvg(const MvgModel& model, std::size_t n, const Rng& rng);

struct GmmComponent {
  double weight = 0.0;
  Tensor mean;  // [d] f64
  Tensor cov;   // [d,d] f64
  Tensor chol;  // [d,d] f64, of cov + jitter*I
  double jitter = 0.0;
};

struct GmmModel {
  std::vector<GmmComponent> components;
  std::vector<double> log_likelihood;  // mean per-sample log-likelihood per iteration
  std::size_t reseeds = 0;             // empty components rescued during fitting
};

// EM with log-sum-exp responsibilities and k-means++-style seeding. Stops
// when the log-likelihood gain drops below tol or after max_iter iterations.
// Empty components are reseeded from the farthest point instead of failing.
GmmModel fit_gmm(const Tensor& codes, std::size_t k, const Rng& rng, std::size_t max_iter = 200,
                 double tol = 1e-6);
Tensor sample_gmm(const GmmModel& model, std::size_t n, const Rng& rng);

struct PcaMap {
  Tensor mean;        // [d] f64
  Tensor components;  // [d,m] f64, orthonormal columns, leading eigenvectors
  std::vector<double> stddev;  // per-component standard deviation
};

PcaMap fit_pca(const Tensor& codes, std::size_t m = 2);
// Codes on a grid_h x grid_w lattice spanning [-span, span] standard
// deviations along the first two principal directions, row-major [gh*gw, d].
Tensor pca_grid_codes(const PcaMap& map, std::size_t grid_w, std::size_t grid_h, double span);

// Decoded frames of the straight latent path between two inputs, t in [0,1]
// inclusive over `steps` points.
std::vector<Tensor> interpolate(const Model& model, const Tensor& y_a, const Tensor& y_b,
                                std::size_t steps);

// Tiles [N,C,H,W] images (C 1 or 3) row-major into a binary PPM; values map
// linearly from [lo,hi] to [0,255] with clamping.
void render_grid(const Tensor& images, std::size_t cols, const std::string& path,
                 double lo = -1.0, double hi = 1.0);

}  // namespace irmae
