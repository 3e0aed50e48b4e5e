#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "irmae/models.hpp"
#include "irmae/tensor.hpp"

namespace irmae {

// Unbiased covariance of row-major codes [N,d], computed and returned in
// double precision. Exactly symmetric by construction.
Tensor covariance(const Tensor& codes);

struct EigenResult {
  std::vector<double> values;  // descending
  Tensor vectors;              // [d,d] f64, column i pairs with values[i]
};

// Cyclic Jacobi for symmetric matrices; iterates until the off-diagonal
// Frobenius norm falls below 1e-12 * ||C||, at most 100 sweeps.
EigenResult sym_eigen(const Tensor& c);

struct LatentSpectrum {
  std::vector<double> singular_values;  // descending, clamped at 0
  std::vector<double> normalized;       // divided by the largest
  std::size_t effective_rank = 0;       // count of normalized values > tau
  double tau = 1e-2;
};

LatentSpectrum spectrum_of_codes(const Tensor& codes, double tau = 1e-2);

// Encodes eval samples (through the collapsed model when a stack is present)
// and measures the code-covariance spectrum.
LatentSpectrum spectrum(const Model& model, const Tensor& eval_images, double tau = 1e-2,
                        std::size_t batch_size = 64);

// Batched deterministic encoding helper shared by spectrum and the harness.
Tensor encode_all(const Model& model, const Tensor& images, std::size_t batch_size = 64);

// Header `index,singular_value,normalized`, one row per dimension.
void export_spectrum_csv(const LatentSpectrum& spec, const std::string& path);

}  // namespace irmae
