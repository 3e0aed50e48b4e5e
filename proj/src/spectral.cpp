#include "irmae/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "irmae/datasets.hpp"
#include "irmae/kernels.hpp"

namespace irmae {

Tensor covariance(const Tensor& codes) {
  if (codes.ndim() != 2)
    throw ShapeError("covariance: expected [N,d] codes, got " + shape_str(codes.shape()));
  const std::size_t n = codes.shape()[0], d = codes.shape()[1];
  if (n < 2) throw ValueError("covariance: need at least 2 samples, got " + std::to_string(n));

  Tensor centered = Tensor::zeros({n, d}, DType::f64);
  auto z = centered.data<double>();
  for (std::size_t i = 0; i < n * d; ++i) z[i] = codes.at(i);
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) mean[j] += z[r * d + j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) z[r * d + j] -= mean[j];

  Tensor cov = Tensor::zeros({d, d}, DType::f64);
  kern::matmul_tn(z.data(), z.data(), cov.data<double>().data(), d, n, d);
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (auto& v : cov.data<double>()) v *= inv;
  return cov;
}

EigenResult sym_eigen(const Tensor& c) {
  if (c.ndim() != 2 || c.shape()[0] != c.shape()[1])
    throw ShapeError("sym_eigen: expected a square matrix, got " + shape_str(c.shape()));
  const std::size_t d = c.shape()[0];

  std::vector<double> a(d * d);
  for (std::size_t i = 0; i < d * d; ++i) a[i] = c.at(i);
  double norm = 0.0, asym = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      norm += a[i * d + j] * a[i * d + j];
      const double diff = a[i * d + j] - a[j * d + i];
      asym += diff * diff;
    }
  norm = std::sqrt(norm);
  if (std::sqrt(asym) > 1e-8 * std::max(norm, 1.0))
    throw ValueError("sym_eigen: input is not symmetric");

  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  const double target = 1e-12 * std::max(norm, 1e-300);
  bool converged = false;
  for (std::size_t sweep = 0; sweep < 100 && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += 2.0 * a[p * d + q] * a[p * d + q];
    if (std::sqrt(off) < target) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double app = a[p * d + p], aqq = a[q * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = cs * akp - sn * akq;
          a[k * d + q] = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = cs * apk - sn * aqk;
          a[q * d + k] = sn * apk + cs * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = cs * vkp - sn * vkq;
          v[k * d + q] = sn * vkp + cs * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += 2.0 * a[p * d + q] * a[p * d + q];
    if (std::sqrt(off) >= target)
      throw Error("sym_eigen: no convergence after 100 sweeps");
  }

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&a, d](std::size_t i, std::size_t j) { return a[i * d + i] > a[j * d + j]; });

  EigenResult out;
  out.values.resize(d);
  out.vectors = Tensor::zeros({d, d}, DType::f64);
  auto vec = out.vectors.data<double>();
  for (std::size_t col = 0; col < d; ++col) {
    out.values[col] = a[order[col] * d + order[col]];
    for (std::size_t row = 0; row < d; ++row) vec[row * d + col] = v[row * d + order[col]];
  }
  return out;
}

LatentSpectrum spectrum_of_codes(const Tensor& codes, double tau) {
  EigenResult eig = sym_eigen(covariance(codes));
  LatentSpectrum spec;
  spec.tau = tau;
  spec.singular_values.reserve(eig.values.size());
  for (double v : eig.values) spec.singular_values.push_back(v > 0.0 ? v : 0.0);
  const double top = spec.singular_values.empty() ? 0.0 : spec.singular_values[0];
  spec.normalized.resize(spec.singular_values.size(), 0.0);
  if (top > 0.0)
    for (std::size_t i = 0; i < spec.singular_values.size(); ++i)
      spec.normalized[i] = spec.singular_values[i] / top;
  spec.effective_rank = 0;
  for (double v : spec.normalized)
    if (v > tau) ++spec.effective_rank;
  return spec;
}

Tensor encode_all(const Model& model, const Tensor& images, std::size_t batch_size) {
  const std::size_t n = images.shape()[0];
  const std::size_t d = model.arch.latent_dim;
  Tensor codes = Tensor::zeros({n, d});
  auto dst = codes.data<float>();
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    const std::size_t hi = std::min(n, lo + batch_size);
    std::vector<int> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), static_cast<int>(lo));
    Tensor z = model.encode(gather(images, rows));
    const auto src = z.data<float>();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(lo * d));
  }
  return codes;
}

LatentSpectrum spectrum(const Model& model, const Tensor& eval_images, double tau,
                        std::size_t batch_size) {
  if (eval_images.shape()[0] < 2)
    throw ValueError("spectrum: need at least 2 eval samples");
  const Model* m = &model;
  Model collapsed;
  if (!model.stack.empty()) {
    collapsed = collapse(model);
    m = &collapsed;
  }
  return spectrum_of_codes(encode_all(*m, eval_images, batch_size), tau);
}

void export_spectrum_csv(const LatentSpectrum& spec, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
  std::fputs("index,singular_value,normalized\n", f);
  for (std::size_t i = 0; i < spec.singular_values.size(); ++i)
    std::fprintf(f, "%zu,%.9g,%.9g\n", i, spec.singular_values[i], spec.normalized[i]);
  if (std::fclose(f) != 0)
    throw FormatError(FormatError::Kind::io, "failed writing " + path);
}

}  // namespace irmae
