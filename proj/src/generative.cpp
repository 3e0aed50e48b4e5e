#include "irmae/generative.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "irmae/ops.hpp"
#include "irmae/spectral.hpp"

namespace irmae {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Lower-triangular Cholesky of a + jitter*I into l; false on failure.
bool try_cholesky(const std::vector<double>& a, std::size_t d, double jitter,
                  std::vector<double>& l) {
  l.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * d + j] + (i == j ? jitter : 0.0);
      for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) return false;
        l[i * d + i] = std::sqrt(s);
      } else {
        l[i * d + j] = s / l[j * d + j];
      }
    }
  }
  return true;
}

// Walks the jitter ladder until a factorization succeeds.
std::pair<std::vector<double>, double> cholesky_ladder(const std::vector<double>& a,
                                                       std::size_t d,
                                                       const std::vector<double>& ladder) {
  std::vector<double> l;
  for (double jitter : ladder)
    if (try_cholesky(a, d, jitter, l)) return {std::move(l), jitter};
  throw Error("cholesky: factorization failed after jitter ladder exhausted");
}

std::vector<double> absolute_ladder() {
  std::vector<double> ladder{0.0};
  for (double j = 1e-9; j <= 1.0; j *= 10.0) ladder.push_back(j);
  return ladder;
}

std::vector<double> trace_ladder(const std::vector<double>& a, std::size_t d) {
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += a[i * d + i];
  const double base = 1e-6 * std::max(trace, 1e-30) / static_cast<double>(d);
  std::vector<double> ladder{0.0};
  for (double j = base; j <= std::max(trace, 1.0); j *= 10.0) ladder.push_back(j);
  return ladder;
}

std::vector<double> to_f64_rows(const Tensor& codes, std::size_t* n_out, std::size_t* d_out) {
  if (codes.ndim() != 2)
    throw ShapeError("expected [N,d] codes, got " + shape_str(codes.shape()));
  const std::size_t n = codes.shape()[0], d = codes.shape()[1];
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n * d; ++i) x[i] = codes.at(i);
  *n_out = n;
  *d_out = d;
  return x;
}

// mean and maximum-likelihood covariance (1/N)
void mean_and_cov(const std::vector<double>& x, std::size_t n, std::size_t d,
                  std::vector<double>& mean, std::vector<double>& cov) {
  mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  cov.assign(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double da = x[i * d + a] - mean[a];
      for (std::size_t b = 0; b <= a; ++b)
        cov[a * d + b] += da * (x[i * d + b] - mean[b]);
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      cov[a * d + b] /= static_cast<double>(n);
      cov[b * d + a] = cov[a * d + b];
    }
}

Tensor wrap_f64(std::vector<double> v, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape), DType::f64);
  std::copy(v.begin(), v.end(), t.data<double>().begin());
  return t;
}

double log_density(const double* x, const double* mean, const std::vector<double>& l,
                   std::size_t d) {
  // forward substitution of L y = (x - mean)
  double quad = 0.0, logdet = 0.0;
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = x[i] - mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * d + k] * y[k];
    y[i] = s / l[i * d + i];
    quad += y[i] * y[i];
    logdet += std::log(l[i * d + i]);
  }
  return -0.5 * (static_cast<double>(d) * std::log(kTwoPi) + quad) - logdet;
}

}  // namespace

MvgModel fit_mvg(const Tensor& codes) {
  std::size_t n, d;
  const auto x = to_f64_rows(codes, &n, &d);
  if (n < 2) throw ValueError("fit_mvg: need at least 2 samples");
  std::vector<double> mean, cov;
  mean_and_cov(x, n, d, mean, cov);
  auto [l, jitter] = cholesky_ladder(cov, d, absolute_ladder());
  MvgModel model;
  model.mean = wrap_f64(std::move(mean), {d});
  model.cov = wrap_f64(std::move(cov), {d, d});
  model.chol = wrap_f64(std::move(l), {d, d});
  model.jitter = jitter;
  return model;
}

namespace {

Tensor draw_gaussian(const double* mean, const std::vector<double>& l, std::size_t d,
                     std::size_t n, Rng& rng) {
  Tensor out = Tensor::zeros({n, d});
  auto data = out.data<float>();
  std::vector<double> eps(d);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < d; ++j) eps[j] = rng.normal();
    for (std::size_t i = 0; i < d; ++i) {
      double v = mean[i];
      for (std::size_t j = 0; j <= i; ++j) v += l[i * d + j] * eps[j];
      data[s * d + i] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

Tensor sample_mvg(const MvgModel& model, std::size_t n, const Rng& rng) {
  const std::size_t d = model.mean.shape()[0];
  std::vector<double> l(model.chol.data<double>().begin(), model.chol.data<double>().end());
  Rng stream = rng.split("mvg-sample");
  return draw_gaussian(model.mean.data<double>().data(), l, d, n, stream);
}

GmmModel fit_gmm(const Tensor& codes, std::size_t k, const Rng& rng, std::size_t max_iter,
                 double tol) {
  std::size_t n, d;
  const auto x = to_f64_rows(codes, &n, &d);
  if (k == 0) throw ValueError("fit_gmm: k must be at least 1");
  if (n < k) throw ValueError("fit_gmm: " + std::to_string(n) + " samples for k=" +
                              std::to_string(k) + " components");
  Rng seed_rng = rng.split("gmm-seed");

  // k-means++-style seeding
  std::vector<std::vector<double>> means;
  means.reserve(k);
  auto point = [&x, d](std::size_t i) {
    return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(i * d),
                               x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  };
  auto dist2_to_nearest = [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : means) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[i * d + j] - m[j];
        s += diff * diff;
      }
      best = std::min(best, s);
    }
    return best;
  };
  means.push_back(point(seed_rng.uniform_int(0, n - 1)));
  while (means.size() < k) {
    std::vector<double> dist(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = dist2_to_nearest(i);
      total += dist[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      const double u = seed_rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += dist[i];
        if (cum >= u) {
          pick = i;
          break;
        }
      }
    } else {
      pick = seed_rng.uniform_int(0, n - 1);
    }
    means.push_back(point(pick));
  }

  std::vector<double> gmean, gcov;
  mean_and_cov(x, n, d, gmean, gcov);

  struct Comp {
    double weight;
    std::vector<double> mean, cov, chol;
    double jitter;
  };
  std::vector<Comp> comps(k);
  for (std::size_t j = 0; j < k; ++j) {
    comps[j].weight = 1.0 / static_cast<double>(k);
    comps[j].mean = means[j];
    comps[j].cov = gcov;
    auto [l, jit] = cholesky_ladder(gcov, d, trace_ladder(gcov, d));
    comps[j].chol = std::move(l);
    comps[j].jitter = jit;
  }

  GmmModel model;
  std::vector<double> resp(n * k);
  std::vector<double> logp(k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    // E step
    double total_ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        logp[j] = std::log(comps[j].weight) +
                  log_density(&x[i * d], comps[j].mean.data(), comps[j].chol, d);
        mx = std::max(mx, logp[j]);
      }
      double se = 0.0;
      for (std::size_t j = 0; j < k; ++j) se += std::exp(logp[j] - mx);
      const double lse = mx + std::log(se);
      total_ll += lse;
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] = std::exp(logp[j] - lse);
    }
    model.log_likelihood.push_back(total_ll / static_cast<double>(n));
    const std::size_t t = model.log_likelihood.size();
    if (t >= 2 && model.log_likelihood[t - 1] - model.log_likelihood[t - 2] < tol) break;

    // M step
    bool reweighted = false;
    for (std::size_t j = 0; j < k; ++j) {
      double nj = 0.0;
      for (std::size_t i = 0; i < n; ++i) nj += resp[i * k + j];
      if (nj < 1e-8) {
        // rescue: restart this component at the point farthest from all means
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          double best = std::numeric_limits<double>::infinity();
          for (const auto& c : comps) {
            double s = 0.0;
            for (std::size_t jj = 0; jj < d; ++jj) {
              const double diff = x[i * d + jj] - c.mean[jj];
              s += diff * diff;
            }
            best = std::min(best, s);
          }
          if (best > far_d) {
            far_d = best;
            far = i;
          }
        }
        comps[j].mean = point(far);
        comps[j].cov = gcov;
        auto [l, jit] = cholesky_ladder(gcov, d, trace_ladder(gcov, d));
        comps[j].chol = std::move(l);
        comps[j].jitter = jit;
        comps[j].weight = 1.0 / static_cast<double>(k);
        ++model.reseeds;
        reweighted = true;
        continue;
      }
      comps[j].weight = nj / static_cast<double>(n);
      for (std::size_t jj = 0; jj < d; ++jj) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += resp[i * k + j] * x[i * d + jj];
        comps[j].mean[jj] = s / nj;
      }
      std::fill(comps[j].cov.begin(), comps[j].cov.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * k + j];
        for (std::size_t a = 0; a < d; ++a) {
          const double da = x[i * d + a] - comps[j].mean[a];
          for (std::size_t b = 0; b <= a; ++b)
            comps[j].cov[a * d + b] += r * da * (x[i * d + b] - comps[j].mean[b]);
        }
      }
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
          comps[j].cov[a * d + b] /= nj;
          comps[j].cov[b * d + a] = comps[j].cov[a * d + b];
        }
      auto [l, jit] = cholesky_ladder(comps[j].cov, d, trace_ladder(comps[j].cov, d));
      comps[j].chol = std::move(l);
      comps[j].jitter = jit;
    }
    if (reweighted) {
      double sum = 0.0;
      for (const auto& c : comps) sum += c.weight;
      for (auto& c : comps) c.weight /= sum;
    }
  }

  model.components.reserve(k);
  for (auto& c : comps) {
    GmmComponent out;
    out.weight = c.weight;
    out.mean = wrap_f64(std::move(c.mean), {d});
    out.cov = wrap_f64(std::move(c.cov), {d, d});
    out.chol = wrap_f64(std::move(c.chol), {d, d});
    out.jitter = c.jitter;
    model.components.push_back(std::move(out));
  }
  return model;
}

Tensor sample_gmm(const GmmModel& model, std::size_t n, const Rng& rng) {
  if (model.components.empty()) throw ValueError("sample_gmm: model has no components");
  const std::size_t d = model.components[0].mean.shape()[0];
  const std::size_t k = model.components.size();
  std::vector<std::vector<double>> chols;
  chols.reserve(k);
  for (const auto& c : model.components)
    chols.emplace_back(c.chol.data<double>().begin(), c.chol.data<double>().end());

  Rng stream = rng.split("gmm-sample");
  Tensor out = Tensor::zeros({n, d});
  auto data = out.data<float>();
  std::vector<double> eps(d);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = stream.uniform();
    std::size_t j = k - 1;
    double cum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      cum += model.components[c].weight;
      if (u < cum) {
        j = c;
        break;
      }
    }
    const auto mean = model.components[j].mean.data<double>();
    for (std::size_t jj = 0; jj < d; ++jj) eps[jj] = stream.normal();
    for (std::size_t i = 0; i < d; ++i) {
      double v = mean[i];
      for (std::size_t jj = 0; jj <= i; ++jj) v += chols[j][i * d + jj] * eps[jj];
      data[s * d + i] = static_cast<float>(v);
    }
  }
  return out;
}

PcaMap fit_pca(const Tensor& codes, std::size_t m) {
  std::size_t n, d;
  const auto x = to_f64_rows(codes, &n, &d);
  if (m > d)
    throw ValueError("fit_pca: m=" + std::to_string(m) + " exceeds code dim " +
                     std::to_string(d));
  EigenResult eig = sym_eigen(covariance(codes));
  PcaMap map;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
  map.mean = wrap_f64(std::move(mean), {d});
  map.components = Tensor::zeros({d, m}, DType::f64);
  auto comp = map.components.data<double>();
  const auto vec = eig.vectors.data<double>();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < m; ++j) comp[i * m + j] = vec[i * d + j];
  map.stddev.resize(m);
  for (std::size_t j = 0; j < m; ++j)
    map.stddev[j] = std::sqrt(std::max(eig.values[j], 0.0));
  return map;
}

Tensor pca_grid_codes(const PcaMap& map, std::size_t grid_w, std::size_t grid_h, double span) {
  if (map.components.shape()[1] < 2)
    throw ValueError("pca_grid_codes: need at least 2 principal components");
  if (grid_w == 0 || grid_h == 0) throw ValueError("pca_grid_codes: empty grid");
  const std::size_t d = map.components.shape()[0];
  const std::size_t m = map.components.shape()[1];
  const auto mean = map.mean.data<double>();
  const auto comp = map.components.data<double>();
  Tensor out = Tensor::zeros({grid_w * grid_h, d});
  auto data = out.data<float>();
  for (std::size_t row = 0; row < grid_h; ++row) {
    const double b = grid_h == 1
                         ? 0.0
                         : span - 2.0 * span * static_cast<double>(row) /
                                      static_cast<double>(grid_h - 1);
    for (std::size_t col = 0; col < grid_w; ++col) {
      const double a = grid_w == 1
                           ? 0.0
                           : -span + 2.0 * span * static_cast<double>(col) /
                                         static_cast<double>(grid_w - 1);
      float* dst = data.data() + (row * grid_w + col) * d;
      for (std::size_t i = 0; i < d; ++i)
        dst[i] = static_cast<float>(mean[i] + a * map.stddev[0] * comp[i * m + 0] +
                                    b * map.stddev[1] * comp[i * m + 1]);
    }
  }
  return out;
}

std::vector<Tensor> interpolate(const Model& model, const Tensor& y_a, const Tensor& y_b,
                                std::size_t steps) {
  if (steps < 2) throw ValueError("interpolate: need at least 2 steps");
  check_same_shape(y_a, y_b, "interpolate");
  const Tensor za = model.encode(y_a);
  const Tensor zb = model.encode(y_b);
  std::vector<Tensor> out;
  out.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
    Tensor z = ops::add(ops::scale(za, 1.0 - t), ops::scale(zb, t));
    out.push_back(model.decode(z));
  }
  return out;
}

void render_grid(const Tensor& images, std::size_t cols, const std::string& path, double lo,
                 double hi) {
  if (images.ndim() != 4)
    throw ShapeError("render_grid: expected [N,C,H,W] images, got " + shape_str(images.shape()));
  const std::size_t n = images.shape()[0], c = images.shape()[1];
  const std::size_t h = images.shape()[2], w = images.shape()[3];
  if (c != 1 && c != 3)
    throw ShapeError("render_grid: " + std::to_string(c) + " channels unsupported");
  if (cols == 0) throw ValueError("render_grid: cols must be positive");
  if (!(hi > lo)) throw ValueError("render_grid: empty value range");
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t cw = cols * w, ch = rows * h;
  std::vector<unsigned char> canvas(cw * ch * 3, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gr = i / cols, gc = i % cols;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch3 = 0; ch3 < 3; ++ch3) {
          const std::size_t src_c = c == 3 ? ch3 : 0;
          const double v = images.at(((i * c + src_c) * h + y) * w + x);
          double unit = (v - lo) / (hi - lo);
          unit = std::clamp(unit, 0.0, 1.0);
          canvas[((gr * h + y) * cw + gc * w + x) * 3 + ch3] =
              static_cast<unsigned char>(std::lround(unit * 255.0));
        }
      }
    }
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
  std::fprintf(f, "P6\n%zu %zu\n255\n", cw, ch);
  const bool ok =
      std::fwrite(canvas.data(), 1, canvas.size(), f) == canvas.size() && std::fclose(f) == 0;
  if (!ok) throw FormatError(FormatError::Kind::io, "failed writing " + path);
}

}  // namespace irmae
