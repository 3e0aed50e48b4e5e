#include "irmae/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "irmae/kernels.hpp"

namespace irmae {

namespace {

constexpr std::size_t kImg = 32;
constexpr std::size_t kRaw = 28;

}  // namespace

void rasterize_shape(const ShapeFactors& f, float* out) {
  for (std::size_t i = 0; i < 3 * kImg * kImg; ++i) out[i] = -1.0f;
  const float color[3] = {static_cast<float>(2.0 * f.r - 1.0),
                          static_cast<float>(2.0 * f.g - 1.0),
                          static_cast<float>(2.0 * f.b - 1.0)};
  if (f.kind == 0) {
    const std::size_t x0 = f.cx - f.size / 2;
    const std::size_t y0 = f.cy - f.size / 2;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = y0; y < y0 + f.size; ++y)
        for (std::size_t x = x0; x < x0 + f.size; ++x)
          out[(c * kImg + y) * kImg + x] = color[c];
  } else {
    const double radius = static_cast<double>(f.size) / 2.0;
    for (std::size_t y = 0; y < kImg; ++y) {
      for (std::size_t x = 0; x < kImg; ++x) {
        const double dx = static_cast<double>(x) - static_cast<double>(f.cx);
        const double dy = static_cast<double>(y) - static_cast<double>(f.cy);
        if (dx * dx + dy * dy <= radius * radius)
          for (std::size_t c = 0; c < 3; ++c) out[(c * kImg + y) * kImg + x] = color[c];
      }
    }
  }
}

ShapesSet gen_shapes(std::size_t n, const Rng& rng) {
  if (n == 0) throw ValueError("gen_shapes: need at least one sample");
  ShapesSet set;
  set.images = Tensor::zeros({n, 3, kImg, kImg});
  set.factors.reserve(n);
  float* data = set.images.data<float>().data();
  for (std::size_t i = 0; i < n; ++i) {
    Rng s = rng.split("sample", i);
    ShapeFactors f;
    f.kind = static_cast<int>(s.uniform_int(0, 1));
    f.size = s.uniform_int(3, 8);
    f.cx = s.uniform_int(8, 24);
    f.cy = s.uniform_int(8, 24);
    f.r = s.uniform();
    f.g = s.uniform();
    f.b = s.uniform();
    rasterize_shape(f, data + i * 3 * kImg * kImg);
    set.factors.push_back(f);
  }
  return set;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot read " + path);
  return bytes;
}

std::uint32_t be32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace

MnistSet load_mnist(const std::string& dir, const std::string& split, bool unit_range) {
  if (split != "train" && split != "t10k")
    throw ValueError("load_mnist: split must be 'train' or 't10k', got '" + split + "'");
  const std::string img_path = dir + "/" + split + "-images-idx3-ubyte";
  const std::string lab_path = dir + "/" + split + "-labels-idx1-ubyte";

  const auto img_bytes = read_file(img_path);
  if (img_bytes.size() < 16)
    throw FormatError(FormatError::Kind::truncated, img_path + ": header incomplete");
  if (be32(img_bytes.data()) != 0x00000803u)
    throw FormatError(FormatError::Kind::bad_magic, img_path + ": not an idx3 image file");
  const std::size_t n = be32(img_bytes.data() + 4);
  const std::size_t rows = be32(img_bytes.data() + 8);
  const std::size_t cols = be32(img_bytes.data() + 12);
  if (rows != kRaw || cols != kRaw)
    throw FormatError(FormatError::Kind::shape_mismatch,
                      img_path + ": expected 28x28 images, header says " + std::to_string(rows) +
                          "x" + std::to_string(cols));
  if (img_bytes.size() != 16 + n * rows * cols)
    throw FormatError(FormatError::Kind::truncated,
                      img_path + ": payload does not match header count");

  const auto lab_bytes = read_file(lab_path);
  if (lab_bytes.size() < 8)
    throw FormatError(FormatError::Kind::truncated, lab_path + ": header incomplete");
  if (be32(lab_bytes.data()) != 0x00000801u)
    throw FormatError(FormatError::Kind::bad_magic, lab_path + ": not an idx1 label file");
  const std::size_t n_lab = be32(lab_bytes.data() + 4);
  if (n_lab != n)
    throw FormatError(FormatError::Kind::count_mismatch,
                      dir + ": " + std::to_string(n) + " images but " + std::to_string(n_lab) +
                          " labels");
  if (lab_bytes.size() != 8 + n_lab)
    throw FormatError(FormatError::Kind::truncated,
                      lab_path + ": payload does not match header count");

  MnistSet set;
  set.images = Tensor::zeros({n, 1, kImg, kImg});
  set.labels.resize(n);
  float* out = set.images.data<float>().data();
  const float pad = unit_range ? 0.0f : -1.0f;
  const std::size_t off = (kImg - kRaw) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    float* img = out + i * kImg * kImg;
    for (std::size_t j = 0; j < kImg * kImg; ++j) img[j] = pad;
    const unsigned char* src = img_bytes.data() + 16 + i * kRaw * kRaw;
    for (std::size_t y = 0; y < kRaw; ++y) {
      for (std::size_t x = 0; x < kRaw; ++x) {
        const float v = static_cast<float>(src[y * kRaw + x]) / 255.0f;
        img[(y + off) * kImg + (x + off)] = unit_range ? v : 2.0f * v - 1.0f;
      }
    }
    set.labels[i] = static_cast<int>(lab_bytes[8 + i]);
  }
  return set;
}

ToyManifoldSet gen_toy_manifold(std::size_t dim, std::size_t rank, std::size_t n,
                                double noise_sigma, const Rng& rng) {
  if (rank == 0 || rank > dim)
    throw ValueError("gen_toy_manifold: rank " + std::to_string(rank) +
                     " outside [1, " + std::to_string(dim) + "]");
  ToyManifoldSet set;
  set.dim = dim;
  set.rank = rank;
  set.noise_sigma = noise_sigma;

  // Random basis via Gram-Schmidt on N(0,1) columns, in double precision.
  Rng brng = rng.split("basis");
  std::vector<std::vector<double>> cols(rank, std::vector<double>(dim));
  for (std::size_t j = 0; j < rank; ++j) {
    for (std::size_t i = 0; i < dim; ++i) cols[j][i] = brng.normal();
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += cols[j][i] * cols[k][i];
      for (std::size_t i = 0; i < dim; ++i) cols[j][i] -= dot * cols[k][i];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) norm += cols[j][i] * cols[j][i];
    norm = std::sqrt(norm);
    if (norm < 1e-8) throw Error("gen_toy_manifold: degenerate basis draw");
    for (std::size_t i = 0; i < dim; ++i) cols[j][i] /= norm;
  }
  set.basis = Tensor::zeros({dim, rank}, DType::f64);
  auto bdata = set.basis.data<double>();
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < rank; ++j) bdata[i * rank + j] = cols[j][i];

  Rng crng = rng.split("coords");
  set.coords = Tensor::zeros({n, rank}, DType::f64);
  for (auto& v : set.coords.data<double>()) v = crng.normal();

  set.samples = Tensor::zeros({n, dim});
  auto sdata = set.samples.data<float>();
  const auto cdata = set.coords.data<double>();
  Rng nrng = rng.split("noise");
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < dim; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < rank; ++j) v += bdata[i * rank + j] * cdata[s * rank + j];
      if (noise_sigma > 0.0) v += noise_sigma * nrng.normal();
      sdata[s * dim + i] = static_cast<float>(v);
    }
  }
  return set;
}

std::vector<std::vector<int>> epoch_batches(std::size_t n, std::size_t batch_size, bool shuffle,
                                            Rng& rng) {
  if (batch_size == 0) throw ValueError("epoch_batches: batch_size must be positive");
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  if (shuffle && n > 1) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng.uniform_int(0, i);
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<int>> out;
  out.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    const std::size_t hi = std::min(n, lo + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                     order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

Tensor gather(const Tensor& data, const std::vector<int>& rows) {
  if (data.ndim() < 1) throw ShapeError("gather: scalar input");
  const std::size_t n = data.shape()[0];
  for (int r : rows)
    if (r < 0 || static_cast<std::size_t>(r) >= n)
      throw ValueError("gather: row " + std::to_string(r) + " outside [0, " + std::to_string(n) +
                       ")");
  Shape out_shape = data.shape();
  out_shape[0] = rows.size();
  Tensor out = Tensor::zeros(out_shape, data.dtype());
  const std::size_t row_elems = data.numel() / n;
  dispatch_dtype(data.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::gather_rows(data.data<T>().data(), row_elems, rows.data(), rows.size(),
                      out.data<T>().data());
  });
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || static_cast<std::size_t>(r) >= labels.size())
      throw ValueError("gather_labels: row " + std::to_string(r) + " out of range");
    out.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

}  // namespace irmae
