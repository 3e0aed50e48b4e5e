#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "irmae/generative.hpp"
#include "irmae/models.hpp"
#include "irmae/rng.hpp"
#include "irmae/spectral.hpp"
#include "irmae/tensor.hpp"

using namespace irmae;

namespace {

Tensor gaussian_codes(std::size_t n, std::size_t d, Rng rng) {
  Tensor t = Tensor::zeros({n, d});
  for (auto& v : t.data<float>()) v = float(rng.normal());
  return t;
}

Tensor two_clusters(std::size_t n, double offset, Rng rng) {
  Tensor t = Tensor::zeros({n, 2});
  auto d = t.data<float>();
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = (i % 2 == 0) ? offset : -offset;
    d[i * 2 + 0] = float(cx + 0.3 * rng.normal());
    d[i * 2 + 1] = float(0.3 * rng.normal());
  }
  return t;
}

double max_abs(const Tensor& a, const Tensor& b) {
  const auto da = a.data<double>();
  const auto db = b.data<double>();
  REQUIRE(da.size() == db.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i)
    worst = std::max(worst, std::abs(da[i] - db[i]));
  return worst;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

MvgModel unit_mvg(std::vector<double> mean) {
  const std::size_t d = mean.size();
  MvgModel m;
  m.mean = Tensor::from(std::move(mean), {d});
  m.cov = Tensor::identity(d, DType::f64);
  m.chol = Tensor::identity(d, DType::f64);
  return m;
}

}  // namespace

TEST_CASE("fit_mvg reproduces a hand-computed mean, covariance, and factor") {
  const Tensor codes = Tensor::from(std::vector<double>{0, 0, 2, 0, 4, 6}, {3, 2});
  const auto model = fit_mvg(codes);

  const auto mean = model.mean.data<double>();
  CHECK(mean[0] == 2.0);
  CHECK(mean[1] == 2.0);

  const auto cov = model.cov.data<double>();
  CHECK(cov[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-14));
  CHECK(cov[1] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(cov[2] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(cov[3] == doctest::Approx(8.0).epsilon(1e-14));

  CHECK(model.jitter == 0.0);
  const auto l = model.chol.data<double>();
  const double l00 = std::sqrt(8.0 / 3.0);
  CHECK(l[0] == doctest::Approx(l00).epsilon(1e-13));
  CHECK(l[1] == 0.0);
  CHECK(l[2] == doctest::Approx(4.0 / l00).epsilon(1e-13));
  CHECK(l[3] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
}

TEST_CASE("the cholesky factor rebuilds cov plus jitter") {
  const Tensor codes = gaussian_codes(80, 4, Rng(40));
  const auto model = fit_mvg(codes);
  const std::size_t d = 4;
  const auto l = model.chol.data<double>();
  const auto c = model.cov.data<double>();
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(l[i * d + i] > 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += l[i * d + k] * l[j * d + k];
      const double want = c[i * d + j] + (i == j ? model.jitter : 0.0);
      CHECK(s == doctest::Approx(want).epsilon(1e-10).scale(1.0));
      if (j > i) CHECK(l[i * d + j] == 0.0);
    }
  }
}

TEST_CASE("degenerate covariance climbs the jitter ladder instead of failing") {
  Tensor line = Tensor::zeros({50, 2});
  auto d = line.data<float>();
  for (std::size_t i = 0; i < 50; ++i) {
    const float t = float(i) * 0.1f;
    d[i * 2 + 0] = t;
    d[i * 2 + 1] = 2.0f * t;
  }
  const auto model = fit_mvg(line);
  CHECK(model.jitter > 0.0);
  for (double v : model.chol.data<double>()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(fit_mvg(Tensor::zeros({1, 2})), ValueError);
}

TEST_CASE("mvg samples reproduce the generating moments") {
  const auto model = unit_mvg({1.0, -2.0});
  const Tensor samples = sample_mvg(model, 10000, Rng(41));
  CHECK(samples.shape() == Shape{10000, 2});

  const auto fitted = fit_mvg(samples);
  const auto mean = fitted.mean.data<double>();
  CHECK(mean[0] == doctest::Approx(1.0).epsilon(0.05).scale(1.0));
  CHECK(mean[1] == doctest::Approx(-2.0).epsilon(0.05).scale(1.0));
  const auto cov = fitted.cov.data<double>();
  CHECK(cov[0] == doctest::Approx(1.0).epsilon(0.08));
  CHECK(cov[3] == doctest::Approx(1.0).epsilon(0.08));
  CHECK(std::abs(cov[1]) < 0.05);

  const Tensor again = sample_mvg(model, 10000, Rng(41));
  const auto a = samples.data<float>();
  const auto b = again.data<float>();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("a one-component mixture is exactly the gaussian fit") {
  const Tensor codes = gaussian_codes(120, 3, Rng(42));
  const auto mvg = fit_mvg(codes);
  const auto gmm = fit_gmm(codes, 1, Rng(43));

  REQUIRE(gmm.components.size() == 1);
  const auto& c = gmm.components[0];
  CHECK(c.weight == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_abs(c.mean, mvg.mean) < 1e-12);
  CHECK(max_abs(c.cov, mvg.cov) < 1e-12);
  CHECK(max_abs(c.chol, mvg.chol) < 1e-12);
  CHECK(gmm.reseeds == 0);
}

TEST_CASE("em log-likelihood never decreases") {
  const Tensor codes = two_clusters(240, 4.0, Rng(44));
  const auto gmm = fit_gmm(codes, 3, Rng(45));
  REQUIRE(gmm.log_likelihood.size() >= 2);
  for (std::size_t i = 1; i < gmm.log_likelihood.size(); ++i)
    CHECK(gmm.log_likelihood[i] >= gmm.log_likelihood[i - 1] - 1e-9);
}

TEST_CASE("em separates two well-spaced clusters") {
  const Tensor codes = two_clusters(300, 5.0, Rng(46));
  const auto gmm = fit_gmm(codes, 2, Rng(47));
  REQUIRE(gmm.components.size() == 2);

  double w = 0.0;
  for (const auto& c : gmm.components) w += c.weight;
  CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

  auto mean_x = [&](std::size_t i) { return gmm.components[i].mean.data<double>()[0]; };
  const double lo = std::min(mean_x(0), mean_x(1));
  const double hi = std::max(mean_x(0), mean_x(1));
  CHECK(lo == doctest::Approx(-5.0).epsilon(0.1).scale(1.0));
  CHECK(hi == doctest::Approx(5.0).epsilon(0.1).scale(1.0));
  for (const auto& c : gmm.components)
    CHECK(c.weight == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("gmm fitting is deterministic in the seed") {
  const Tensor codes = two_clusters(100, 3.0, Rng(48));
  const auto a = fit_gmm(codes, 2, Rng(49));
  const auto b = fit_gmm(codes, 2, Rng(49));
  REQUIRE(a.log_likelihood.size() == b.log_likelihood.size());
  for (std::size_t i = 0; i < a.log_likelihood.size(); ++i)
    CHECK(a.log_likelihood[i] == b.log_likelihood[i]);
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(max_abs(a.components[j].mean, b.components[j].mean) == 0.0);
}

TEST_CASE("gmm rejects impossible component counts") {
  const Tensor codes = gaussian_codes(4, 2, Rng(50));
  CHECK_THROWS_AS(fit_gmm(codes, 0, Rng(51)), ValueError);
  CHECK_THROWS_AS(fit_gmm(codes, 5, Rng(51)), ValueError);
}

TEST_CASE("gmm samples follow the component weights") {
  GmmModel model;
  GmmComponent a;
  a.weight = 1.0;
  a.mean = Tensor::from(std::vector<double>{10.0, 10.0}, {2});
  a.cov = Tensor::identity(2, DType::f64);
  a.chol = Tensor::identity(2, DType::f64);
  GmmComponent b = a;
  b.weight = 0.0;
  b.mean = Tensor::from(std::vector<double>{-10.0, -10.0}, {2});
  model.components = {a, b};

  const Tensor only_a = sample_gmm(model, 200, Rng(52));
  for (float v : only_a.data<float>()) CHECK(v > 3.0f);

  model.components[0].weight = 0.5;
  model.components[1].weight = 0.5;
  const Tensor mixed = sample_gmm(model, 200, Rng(53));
  const auto d = mixed.data<float>();
  std::size_t near_a = 0, near_b = 0;
  for (std::size_t i = 0; i < 200; ++i) (d[i * 2] > 0 ? near_a : near_b) += 1;
  CHECK(near_a > 50);
  CHECK(near_b > 50);

  CHECK_THROWS_AS(sample_gmm(GmmModel{}, 4, Rng(54)), ValueError);
}

TEST_CASE("pca matches the eigendecomposition of the code covariance") {
  const Tensor codes = gaussian_codes(60, 5, Rng(55));
  const auto map = fit_pca(codes, 3);
  CHECK(map.components.shape() == Shape{5, 3});

  const auto eig = sym_eigen(covariance(codes));
  const auto got = map.components.data<double>();
  const auto want = eig.vectors.data<double>();
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(map.stddev[j] == doctest::Approx(std::sqrt(std::max(eig.values[j], 0.0)))
                               .epsilon(1e-12));
    for (std::size_t i = 0; i < 5; ++i) CHECK(got[i * 3 + j] == want[i * 5 + j]);
  }

  const auto mean = map.mean.data<double>();
  const auto raw = codes.data<float>();
  for (std::size_t j = 0; j < 5; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 60; ++i) s += raw[i * 5 + j];
    CHECK(mean[j] == doctest::Approx(s / 60.0).epsilon(1e-12).scale(1.0));
  }

  CHECK_THROWS_AS(fit_pca(codes, 6), ValueError);
}

TEST_CASE("pca grid codes span the leading directions symmetrically") {
  PcaMap map;
  map.mean = Tensor::from(std::vector<double>{1.0, 2.0, 3.0}, {3});
  map.components = Tensor::from(std::vector<double>{1, 0, 0, 1, 0, 0}, {3, 2});
  map.stddev = {2.0, 0.5};

  const Tensor grid = pca_grid_codes(map, 3, 3, 2.0);
  CHECK(grid.shape() == Shape{9, 3});
  const auto g = grid.data<float>();

  auto cell = [&](std::size_t row, std::size_t col) { return g.data() + (row * 3 + col) * 3; };
  // Center cell sits at the mean.
  CHECK(cell(1, 1)[0] == 1.0f);
  CHECK(cell(1, 1)[1] == 2.0f);
  CHECK(cell(1, 1)[2] == 3.0f);
  // Top-left: first component at -span sigma, second at +span sigma.
  CHECK(cell(0, 0)[0] == doctest::Approx(1.0 - 2.0 * 2.0));
  CHECK(cell(0, 0)[1] == doctest::Approx(2.0 + 2.0 * 0.5));
  CHECK(cell(0, 0)[2] == 3.0f);
  // Bottom-right mirrors it.
  CHECK(cell(2, 2)[0] == doctest::Approx(1.0 + 4.0));
  CHECK(cell(2, 2)[1] == doctest::Approx(2.0 - 1.0));

  const Tensor single = pca_grid_codes(map, 1, 1, 2.0);
  CHECK(single.shape() == Shape{1, 3});
  CHECK(single.data<float>()[0] == 1.0f);

  PcaMap thin = map;
  thin.components = Tensor::from(std::vector<double>{1, 0, 0}, {3, 1});
  CHECK_THROWS_AS(pca_grid_codes(thin, 3, 3, 2.0), ValueError);
  CHECK_THROWS_AS(pca_grid_codes(map, 0, 3, 2.0), ValueError);
}

TEST_CASE("interpolation hits both endpoints exactly") {
  Model m = build_model(arch_mlp({1, 4, 4}, 8, 3), {1, StackMode::trainable, 1.0},
                        Variant::irmae, Rng(56));
  Rng rng(57);
  Tensor ya = Tensor::zeros({1, 1, 4, 4});
  Tensor yb = Tensor::zeros({1, 1, 4, 4});
  for (auto& v : ya.data<float>()) v = float(rng.uniform(-1.0, 1.0));
  for (auto& v : yb.data<float>()) v = float(rng.uniform(-1.0, 1.0));

  const auto frames = interpolate(m, ya, yb, 5);
  REQUIRE(frames.size() == 5);
  for (const auto& f : frames) CHECK(f.shape() == Shape{1, 1, 4, 4});

  const Tensor want_a = m.decode(m.encode(ya));
  const Tensor want_b = m.decode(m.encode(yb));
  const auto fa = frames.front().data<float>();
  const auto wa = want_a.data<float>();
  CHECK(std::memcmp(fa.data(), wa.data(), fa.size() * sizeof(float)) == 0);
  const auto fb = frames.back().data<float>();
  const auto wb = want_b.data<float>();
  CHECK(std::memcmp(fb.data(), wb.data(), fb.size() * sizeof(float)) == 0);

  CHECK_THROWS_AS(interpolate(m, ya, yb, 1), ValueError);
  CHECK_THROWS_AS(interpolate(m, ya, Tensor::zeros({1, 1, 4, 8}), 3), ShapeError);
}

TEST_CASE("render_grid writes the exact ppm bytes") {
  Tensor images = Tensor::zeros({3, 1, 2, 2});
  auto d = images.data<float>();
  const float vals[12] = {0.0f, 0.5f, 1.0f, 2.0f, -1.0f, 0.25f, 0.75f, 1.0f, 0, 0, 0, 0};
  std::copy(vals, vals + 12, d.begin());

  const auto path = std::filesystem::temp_directory_path() / "irmae_test_grid.ppm";
  render_grid(images, 2, path.string(), 0.0, 1.0);
  const std::string got = read_bytes(path);
  std::filesystem::remove(path);

  std::string want = "P6\n4 4\n255\n";
  const unsigned char px[16] = {0, 128, 0, 64, 255, 255, 191, 255, 0, 0, 0, 0, 0, 0, 0, 0};
  for (unsigned char p : px) want.append(3, char(p));
  CHECK(got == want);
}

TEST_CASE("render_grid maps color channels straight through") {
  Tensor img = Tensor::zeros({1, 3, 1, 1});
  auto d = img.data<float>();
  d[0] = 0.2f;
  d[1] = 0.5f;
  d[2] = 1.0f;
  const auto path = std::filesystem::temp_directory_path() / "irmae_test_rgb.ppm";
  render_grid(img, 1, path.string(), 0.0, 1.0);
  const std::string got = read_bytes(path);
  std::filesystem::remove(path);

  std::string want = "P6\n1 1\n255\n";
  want.push_back(char(51));
  want.push_back(char(128));
  want.push_back(char(255));
  CHECK(got == want);
}

TEST_CASE("render_grid rejects malformed requests") {
  const auto path = (std::filesystem::temp_directory_path() / "irmae_never.ppm").string();
  CHECK_THROWS_AS(render_grid(Tensor::zeros({1, 2, 2, 2}), 1, path), ShapeError);
  CHECK_THROWS_AS(render_grid(Tensor::zeros({2, 2}), 1, path), ShapeError);
  CHECK_THROWS_AS(render_grid(Tensor::zeros({1, 1, 2, 2}), 0, path), ValueError);
  CHECK_THROWS_AS(render_grid(Tensor::zeros({1, 1, 2, 2}), 1, path, 1.0, 1.0), ValueError);
  CHECK_THROWS_AS(render_grid(Tensor::zeros({1, 1, 2, 2}), 1, "/nonexistent_dir/x.ppm"),
                  FormatError);
}
