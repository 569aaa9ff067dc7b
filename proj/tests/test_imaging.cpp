#include <cmath>

#include "doctest.h"
#include "support.hpp"

using namespace tpsadv;
using namespace testsupport;

namespace {

Image gaussian_blobs(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = std::exp(-((x - 12.0) * (x - 12.0) + (y - 14.0) * (y - 14.0)) / 60.0);
      const double b = std::exp(-((x - 26.0) * (x - 26.0) + (y - 22.0) * (y - 22.0)) / 90.0);
      img.set_pixel(x, y, {0.1 + 0.8 * a, 0.2 + 0.6 * b, 0.3 + 0.3 * (a + b)});
    }
  }
  return img;
}

}  // namespace

TEST_CASE("bilinear sampling") {
  Rng rng = make_rng(1);
  const Image img = random_image(6, 5, rng);
  CHECK(bilinear_sample(img, {2.0, 3.0}) == img.pixel(2, 3));
  Image two(2, 1);
  two.set_pixel(1, 0, {1, 1, 1});
  CHECK(bilinear_sample(two, {0.5, 0.0})[0] == doctest::Approx(0.5));
  const Rgb out = bilinear_sample(img, {-5.0, -5.0});
  CHECK(out == Rgb{0, 0, 0});
  CHECK(bilinear_sample(img, {-5.0, 1.0}, 0.25)[1] == 0.25);
}

TEST_CASE("resample adjoint satisfies the dot-product identity") {
  Rng rng = make_rng(2);
  const Image src = random_image(9, 7, rng, -1, 1);
  SampleMap map{6, 8, {}};
  std::uniform_real_distribution<double> u(-1.5, 9.5);
  for (int i = 0; i < 48; ++i) map.source.push_back({u(rng), u(rng)});
  const Image y = random_image(6, 8, rng, -1, 1);
  const double lhs = dot(resample(src, map), y);
  const double rhs = dot(src, resample_adjoint(y, map, 9, 7));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("warp by identity tps is bit exact") {
  Rng rng = make_rng(3);
  const Image img = random_image(11, 13, rng);
  CHECK(warp_tps(img, TpsTransform::identity(), 11, 13) == img);
  CHECK_THROWS_AS(warp_tps(img, TpsTransform::identity(), 0, 13), std::invalid_argument);
}

TEST_CASE("translation tps shifts left with zero fill") {
  const Image img = gaussian_blobs(40, 32);
  const ControlPointSet s = make_grid(3, 3, 0, 0, 39, 31);
  ControlPointSet t = s;
  for (auto& p : t.points) p = p + Point2{5, 0};
  const Image out = warp_tps(img, fit_tps(s, t), 40, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 35; ++x) {
      for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == doctest::Approx(img.at(x + 5, y, c)).epsilon(1e-9));
    }
    for (int x = 35; x < 40; ++x) CHECK(out.pixel(x, y) == Rgb{0, 0, 0});
  }
}

TEST_CASE("tps round trip on smooth content") {
  const Image img = gaussian_blobs(40, 32);
  Rng rng = make_rng(4);
  const ControlPointSet s = make_grid(4, 5, 0, 0, 39, 31);
  ControlPointSet t = s;
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  for (auto& p : t.points) p = p + Point2{d(rng), d(rng)};
  const Image fwd = warp_tps(img, fit_tps(s, t), 40, 32, 0.0);
  const Image back = warp_tps(fwd, fit_tps(t, s), 40, 32, 0.0);
  const BoxMask inner{4, 4, 36, 28};
  CHECK(mean_abs_difference(back.crop(inner), img.crop(inner)) < 0.02);
}

TEST_CASE("conventional transform examples") {
  Rng rng = make_rng(5);
  const Image img = random_image(12, 10, rng);
  CHECK(apply_conventional(img, TransformSample::identity()) == img);

  TransformSample b;
  b.brightness = 0.1;
  const Image half(6, 6, 0.5);
  const Image out = apply_conventional(half, b);
  for (const double v : out.data()) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));

  TransformSample blur;
  blur.blur = true;
  const Image blurred = apply_conventional(Image(9, 9, 0.3), blur);
  for (const double v : blurred.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  TransformSample wild;
  wild.scale = 1.7;
  wild.rotate = 0.4;
  wild.contrast = 1.8;
  wild.brightness = 0.3;
  wild.noise_amp = 0.2;
  wild.blur = true;
  CHECK(within_unit_range(apply_conventional(img, wild)));
}

TEST_CASE("blur preserves interior mean and has a true adjoint") {
  Rng rng = make_rng(6);
  const Image img = random_image(30, 30, rng);
  const Image b = box_blur(img, 5);
  // Average over an interior region of a 5x5 mean filter equals the mean of
  // the region's 2-pixel-dilated window sums; compare with an explicit sum.
  double direct = 0.0;
  for (int y = 10; y < 20; ++y) {
    for (int x = 10; x < 20; ++x) {
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) direct += img.at(x + dx, y + dy, 0) / 25.0;
      }
    }
  }
  double got = 0.0;
  for (int y = 10; y < 20; ++y) {
    for (int x = 10; x < 20; ++x) got += b.at(x, y, 0);
  }
  CHECK(std::abs(got - direct) / 100.0 < 1e-6);
  const Image y = random_image(30, 30, rng, -1, 1);
  CHECK(dot(box_blur(img, 5), y) == doctest::Approx(dot(img, box_blur_adjoint(y, 5))).epsilon(1e-12));
}

TEST_CASE("conventional vjp matches finite differences") {
  Rng rng = make_rng(7);
  const Image img = random_image(10, 10, rng, 0.3, 0.7);
  TransformSample s;
  s.scale = 1.1;
  s.rotate = 0.15;
  s.translate_x = 0.7;
  s.contrast = 1.05;
  s.brightness = 0.02;
  s.blur = true;
  const Image w = random_image(10, 10, rng, -1, 1);
  const Image g = apply_conventional_vjp(img, s, w);
  for (std::size_t i = 0; i < img.size(); i += 7) {
    Image p = img, m = img;
    p.data()[i] += 1e-6;
    m.data()[i] -= 1e-6;
    const double fd = (dot(apply_conventional(p, s), w) - dot(apply_conventional(m, s), w)) / 2e-6;
    CHECK(std::abs(fd - g.data()[i]) < 1e-6);
  }
}

TEST_CASE("transform sampler") {
  TransformConfig fixed = TransformConfig::identity();
  fixed.scale = {1.3, 1.3};
  fixed.brightness = {0.05, 0.05};
  fixed.blur_probability = 1.0;
  const TransformSample s = sample_transform(fixed, std::uint64_t{3});
  CHECK(s.scale == 1.3);
  CHECK(s.brightness == 0.05);
  CHECK(s.blur);

  TransformConfig cfg;
  cfg.seed = 42;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const TransformSample a = sample_transform(cfg, i);
    const TransformSample b = sample_transform(cfg, i);
    CHECK(a.scale == b.scale);
    CHECK(a.rotate == b.rotate);
    CHECK(a.noise_seed == b.noise_seed);
  }
  Rng rng = make_rng(8);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const TransformSample d = sample_transform(cfg, rng);
    CHECK(d.scale >= 0.5);
    CHECK(d.scale <= 2.0);
    sum += d.scale;
  }
  CHECK(std::abs(sum / 10000.0 - 1.25) < 0.05);
  TransformConfig bad;
  bad.scale = {2.0, 1.0};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("gaussian noise") {
  Rng rng = make_rng(9);
  const Image zero = gaussian_noise(5, 5, 0.0, rng);
  for (const double v : zero.data()) CHECK(v == 0.0);
  Rng big = make_rng(10);
  const Image n = gaussian_noise(1000, 334, 0.03, big);
  double s = 0.0, s2 = 0.0;
  for (const double v : n.data()) {
    s += v;
    s2 += v * v;
  }
  const double cnt = static_cast<double>(n.size());
  const double sd = std::sqrt(s2 / cnt - (s / cnt) * (s / cnt));
  CHECK(std::abs(sd - 0.03) < 0.001);
  Rng a = make_rng(11), b = make_rng(11);
  CHECK(gaussian_noise(8, 8, 0.03, a) == gaussian_noise(8, 8, 0.03, b));
}

TEST_CASE("brightness adjustment clamps") {
  const Image img(3, 3, 0.95);
  const Image hi = adjust_brightness(img, 0.1);
  for (const double v : hi.data()) CHECK(v == 1.0);
  const Image mid = adjust_brightness(Image(2, 2, 0.5), 0.1);
  for (const double v : mid.data()) CHECK(v == doctest::Approx(0.6));
}
