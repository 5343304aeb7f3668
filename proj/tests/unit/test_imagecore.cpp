#include <cmath>

#include "bgm/imagecore.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bgm;

namespace {

Image solid(int h, int w, double r, double g, double b) {
  Raster ras(3, h, w);
  const double v[3] = {r, g, b};
  for (int c = 0; c < 3; ++c)
    for (double& x : ras.channel(c)) x = v[c];
  return Image(std::move(ras));
}

}  // namespace

TEST_CASE("composite blends per pixel") {
  const AlphaMatte half(2, 3, 0.5);
  const Image out = composite(half, solid(2, 3, 1, 0, 0), solid(2, 3, 0, 0, 1));
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      CHECK(out.at(0, y, x) == doctest::Approx(0.5));
      CHECK(out.at(1, y, x) == 0.0);
      CHECK(out.at(2, y, x) == doctest::Approx(0.5));
    }
}

TEST_CASE("composite identity cases are exact") {
  const Image fg(testsupport::random_raster(3, 5, 7, 1));
  const Image bg(testsupport::random_raster(3, 5, 7, 2));
  const Image all_fg = composite(AlphaMatte(5, 7, 1.0), fg, bg);
  const Image all_bg = composite(AlphaMatte(5, 7, 0.0), fg, bg);
  for (std::size_t i = 0; i < fg.values().size(); ++i) {
    CHECK(all_fg.values()[i] == fg.values()[i]);
    CHECK(all_bg.values()[i] == bg.values()[i]);
  }
}

TEST_CASE("composite rejects mismatched sizes") {
  CHECK_THROWS_AS(composite(AlphaMatte(4, 4), solid(4, 5, 0, 0, 0), solid(4, 5, 0, 0, 0)), ShapeError);
  CHECK_THROWS_AS(composite(AlphaMatte(4, 5), solid(4, 5, 0, 0, 0), solid(5, 5, 0, 0, 0)), ShapeError);
}

TEST_CASE("recover_foreground clamps the sum") {
  Raster r(3, 1, 1);
  r.data = {0.2, -0.3, 0.0};
  const Image out = recover_foreground(ForegroundResidual(r), solid(1, 1, 0.9, 0.1, 0.5));
  CHECK(out.at(0, 0, 0) == 1.0);
  CHECK(out.at(1, 0, 0) == 0.0);
  CHECK(out.at(2, 0, 0) == 0.5);
}

TEST_CASE("recover_foreground identity and annihilation") {
  const Image img(testsupport::random_raster(3, 6, 4, 3));
  const Image same = recover_foreground(ForegroundResidual(6, 4, 0.0), img);
  Raster neg = img.raster();
  for (double& v : neg.data) v = -v;
  const Image zero = recover_foreground(ForegroundResidual(neg), img);
  for (std::size_t i = 0; i < img.values().size(); ++i) {
    CHECK(same.values()[i] == img.values()[i]);
    CHECK(zero.values()[i] == 0.0);
  }
  CHECK_THROWS_AS(recover_foreground(ForegroundResidual(6, 5), img), ShapeError);
}

TEST_CASE("residual_of inverts recover_foreground") {
  const Image fg(testsupport::random_raster(3, 4, 4, 4));
  const Image img(testsupport::random_raster(3, 4, 4, 5));
  const Image back = recover_foreground(residual_of(fg, img), img);
  for (std::size_t i = 0; i < fg.values().size(); ++i) CHECK(back.values()[i] == doctest::Approx(fg.values()[i]).epsilon(1e-12));
}

TEST_CASE("bounded rasters clamp and reject non-finite input") {
  Raster r(1, 1, 3);
  r.data = {-0.5, 0.5, 2.0};
  const AlphaMatte a(r);
  CHECK(a.at(0, 0) == 0.0);
  CHECK(a.at(0, 1) == 0.5);
  CHECK(a.at(0, 2) == 1.0);
  r.data[1] = std::nan("");
  CHECK_THROWS_AS(AlphaMatte{r}, std::domain_error);
  CHECK_THROWS_AS(Image{Raster(1, 2, 2)}, ShapeError);
}

TEST_CASE("resize of a constant stays constant") {
  Raster r(2, 5, 3, 0.37);
  for (auto mode : {Resample::bilinear, Resample::nearest})
    for (auto [h, w] : {std::pair{1, 1}, {7, 11}, {20, 2}, {3, 3}}) {
      const Raster out = resize(r, h, w, mode);
      CHECK(out.channels == 2);
      for (double v : out.data) CHECK(v == 0.37);
    }
}

TEST_CASE("bilinear 2x2 to 4x4 uses half-pixel centers") {
  Raster r(1, 2, 2);
  r.data = {0, 1, 0, 1};
  const Raster out = resize(r, 4, 4, Resample::bilinear);
  const double row[4] = {0, 0.25, 0.75, 1};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == doctest::Approx(row[x]).epsilon(1e-15));
}

TEST_CASE("nearest x2 replicates each pixel into a 2x2 block") {
  Raster r(1, 2, 2);
  r.data = {1, 2, 3, 4};
  const Raster out = resize(r, 4, 4, Resample::nearest);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == r.at(0, y / 2, x / 2));
}

TEST_CASE("bilinear downsample by 2 averages pixel pairs") {
  const Raster r = testsupport::random_raster(1, 6, 8, 9);
  const Raster out = resize(r, 3, 4, Resample::bilinear);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) {
      const double mean = 0.25 * (r.at(0, 2 * y, 2 * x) + r.at(0, 2 * y, 2 * x + 1) + r.at(0, 2 * y + 1, 2 * x) +
                                  r.at(0, 2 * y + 1, 2 * x + 1));
      CHECK(out.at(0, y, x) == doctest::Approx(mean).epsilon(1e-14));
    }
}

TEST_CASE("typed resize keeps the type and range") {
  const AlphaMatte a(testsupport::random_raster(1, 9, 9, 11));
  const AlphaMatte b = resize(a, 4, 13, Resample::bilinear);
  CHECK(b.height() == 4);
  CHECK(b.width() == 13);
  for (double v : b.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
