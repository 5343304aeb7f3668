// Convolution as im2col + GEMM. Columns are (n, oy, ox) triples flattened in
// that order; rows are (ci, ky, kx). Large inputs are processed in column
// chunks so the column buffer stays bounded.

#include <Eigen/Core>

#include <algorithm>

#include "bgm/nnops.hpp"

namespace bgm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

constexpr std::size_t kColumnBudget = std::size_t{1} << 21;  // doubles in one column buffer

struct Geometry {
  int n, cin, h, w, ho, wo, k, s, d, p;
  std::size_t rows() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(n) * ho * wo; }
};

Geometry geometry(const Tensor4& x, const ConvSpec& spec) {
  spec.validate();
  if (x.c() != spec.in_ch) {
    throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, spec expects " +
                     std::to_string(spec.in_ch));
  }
  Geometry g{x.n(), x.c(), x.h(), x.w(), 0, 0, spec.kernel, spec.stride, spec.dilation, spec.pad()};
  const int span = spec.dilation * (spec.kernel - 1) + 1;
  if (x.h() + 2 * g.p < span || x.w() + 2 * g.p < span) {
    throw ShapeError("conv2d: input " + x.shape().str() + " too small for kernel span " + std::to_string(span));
  }
  g.ho = spec.out_size(x.h());
  g.wo = spec.out_size(x.w());
  return g;
}

// Fills col (rows x [c0, c1)) row-major.
void im2col(const Tensor4& x, const Geometry& g, std::size_t c0, std::size_t c1, double* col) {
  const std::size_t ncols = c1 - c0;
  const std::size_t per_image = static_cast<std::size_t>(g.ho) * g.wo;
  std::size_t r = 0;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx, ++r) {
        double* dst = col + r * ncols;
        std::size_t j = c0;
        while (j < c1) {
          const int n = static_cast<int>(j / per_image);
          const std::size_t rem = j % per_image;
          const int oy = static_cast<int>(rem / g.wo);
          int ox = static_cast<int>(rem % g.wo);
          const int iy = oy * g.s - g.p + ky * g.d;
          const int run = static_cast<int>(std::min<std::size_t>(g.wo - ox, c1 - j));
          if (iy < 0 || iy >= g.h) {
            std::fill(dst + (j - c0), dst + (j - c0) + run, 0.0);
          } else {
            const double* src = x.data() + x.index(n, ci, iy, 0);
            double* out = dst + (j - c0);
            for (int t = 0; t < run; ++t, ++ox) {
              const int ix = ox * g.s - g.p + kx * g.d;
              out[t] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
            }
          }
          j += run;
        }
      }
    }
  }
}

void col2im_add(const double* col, const Geometry& g, std::size_t c0, std::size_t c1, Tensor4& dx) {
  const std::size_t ncols = c1 - c0;
  const std::size_t per_image = static_cast<std::size_t>(g.ho) * g.wo;
  std::size_t r = 0;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx, ++r) {
        const double* src = col + r * ncols;
        std::size_t j = c0;
        while (j < c1) {
          const int n = static_cast<int>(j / per_image);
          const std::size_t rem = j % per_image;
          const int oy = static_cast<int>(rem / g.wo);
          int ox = static_cast<int>(rem % g.wo);
          const int iy = oy * g.s - g.p + ky * g.d;
          const int run = static_cast<int>(std::min<std::size_t>(g.wo - ox, c1 - j));
          if (iy >= 0 && iy < g.h) {
            double* dst = dx.data() + dx.index(n, ci, iy, 0);
            const double* in = src + (j - c0);
            for (int t = 0; t < run; ++t, ++ox) {
              const int ix = ox * g.s - g.p + kx * g.d;
              if (ix >= 0 && ix < g.w) dst[ix] += in[t];
            }
          }
          j += run;
        }
      }
    }
  }
}

std::size_t chunk_cols(const Geometry& g) {
  return std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, g.rows()));
}

// Copies output-major rows (cout x [c0,c1)) to/from the NCHW tensor.
template <bool ToTensor>
void shuffle_rows(std::conditional_t<ToTensor, const double*, double*> rows, const Geometry& g, int cout,
                  std::size_t c0, std::size_t c1, std::conditional_t<ToTensor, Tensor4&, const Tensor4&> t) {
  const std::size_t ncols = c1 - c0;
  const std::size_t per_image = static_cast<std::size_t>(g.ho) * g.wo;
  for (int co = 0; co < cout; ++co) {
    std::size_t j = c0;
    while (j < c1) {
      const int n = static_cast<int>(j / per_image);
      const std::size_t rem = j % per_image;
      const std::size_t run = std::min(per_image - rem, c1 - j);
      const std::size_t toff = t.index(n, co, 0, 0) + rem;
      const std::size_t roff = co * ncols + (j - c0);
      if constexpr (ToTensor) {
        std::copy(rows + roff, rows + roff + run, t.data() + toff);
      } else {
        std::copy(t.data() + toff, t.data() + toff + run, rows + roff);
      }
      j += run;
    }
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("ConvSpec: kernel must be odd");
  if (dilation < 1) throw ShapeError("ConvSpec: dilation must be >= 1");
  if (stride < 1) throw ShapeError("ConvSpec: stride must be >= 1");
  if (in_ch < 1 || out_ch < 1) throw ShapeError("ConvSpec: channel counts must be positive");
}

Tensor4 conv2d(const Tensor4& x, const ConvSpec& spec, std::span<const double> weight,
               std::span<const double> bias) {
  const Geometry g = geometry(x, spec);
  if (weight.size() != spec.weight_count()) throw ShapeError("conv2d: weight count mismatch");
  if (spec.bias && bias.size() != static_cast<std::size_t>(spec.out_ch)) throw ShapeError("conv2d: bias size mismatch");
  Tensor4 y(g.n, spec.out_ch, g.ho, g.wo);
  const std::size_t total = g.cols();
  const std::size_t step = chunk_cols(g);
  std::vector<double> col;
  std::vector<double> out;
  ConstRowMap wmat(weight.data(), spec.out_ch, static_cast<Eigen::Index>(g.rows()));
  for (std::size_t c0 = 0; c0 < total; c0 += step) {
    const std::size_t c1 = std::min(total, c0 + step);
    const auto ncols = static_cast<Eigen::Index>(c1 - c0);
    col.resize(g.rows() * ncols);
    out.resize(static_cast<std::size_t>(spec.out_ch) * ncols);
    im2col(x, g, c0, c1, col.data());
    ConstRowMap cmat(col.data(), static_cast<Eigen::Index>(g.rows()), ncols);
    RowMap omat(out.data(), spec.out_ch, ncols);
    omat.noalias() = wmat * cmat;
    if (spec.bias) {
      for (int co = 0; co < spec.out_ch; ++co) omat.row(co).array() += bias[co];
    }
    shuffle_rows<true>(out.data(), g, spec.out_ch, c0, c1, y);
  }
  return y;
}

void conv2d_backward(const Tensor4& x, const ConvSpec& spec, std::span<const double> weight, const Tensor4& dy,
                     Tensor4* dx, std::span<double> dweight, std::span<double> dbias) {
  const Geometry g = geometry(x, spec);
  require_shape("conv2d_backward", dy.shape(), Shape4{g.n, spec.out_ch, g.ho, g.wo});
  if (dx) require_shape("conv2d_backward(dx)", dx->shape(), x.shape());
  const std::size_t total = g.cols();
  const std::size_t step = chunk_cols(g);
  std::vector<double> col;
  std::vector<double> dyrows;
  ConstRowMap wmat(weight.data(), spec.out_ch, static_cast<Eigen::Index>(g.rows()));
  for (std::size_t c0 = 0; c0 < total; c0 += step) {
    const std::size_t c1 = std::min(total, c0 + step);
    const auto ncols = static_cast<Eigen::Index>(c1 - c0);
    dyrows.resize(static_cast<std::size_t>(spec.out_ch) * ncols);
    shuffle_rows<false>(dyrows.data(), g, spec.out_ch, c0, c1, dy);
    ConstRowMap dymat(dyrows.data(), spec.out_ch, ncols);
    if (!dbias.empty()) {
      // Plain loop: Eigen's vectorised reductions peel by address, which
      // would make the summation order depend on where the buffer landed.
      for (int co = 0; co < spec.out_ch; ++co) {
        const double* row = dyrows.data() + static_cast<std::size_t>(co) * ncols;
        double sum = 0;
        for (Eigen::Index i = 0; i < ncols; ++i) sum += row[i];
        dbias[co] += sum;
      }
    }
    col.resize(g.rows() * ncols);
    if (!dweight.empty()) {
      im2col(x, g, c0, c1, col.data());
      ConstRowMap cmat(col.data(), static_cast<Eigen::Index>(g.rows()), ncols);
      RowMap dwmat(dweight.data(), spec.out_ch, static_cast<Eigen::Index>(g.rows()));
      dwmat.noalias() += dymat * cmat.transpose();
    }
    if (dx) {
      RowMap dcol(col.data(), static_cast<Eigen::Index>(g.rows()), ncols);
      dcol.noalias() = wmat.transpose() * dymat;
      col2im_add(col.data(), g, c0, c1, *dx);
    }
  }
}

}  // namespace bgm
