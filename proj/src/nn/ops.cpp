#include "nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace aid::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<Mat<T>>;
template <typename T>
using CMap = Eigen::Map<const Mat<T>>;

template <typename T>
CMap<T> view(const BasicTensor<T>& t) {
  return CMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
Map<T> view(BasicTensor<T>& t) {
  return Map<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s.empty() ? Shape{1} : s;
  out.back() = last;
  return out;
}

}  // namespace

template <typename T>
void matmul_into(const BasicTensor<T>& a, bool trans_a, const BasicTensor<T>& b, bool trans_b,
                 BasicTensor<T>& out, bool accumulate) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t ka = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (ka != kb) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  if (out.rows() != m || out.cols() != n) {
    throw DimensionError("matmul: output " + shape_str(out.shape()) + " should be [" +
                         std::to_string(m) + ", " + std::to_string(n) + "]");
  }
  auto o = view(out);
  if (!accumulate) o.setZero();
  if (ka == 0) return;
  auto A = view(a);
  auto B = view(b);
  if (!trans_a && !trans_b) o.noalias() += A * B;
  else if (trans_a && !trans_b) o.noalias() += A.transpose() * B;
  else if (!trans_a && trans_b) o.noalias() += A * B.transpose();
  else o.noalias() += A.transpose() * B.transpose();
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out({a.rows(), b.cols()});
  matmul_into(a, false, b, false, out, false);
  return out;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias) {
  if (weight.rank() != 2 || x.cols() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t dout = weight.dim(1);
  BasicTensor<T> y(with_last(x.shape(), dout));
  matmul_into(x, false, weight, false, y, false);
  if (bias) {
    if (bias->numel() != dout) {
      throw DimensionError("linear: bias " + shape_str(bias->shape()) + " vs weight " +
                           shape_str(weight.shape()));
    }
    view(y).rowwise() += CMap<T>(bias->data(), 1, static_cast<Eigen::Index>(dout)).row(0);
  }
  return y;
}

template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_out, BasicTensor<T>* grad_weight,
                               BasicTensor<T>* grad_bias) {
  if (grad_weight) matmul_into(x, true, grad_out, false, *grad_weight, true);
  if (grad_bias) {
    Map<T>(grad_bias->data(), 1, static_cast<Eigen::Index>(grad_bias->numel())).row(0) +=
        view(grad_out).colwise().sum();
  }
  BasicTensor<T> gx(x.shape());
  matmul_into(grad_out, false, weight, true, gx, false);
  return gx;
}

template <typename T>
T gelu_scalar(T x) {
  const T c = std::sqrt(T{2} / std::numbers::pi_v<T>);
  return T{0.5} * x * (T{1} + std::tanh(c * (x + T{0.044715} * x * x * x)));
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = gelu_scalar(x[i]);
  return y;
}

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  const T c = std::sqrt(T{2} / std::numbers::pi_v<T>);
  BasicTensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    const T th = std::tanh(c * (v + T{0.044715} * v * v * v));
    const T d = T{0.5} * (T{1} + th) +
                T{0.5} * v * (T{1} - th * th) * c * (T{1} + T{3} * T{0.044715} * v * v);
    g[i] = grad_out[i] * d;
  }
  return g;
}

template <typename T>
AttentionOutput<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                             const BasicTensor<T>& v, T scale) {
  if (k.rows() == 0) throw DimensionError("attention: empty key set");
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: keys " + shape_str(k.shape()) + " and values " +
                         shape_str(v.shape()) + " have different row counts");
  }
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query " + shape_str(q.shape()) + " and key " +
                         shape_str(k.shape()) + " widths differ");
  }
  const std::size_t m = q.rows(), n = k.rows();
  AttentionOutput<T> res{BasicTensor<T>({m, v.cols()}), BasicTensor<T>({m, n})};
  matmul_into(q, false, k, true, res.probs, false);
  for (std::size_t i = 0; i < m; ++i) {
    T* row = res.probs.data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      row[j] *= scale;
      mx = std::max(mx, row[j]);
    }
    T sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  }
  matmul_into(res.probs, false, v, false, res.out, false);
  return res;
}

template <typename T>
AttentionGrads<T> attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                     const BasicTensor<T>& v, const BasicTensor<T>& probs,
                                     const BasicTensor<T>& grad_out, T scale) {
  const std::size_t m = q.rows(), n = k.rows();
  AttentionGrads<T> g{BasicTensor<T>(q.shape()), BasicTensor<T>(k.shape()),
                      BasicTensor<T>(v.shape())};
  matmul_into(probs, true, grad_out, false, g.v, false);
  BasicTensor<T> gp({m, n});
  matmul_into(grad_out, false, v, true, gp, false);
  for (std::size_t i = 0; i < m; ++i) {
    const T* p = probs.data() + i * n;
    T* row = gp.data() + i * n;
    T dot = 0;
    for (std::size_t j = 0; j < n; ++j) dot += row[j] * p[j];
    for (std::size_t j = 0; j < n; ++j) row[j] = p[j] * (row[j] - dot) * scale;
  }
  matmul_into(gp, false, k, false, g.q, false);
  matmul_into(gp, true, q, false, g.k, false);
  return g;
}

template <typename T>
LayerNormOutput<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                              const BasicTensor<T>& bias, T eps) {
  const std::size_t d = x.cols(), rows = x.rows();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " vs gain " +
                         shape_str(gain.shape()));
  }
  LayerNormOutput<T> out{BasicTensor<T>(x.shape()), BasicTensor<T>(x.shape()),
                         std::vector<T>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    out.rstd[r] = rstd;
    T* xh = out.xhat.data() + r * d;
    T* y = out.y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mean) * rstd;
      y[j] = xh[j] * gain[j] + bias[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> layer_norm_backward(const LayerNormOutput<T>& fwd, const BasicTensor<T>& gain,
                                   const BasicTensor<T>& grad_out, BasicTensor<T>* grad_gain,
                                   BasicTensor<T>* grad_bias) {
  const std::size_t d = fwd.xhat.cols(), rows = fwd.xhat.rows();
  BasicTensor<T> gx(fwd.xhat.shape());
  std::vector<T> gxh(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xh = fwd.xhat.data() + r * d;
    const T* gy = grad_out.data() + r * d;
    T mean_g = 0, mean_gx = 0;
    for (std::size_t j = 0; j < d; ++j) {
      gxh[j] = gy[j] * gain[j];
      mean_g += gxh[j];
      mean_gx += gxh[j] * xh[j];
      if (grad_gain) (*grad_gain)[j] += gy[j] * xh[j];
      if (grad_bias) (*grad_bias)[j] += gy[j];
    }
    mean_g /= static_cast<T>(d);
    mean_gx /= static_cast<T>(d);
    T* out = gx.data() + r * d;
    for (std::size_t j = 0; j < d; ++j)
      out[j] = fwd.rstd[r] * (gxh[j] - mean_g - xh[j] * mean_gx);
  }
  return gx;
}

namespace {

struct ConvGeom {
  std::size_t C, N, H, W, kt, kh, kw;
};

template <typename T>
ConvGeom conv_geom(const BasicTensor<T>& x, const BasicTensor<T>& k) {
  if (x.rank() != 4 || k.rank() != 4 || x.dim(0) != k.dim(0)) {
    throw DimensionError("depthwise_conv3d: input " + shape_str(x.shape()) + " vs kernels " +
                         shape_str(k.shape()));
  }
  for (std::size_t a = 1; a < 4; ++a) {
    if (k.dim(a) % 2 == 0) {
      throw ConfigError("depthwise_conv3d: kernel extents must be odd, got " +
                        shape_str(k.shape()));
    }
  }
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(1), k.dim(2), k.dim(3)};
}

}  // namespace

template <typename T>
BasicTensor<T> depthwise_conv3d(const BasicTensor<T>& x, const BasicTensor<T>& kernels) {
  const auto g = conv_geom(x, kernels);
  const long rt = static_cast<long>(g.kt / 2), rh = static_cast<long>(g.kh / 2),
             rw = static_cast<long>(g.kw / 2);
  BasicTensor<T> y(x.shape());
  for (std::size_t c = 0; c < g.C; ++c) {
    const T* xc = x.data() + c * g.N * g.H * g.W;
    const T* kc = kernels.data() + c * g.kt * g.kh * g.kw;
    T* yc = y.data() + c * g.N * g.H * g.W;
    for (long t = 0; t < static_cast<long>(g.N); ++t)
      for (long i = 0; i < static_cast<long>(g.H); ++i)
        for (long j = 0; j < static_cast<long>(g.W); ++j) {
          T acc = 0;
          for (long a = -rt; a <= rt; ++a) {
            const long ts = t + a;
            if (ts < 0 || ts >= static_cast<long>(g.N)) continue;
            for (long b = -rh; b <= rh; ++b) {
              const long is = i + b;
              if (is < 0 || is >= static_cast<long>(g.H)) continue;
              for (long d = -rw; d <= rw; ++d) {
                const long js = j + d;
                if (js < 0 || js >= static_cast<long>(g.W)) continue;
                acc += kc[((a + rt) * static_cast<long>(g.kh) + (b + rh)) *
                              static_cast<long>(g.kw) + (d + rw)] *
                       xc[(ts * static_cast<long>(g.H) + is) * static_cast<long>(g.W) + js];
              }
            }
          }
          yc[(t * static_cast<long>(g.H) + i) * static_cast<long>(g.W) + j] = acc;
        }
  }
  return y;
}

template <typename T>
BasicTensor<T> depthwise_conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernels,
                                         const BasicTensor<T>& grad_out,
                                         BasicTensor<T>* grad_kernels) {
  const auto g = conv_geom(x, kernels);
  const long rt = static_cast<long>(g.kt / 2), rh = static_cast<long>(g.kh / 2),
             rw = static_cast<long>(g.kw / 2);
  const long N = static_cast<long>(g.N), H = static_cast<long>(g.H), W = static_cast<long>(g.W);
  const long KH = static_cast<long>(g.kh), KW = static_cast<long>(g.kw);
  BasicTensor<T> gx(x.shape());
  for (std::size_t c = 0; c < g.C; ++c) {
    const T* xc = x.data() + c * g.N * g.H * g.W;
    const T* kc = kernels.data() + c * g.kt * g.kh * g.kw;
    T* gkc = grad_kernels ? grad_kernels->data() + c * g.kt * g.kh * g.kw : nullptr;
    const T* gyc = grad_out.data() + c * g.N * g.H * g.W;
    T* gxc = gx.data() + c * g.N * g.H * g.W;
    for (long t = 0; t < N; ++t)
      for (long i = 0; i < H; ++i)
        for (long j = 0; j < W; ++j) {
          const T gy = gyc[(t * H + i) * W + j];
          for (long a = -rt; a <= rt; ++a) {
            const long ts = t + a;
            if (ts < 0 || ts >= N) continue;
            for (long b = -rh; b <= rh; ++b) {
              const long is = i + b;
              if (is < 0 || is >= H) continue;
              for (long d = -rw; d <= rw; ++d) {
                const long js = j + d;
                if (js < 0 || js >= W) continue;
                const long ki = ((a + rt) * KH + (b + rh)) * KW + (d + rw);
                const long xi = (ts * H + is) * W + js;
                gxc[xi] += kc[ki] * gy;
                if (gkc) gkc[ki] += xc[xi] * gy;
              }
            }
          }
        }
  }
  return gx;
}

namespace {

// Gathers 3x3 neighbourhoods: cols [F*h*w, 9*C], zero outside the grid.
template <typename T>
BasicTensor<T> im2col3x3(const BasicTensor<T>& x, std::size_t h, std::size_t w) {
  const std::size_t C = x.cols();
  const std::size_t F = x.rows() / (h * w);
  BasicTensor<T> cols({F * h * w, 9 * C});
  for (std::size_t f = 0; f < F; ++f)
    for (long i = 0; i < static_cast<long>(h); ++i)
      for (long j = 0; j < static_cast<long>(w); ++j) {
        T* dst = cols.data() + ((f * h + i) * w + j) * 9 * C;
        for (long di = -1; di <= 1; ++di)
          for (long dj = -1; dj <= 1; ++dj, dst += C) {
            const long si = i + di, sj = j + dj;
            if (si < 0 || sj < 0 || si >= static_cast<long>(h) || sj >= static_cast<long>(w))
              continue;
            std::copy_n(x.data() + ((f * h + si) * w + sj) * C, C, dst);
          }
      }
  return cols;
}

template <typename T>
BasicTensor<T> col2im3x3(const BasicTensor<T>& cols, std::size_t F, std::size_t h, std::size_t w,
                         std::size_t C) {
  BasicTensor<T> x({F, h * w, C});
  for (std::size_t f = 0; f < F; ++f)
    for (long i = 0; i < static_cast<long>(h); ++i)
      for (long j = 0; j < static_cast<long>(w); ++j) {
        const T* src = cols.data() + ((f * h + i) * w + j) * 9 * C;
        for (long di = -1; di <= 1; ++di)
          for (long dj = -1; dj <= 1; ++dj, src += C) {
            const long si = i + di, sj = j + dj;
            if (si < 0 || sj < 0 || si >= static_cast<long>(h) || sj >= static_cast<long>(w))
              continue;
            T* dst = x.data() + ((f * h + si) * w + sj) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
      }
  return x;
}

template <typename T>
void check_grid(const BasicTensor<T>& x, std::size_t h, std::size_t w, const char* what) {
  if (h * w == 0 || x.rows() % (h * w) != 0) {
    throw DimensionError(std::string(what) + ": input " + shape_str(x.shape()) +
                         " is not a stack of " + std::to_string(h) + "x" + std::to_string(w) +
                         " grids");
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv3x3(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                       const BasicTensor<T>& weight, const BasicTensor<T>* bias) {
  check_grid(x, h, w, "conv3x3");
  if (weight.rank() != 2 || weight.dim(0) != 9 * x.cols()) {
    throw DimensionError("conv3x3: weight " + shape_str(weight.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  const auto cols = im2col3x3(x, h, w);
  auto y = linear(cols, weight, bias);
  y.reshape({x.rows() / (h * w), h * w, weight.dim(1)});
  return y;
}

template <typename T>
BasicTensor<T> conv3x3_backward(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                                const BasicTensor<T>& weight, const BasicTensor<T>& grad_out,
                                BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias) {
  const auto cols = im2col3x3(x, h, w);
  const auto gcols = linear_backward(cols, weight, grad_out, grad_weight, grad_bias);
  auto gx = col2im3x3(gcols, x.rows() / (h * w), h, w, x.cols());
  gx.reshape(x.shape());
  return gx;
}

template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x, std::size_t h, std::size_t w) {
  check_grid(x, h, w, "avg_pool2");
  if (h % 2 || w % 2) throw DimensionError("avg_pool2: odd grid extents");
  const std::size_t C = x.cols(), F = x.rows() / (h * w), h2 = h / 2, w2 = w / 2;
  BasicTensor<T> y({F, h2 * w2, C});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* src = x.data() + ((f * h + i) * w + j) * C;
        T* dst = y.data() + ((f * h2 + i / 2) * w2 + j / 2) * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] += T{0.25} * src[c];
      }
  return y;
}

template <typename T>
BasicTensor<T> avg_pool2_backward(const BasicTensor<T>& grad_out, std::size_t h, std::size_t w) {
  const std::size_t C = grad_out.cols(), h2 = h / 2, w2 = w / 2;
  const std::size_t F = grad_out.rows() / (h2 * w2);
  BasicTensor<T> gx({F, h * w, C});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* src = grad_out.data() + ((f * h2 + i / 2) * w2 + j / 2) * C;
        T* dst = gx.data() + ((f * h + i) * w + j) * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] = T{0.25} * src[c];
      }
  return gx;
}

template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& x, std::size_t h, std::size_t w) {
  check_grid(x, h, w, "upsample2");
  const std::size_t C = x.cols(), F = x.rows() / (h * w), H = 2 * h, W = 2 * w;
  BasicTensor<T> y({F, H * W, C});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        std::copy_n(x.data() + ((f * h + i / 2) * w + j / 2) * C, C,
                    y.data() + ((f * H + i) * W + j) * C);
  return y;
}

template <typename T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& grad_out, std::size_t h, std::size_t w) {
  const std::size_t C = grad_out.cols(), H = 2 * h, W = 2 * w;
  const std::size_t F = grad_out.rows() / (H * W);
  BasicTensor<T> gx({F, h * w, C});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const T* src = grad_out.data() + ((f * H + i) * W + j) * C;
        T* dst = gx.data() + ((f * h + i / 2) * w + j / 2) * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
      }
  return gx;
}

#define AID_INSTANTIATE(T)                                                                    \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template void matmul_into(const BasicTensor<T>&, bool, const BasicTensor<T>&, bool,         \
                            BasicTensor<T>&, bool);                                           \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                 const BasicTensor<T>*);                                      \
  template BasicTensor<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                          const BasicTensor<T>&, BasicTensor<T>*,             \
                                          BasicTensor<T>*);                                   \
  template T gelu_scalar(T);                                                                  \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                        \
  template BasicTensor<T> gelu_backward(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template AttentionOutput<T> attention(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                        const BasicTensor<T>&, T);                            \
  template AttentionGrads<T> attention_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                const BasicTensor<T>&, const BasicTensor<T>&, \
                                                const BasicTensor<T>&, T);                    \
  template LayerNormOutput<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const BasicTensor<T>&, T);                           \
  template BasicTensor<T> layer_norm_backward(const LayerNormOutput<T>&,                      \
                                              const BasicTensor<T>&, const BasicTensor<T>&,   \
                                              BasicTensor<T>*, BasicTensor<T>*);              \
  template BasicTensor<T> depthwise_conv3d(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> depthwise_conv3d_backward(const BasicTensor<T>&,                    \
                                                    const BasicTensor<T>&,                    \
                                                    const BasicTensor<T>&, BasicTensor<T>*);  \
  template BasicTensor<T> conv3x3(const BasicTensor<T>&, std::size_t, std::size_t,            \
                                  const BasicTensor<T>&, const BasicTensor<T>*);              \
  template BasicTensor<T> conv3x3_backward(const BasicTensor<T>&, std::size_t, std::size_t,   \
                                           const BasicTensor<T>&, const BasicTensor<T>&,      \
                                           BasicTensor<T>*, BasicTensor<T>*);                 \
  template BasicTensor<T> avg_pool2(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> avg_pool2_backward(const BasicTensor<T>&, std::size_t, std::size_t); \
  template BasicTensor<T> upsample2(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> upsample2_backward(const BasicTensor<T>&, std::size_t, std::size_t);

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::nn
