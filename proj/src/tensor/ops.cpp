#include "hcnf/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "hcnf/core/parallel.hpp"

namespace hcnf {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  HCNF_REQUIRE(s.size() == rank, std::string(what) + " expects a rank-" + std::to_string(rank) +
                                     " tensor, got " + shape_str(s));
}

template <typename T>
void accumulate(const Tensor<T>& dst, std::type_identity_t<std::span<const T>> src) {
  auto g = dst.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, kh, kw, ho, wo;
  int stride, pad;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  const std::size_t p = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* dst = col + ((c * g.kh + ki) * g.kw + kj) * p;
        const T* plane = img + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          T* drow = dst + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(drow, drow + g.wo, T{0});
            continue;
          }
          const T* srow = plane + iy * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            drow[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : srow[ix];
          }
        }
      }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, T* img) {
  const std::size_t p = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* src = col + ((c * g.kh + ki) * g.kw + kj) * p;
        T* plane = img + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* drow = plane + iy * g.w;
          const T* srow = src + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.w)) drow[ix] += srow[ox];
          }
        }
      }
}

template <typename T>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& x, T (*f)(T), T (*df_from_out)(T, T)) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, df_from_out]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * df_from_out(x[i], out[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d kernel");
  HCNF_REQUIRE(stride >= 1 && padding >= 0, "conv2d requires stride >= 1 and padding >= 0");
  HCNF_REQUIRE(x.dim(1) == w.dim(1), "conv2d channel mismatch: input has " + std::to_string(x.dim(1)) +
                                         " channels, kernel expects " + std::to_string(w.dim(1)));
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0, stride, padding};
  HCNF_REQUIRE(g.kh <= g.h + 2 * padding && g.kw <= g.w + 2 * padding,
               "conv2d kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
  if (b.defined()) HCNF_REQUIRE(b.numel() == g.cout, "conv2d bias must have Cout elements");
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  Tensor<T> out(Shape{g.batch, g.cout, g.ho, g.wo});
  const std::size_t K = g.k(), P = g.p();
  CMatMap<T> wm(w.ptr(), g.cout, K);
  parallel_for(g.batch, [&](std::size_t lo, std::size_t hi) {
    std::vector<T> col(g.pointwise() ? 0 : K * P);
    for (std::size_t n = lo; n < hi; ++n) {
      const T* img = x.ptr() + n * g.cin * g.h * g.w;
      if (!g.pointwise()) im2col(img, g, col.data());
      CMatMap<T> cm(g.pointwise() ? img : col.data(), K, P);
      MatMap<T> om(out.ptr() + n * g.cout * P, g.cout, P);
      om.noalias() = wm * cm;
      if (b.defined())
        for (std::size_t c = 0; c < g.cout; ++c) om.row(c).array() += b[c];
    }
  });

  if (tape.wants(x, w, b)) {
    out.set_requires_grad(true);
    tape.record([x, w, b, out, g]() mutable {
      if (!out.has_grad()) return;
      const std::size_t K = g.k(), P = g.p();
      const bool need_x = x.requires_grad(), need_w = w.requires_grad(),
                 need_b = b.defined() && b.requires_grad();
      std::span<T> gx;
      if (need_x) gx = x.ensure_grad();
      const std::size_t chunks = std::max<std::size_t>(1, parallel_chunks(g.batch));
      std::vector<RowMat<T>> dw_part(need_w ? chunks : 0);
      std::vector<std::vector<T>> db_part(need_b ? chunks : 0);
      CMatMap<T> wm(w.ptr(), g.cout, K);
      const T* go = out.grad().data();
      // Chunk index is recovered from the chunk's first item so partial sums
      // are reduced in a fixed order afterwards.
      const std::size_t base = g.batch / chunks, extra = g.batch % chunks;
      auto chunk_of = [&](std::size_t lo) {
        std::size_t c = 0, start = 0;
        while (start != lo) start += base + (c++ < extra ? 1 : 0);
        return c;
      };
      parallel_for(g.batch, [&](std::size_t lo, std::size_t hi) {
        const std::size_t c = chunk_of(lo);
        std::vector<T> col(g.pointwise() ? 0 : K * P);
        std::vector<T> dcol(need_x && !g.pointwise() ? K * P : 0);
        if (need_w) dw_part[c] = RowMat<T>::Zero(g.cout, K);
        if (need_b) db_part[c].assign(g.cout, T{0});
        for (std::size_t n = lo; n < hi; ++n) {
          CMatMap<T> gom(go + n * g.cout * P, g.cout, P);
          const T* img = x.ptr() + n * g.cin * g.h * g.w;
          if (need_w) {
            if (!g.pointwise()) im2col(img, g, col.data());
            CMatMap<T> cm(g.pointwise() ? img : col.data(), K, P);
            dw_part[c].noalias() += gom * cm.transpose();
          }
          if (need_b)
            for (std::size_t o = 0; o < g.cout; ++o) db_part[c][o] += gom.row(o).sum();
          if (need_x) {
            T* gimg = gx.data() + n * g.cin * g.h * g.w;
            if (g.pointwise()) {
              MatMap<T> gim(gimg, K, P);
              gim.noalias() += wm.transpose() * gom;
            } else {
              MatMap<T> dcm(dcol.data(), K, P);
              dcm.noalias() = wm.transpose() * gom;
              col2im(dcol.data(), g, gimg);
            }
          }
        }
      });
      if (need_w) {
        auto gw = w.ensure_grad();
        MatMap<T> gwm(gw.data(), g.cout, K);
        for (const auto& part : dw_part)
          if (part.size()) gwm += part;
      }
      if (need_b) {
        auto gb = b.ensure_grad();
        for (const auto& part : db_part)
          for (std::size_t o = 0; o < part.size(); ++o) gb[o] += part[o];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> max_pool2d(Tape<T>& tape, const Tensor<T>& x, int window, int stride, int padding) {
  require_rank(x.shape(), 4, "max_pool2d input");
  HCNF_REQUIRE(window >= 1 && stride >= 1 && padding >= 0 && padding < window,
               "max_pool2d requires window >= 1, stride >= 1, 0 <= padding < window");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  HCNF_REQUIRE(static_cast<std::size_t>(window) <= H + 2 * padding &&
                   static_cast<std::size_t>(window) <= W + 2 * padding,
               "max_pool2d window " + std::to_string(window) + " exceeds spatial extent of " +
                   shape_str(x.shape()));
  const std::size_t Ho = (H + 2 * padding - window) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - window) / stride + 1;
  Tensor<T> out(Shape{B, C, Ho, Wo});
  std::vector<std::size_t> arg(out.numel());
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const T* src = x.ptr() + plane * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        bool found = false;
        for (int ky = 0; ky < window; ++ky) {
          const long iy = static_cast<long>(oy * stride) - padding + ky;
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (int kx = 0; kx < window; ++kx) {
            const long ix = static_cast<long>(ox * stride) - padding + kx;
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const T v = src[iy * W + ix];
            if (!found || v > best) {
              best = v;
              best_i = iy * W + ix;
              found = true;
            }
          }
        }
        const std::size_t o = (plane * Ho + oy) * Wo + ox;
        out[o] = best;
        arg[o] = plane * H * W + best_i;
      }
  }
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, arg = std::move(arg)]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t o = 0; o < go.size(); ++o) gx[arg[o]] += go[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out(Shape{B, C});
  for (std::size_t p = 0; p < B * C; ++p) {
    T s{0};
    for (std::size_t i = 0; i < HW; ++i) s += x[p * HW + i];
    out[p] = s / static_cast<T>(HW);
  }
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, HW]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto go = out.grad();
      const T inv = T{1} / static_cast<T>(HW);
      for (std::size_t p = 0; p < go.size(); ++p)
        for (std::size_t i = 0; i < HW; ++i) gx[p * HW + i] += go[p] * inv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  HCNF_REQUIRE(x.dim(1) == w.dim(0), "linear dimension mismatch: input " + shape_str(x.shape()) +
                                         " vs weight " + shape_str(w.shape()));
  const std::size_t B = x.dim(0), F = x.dim(1), G = w.dim(1);
  if (b.defined()) HCNF_REQUIRE(b.numel() == G, "linear bias must have " + std::to_string(G) + " elements");
  Tensor<T> out(Shape{B, G});
  MatMap<T> om(out.ptr(), B, G);
  om.noalias() = CMatMap<T>(x.ptr(), B, F) * CMatMap<T>(w.ptr(), F, G);
  if (b.defined())
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t c = 0; c < G; ++c) out[r * G + c] += b[c];
  if (tape.wants(x, w, b)) {
    out.set_requires_grad(true);
    tape.record([x, w, b, out, B, F, G]() mutable {
      if (!out.has_grad()) return;
      CMatMap<T> gom(out.grad().data(), B, G);
      if (x.requires_grad()) {
        MatMap<T> gxm(x.ensure_grad().data(), B, F);
        gxm.noalias() += gom * CMatMap<T>(w.ptr(), F, G).transpose();
      }
      if (w.requires_grad()) {
        MatMap<T> gwm(w.ensure_grad().data(), F, G);
        gwm.noalias() += CMatMap<T>(x.ptr(), B, F).transpose() * gom;
      }
      if (b.defined() && b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t c = 0; c < G; ++c) gb[c] += gom(r, c);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& running, Mode mode, double momentum, double eps) {
  require_rank(x.shape(), 4, "batchnorm2d input");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const std::size_t N = B * HW;
  HCNF_REQUIRE(gamma.numel() == C && beta.numel() == C && running.mean.numel() == C && running.var.numel() == C,
               "batchnorm2d parameters must have C elements");
  HCNF_REQUIRE(mode == Mode::eval || N >= 2,
               "batchnorm2d in train mode needs at least 2 values per channel (got " + std::to_string(N) + ")");
  std::vector<T> mean(C), inv_std(C);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0, ss = 0;
      for (std::size_t n = 0; n < B; ++n) {
        const T* p = x.ptr() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(N);
      for (std::size_t n = 0; n < B; ++n) {
        const T* p = x.ptr() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(N);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      running.mean[c] = static_cast<T>((1 - momentum) * running.mean[c] + momentum * mu);
      running.var[c] = static_cast<T>((1 - momentum) * running.var[c] +
                                      momentum * var * static_cast<double>(N) / static_cast<double>(N - 1));
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running.mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running.var[c]) + eps));
    }
  }
  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T h = (x[off + i] - mean[c]) * inv_std[c];
        xhat[off + i] = h;
        out[off + i] = gamma[c] * h + beta[c];
      }
    }
  if (tape.wants(x, gamma, beta)) {
    out.set_requires_grad(true);
    tape.record([x, gamma, beta, out, xhat, inv_std, mode, B, C, HW, N]() mutable {
      if (!out.has_grad()) return;
      auto go = out.grad();
      std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (n * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            sum_dy[c] += go[off + i];
            sum_dy_xhat[c] += go[off + i] * xhat[off + i];
          }
        }
      if (gamma.requires_grad()) {
        auto gg = gamma.ensure_grad();
        for (std::size_t c = 0; c < C; ++c) gg[c] += static_cast<T>(sum_dy_xhat[c]);
      }
      if (beta.requires_grad()) {
        auto gb = beta.ensure_grad();
        for (std::size_t c = 0; c < C; ++c) gb[c] += static_cast<T>(sum_dy[c]);
      }
      if (!x.requires_grad()) return;
      auto gx = x.ensure_grad();
      const double inv_n = 1.0 / static_cast<double>(N);
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (n * C + c) * HW;
          const double k = static_cast<double>(gamma[c]) * inv_std[c];
          for (std::size_t i = 0; i < HW; ++i) {
            if (mode == Mode::train) {
              gx[off + i] += static_cast<T>(
                  k * (go[off + i] - inv_n * sum_dy[c] - xhat[off + i] * inv_n * sum_dy_xhat[c]));
            } else {
              gx[off + i] += static_cast<T>(k * go[off + i]);
            }
          }
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      tape, x, [](T v) { return v > T{0} ? v : T{0}; }, [](T in, T) { return in > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      tape, x,
      [](T v) {
        // Split by sign so exp() never overflows.
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T out) { return out * (T{1} - out); });
}

template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
  return unary<T>(
      tape, x, [](T v) { return std::tanh(v); }, [](T, T out) { return T{1} - out * out; });
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  HCNF_REQUIRE(a.shape() == b.shape(), "add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  if (tape.wants(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) accumulate(a, out.grad());
      if (b.requires_grad()) accumulate(b, out.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  HCNF_REQUIRE(a.shape() == b.shape(), "mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (tape.wants(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto go = out.grad();
      // Read both operands before writing either gradient (a and b may alias).
      if (a.requires_grad()) {
        std::vector<T> d(go.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = go[i] * b[i];
        accumulate(a, std::span<const T>(d));
      }
      if (b.requires_grad()) {
        std::vector<T> d(go.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = go[i] * a[i];
        accumulate(b, std::span<const T>(d));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T s) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * s;
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, s]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  T s{0};
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  Tensor<T> out = Tensor<T>::scalar(s);
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      const T go = out.grad()[0];
      for (auto& v : gx) v += go;
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "concat lhs");
  require_rank(b.shape(), 2, "concat rhs");
  HCNF_REQUIRE(a.dim(0) == b.dim(0), "concat batch mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t B = a.dim(0), F1 = a.dim(1), F2 = b.dim(1), F = F1 + F2;
  Tensor<T> out(Shape{B, F});
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(a.ptr() + r * F1, F1, out.ptr() + r * F);
    std::copy_n(b.ptr() + r * F2, F2, out.ptr() + r * F + F1);
  }
  if (tape.wants(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out, B, F1, F2, F]() mutable {
      if (!out.has_grad()) return;
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t j = 0; j < F1; ++j) ga[r * F1 + j] += go[r * F + j];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t j = 0; j < F2; ++j) gb[r * F2 + j] += go[r * F + F1 + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  HCNF_REQUIRE(!parts.empty(), "concat_channels needs at least one tensor");
  const std::size_t B = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3), HW = H * W;
  std::size_t C = 0;
  for (const auto& p : parts) {
    require_rank(p.shape(), 4, "concat_channels part");
    HCNF_REQUIRE(p.dim(0) == B && p.dim(2) == H && p.dim(3) == W,
                 "concat_channels spatial/batch mismatch: " + shape_str(p.shape()));
    C += p.dim(1);
  }
  Tensor<T> out(Shape{B, C, H, W});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t Ci = p.dim(1);
    for (std::size_t n = 0; n < B; ++n)
      std::copy_n(p.ptr() + n * Ci * HW, Ci * HW, out.ptr() + (n * C + c0) * HW);
    c0 += Ci;
  }
  bool any = false;
  for (const auto& p : parts) any = any || tape.wants(p);
  if (any) {
    out.set_requires_grad(true);
    tape.record([parts, out, B, C, HW]() mutable {
      if (!out.has_grad()) return;
      auto go = out.grad();
      std::size_t c0 = 0;
      for (auto& p : parts) {
        const std::size_t Ci = p.dim(1);
        if (p.requires_grad()) {
          auto gp = p.ensure_grad();
          for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < Ci * HW; ++i) gp[n * Ci * HW + i] += go[(n * C + c0) * HW + i];
        }
        c0 += Ci;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x.shape(), 2, "slice_cols input");
  HCNF_REQUIRE(begin <= end && end <= x.dim(1), "slice_cols range out of bounds");
  const std::size_t B = x.dim(0), F = x.dim(1), S = end - begin;
  Tensor<T> out(Shape{B, S});
  for (std::size_t r = 0; r < B; ++r) std::copy_n(x.ptr() + r * F + begin, S, out.ptr() + r * S);
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, B, F, S, begin]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < S; ++j) gx[r * F + begin + j] += go[r * S + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> row(Tape<T>& tape, const Tensor<T>& x, std::size_t r) {
  require_rank(x.shape(), 2, "row input");
  HCNF_REQUIRE(r < x.dim(0), "row index out of bounds");
  const std::size_t F = x.dim(1);
  Tensor<T> out(Shape{1, F});
  std::copy_n(x.ptr() + r * F, F, out.ptr());
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out, r, F]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t j = 0; j < F; ++j) gx[r * F + j] += go[j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  HCNF_REQUIRE(shape_numel(shape) == x.numel(),
               "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tape.wants(x)) {
    out.set_requires_grad(true);
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      accumulate(x, std::span<const T>(out.grad()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax input");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t r = 0; r < B; ++r) {
    const T* z = logits.ptr() + r * K;
    const T m = *std::max_element(z, z + K);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(z[k] - m));
    for (std::size_t k = 0; k < K; ++k) p[r * K + k] = static_cast<T>(std::exp(static_cast<double>(z[k] - m)) / s);
  }
  return p;
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& targets) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  HCNF_REQUIRE(targets.shape() == logits.shape(), "targets shape " + shape_str(targets.shape()) +
                                                      " does not match logits " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  HCNF_REQUIRE(K >= 2, "softmax_cross_entropy needs at least 2 classes");
  std::vector<std::size_t> cls(B);
  for (std::size_t r = 0; r < B; ++r) {
    std::size_t ones = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const T t = targets[r * K + k];
      HCNF_REQUIRE(t == T{0} || t == T{1}, "target row " + std::to_string(r) + " is not one-hot");
      if (t == T{1}) {
        ++ones;
        cls[r] = k;
      }
    }
    HCNF_REQUIRE(ones == 1, "target row " + std::to_string(r) + " is not one-hot");
  }
  SoftmaxCrossEntropy<T> res;
  res.probs = softmax(logits);
  double nll = 0;
  for (std::size_t r = 0; r < B; ++r) {
    // log p = z - m - log(sum exp(z - m))
    const T* z = logits.ptr() + r * K;
    const double m = *std::max_element(z, z + K);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
    nll -= (z[cls[r]] - m) - std::log(s);
  }
  res.loss = Tensor<T>::scalar(static_cast<T>(nll / static_cast<double>(B)));
  if (tape.wants(logits)) {
    res.loss.set_requires_grad(true);
    tape.record([logits, targets, probs = res.probs, loss = res.loss, B]() mutable {
      if (!loss.has_grad()) return;
      auto gz = logits.ensure_grad();
      const T scale = loss.grad()[0] / static_cast<T>(B);
      for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += (probs[i] - targets[i]) * scale;
    });
  }
  return res;
}

#define HCNF_INSTANTIATE_OPS(T)                                                                               \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);       \
  template Tensor<T> max_pool2d(Tape<T>&, const Tensor<T>&, int, int, int);                                  \
  template Tensor<T> global_avg_pool(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> batchnorm2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                 BatchNormStats<T>&, Mode, double, double);                                  \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> tanh(Tape<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                                  \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                       \
  template Tensor<T> concat(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> concat_channels(Tape<T>&, const std::vector<Tensor<T>>&);                              \
  template Tensor<T> slice_cols(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                      \
  template Tensor<T> row(Tape<T>&, const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                            \
  template Tensor<T> softmax(const Tensor<T>&);                                                             \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

HCNF_INSTANTIATE_OPS(float)
HCNF_INSTANTIATE_OPS(double)

}  // namespace ops
}  // namespace hcnf
