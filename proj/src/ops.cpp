#include "siamapn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "siamapn/tape.hpp"

namespace siamapn {

namespace {

using NodePtr = std::shared_ptr<detail::TensorNode>;

[[noreturn]] void shape_fail(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank, const char* name) {
  if (!t.defined()) shape_fail(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    shape_fail(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_str(t.shape()));
  }
}

void require_same(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Grad buffer of an input if it participates in backward, else nullptr.
double* grad_of(const NodePtr& n) {
  return n->requires_grad ? n->grad_buffer().data() : nullptr;
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
  std::size_t rows_per_chunk() const { return std::max<std::size_t>(1, 512 / wo); }
};

// Lowers output rows [oy0, oy1) of image `x` into col (K rows of len columns).
void im2col(const ConvGeometry& g, const double* x, std::size_t oy0, std::size_t oy1,
            double* col) {
  const std::size_t len = (oy1 - oy0) * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * len;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          double* dst = row + (oy - oy0) * g.wo;
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_acc(const ConvGeometry& g, const double* col, std::size_t oy0, std::size_t oy1,
                double* gx) {
  const std::size_t len = (oy1 - oy0) * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* gc = gx + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * len;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const double* src = row + (oy - oy0) * g.wo;
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = gc + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// out[co, 0:len] += sum_k wt[co, k] * col[k, 0:len]; out rows are ldo apart,
// col rows ldc apart.
void gemm_acc(const double* wt, std::size_t cout, std::size_t k_dim, const double* col,
              std::size_t ldc, double* out, std::size_t ldo, std::size_t len) {
  for (std::size_t k = 0; k < k_dim; ++k) {
    const double* c = col + k * ldc;
    for (std::size_t co = 0; co < cout; ++co) {
      axpy(wt[co * k_dim + k], c, out + co * ldo, len);
    }
  }
}

void conv_forward(const ConvGeometry& g, const double* x, const double* wt, const double* bias,
                  double* out) {
  const std::size_t P = g.p();
  std::vector<double> col;
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* xn = x + n * g.cin * g.h * g.w;
    double* on = out + n * g.cout * P;
    for (std::size_t co = 0; co < g.cout; ++co) {
      std::fill(on + co * P, on + (co + 1) * P, bias ? bias[co] : 0.0);
    }
    if (g.pointwise()) {
      gemm_acc(wt, g.cout, g.k(), xn, P, on, P, P);
      continue;
    }
    const std::size_t rows = g.rows_per_chunk();
    for (std::size_t oy0 = 0; oy0 < g.ho; oy0 += rows) {
      const std::size_t oy1 = std::min(g.ho, oy0 + rows);
      const std::size_t len = (oy1 - oy0) * g.wo;
      col.resize(g.k() * len);
      im2col(g, xn, oy0, oy1, col.data());
      gemm_acc(wt, g.cout, g.k(), col.data(), len, on + oy0 * g.wo, P, len);
    }
  }
}

void conv_backward(const ConvGeometry& g, const double* x, const double* wt, const double* gout,
                   double* gx, double* gw, double* gb) {
  const std::size_t P = g.p();
  const std::size_t K = g.k();
  std::vector<double> col;
  std::vector<double> dcol;
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* xn = x + n * g.cin * g.h * g.w;
    const double* gn = gout + n * g.cout * P;
    if (gb) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double* r = gn + co * P;
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += r[p];
        gb[co] += acc;
      }
    }
    const std::size_t rows = g.pointwise() ? g.ho : g.rows_per_chunk();
    for (std::size_t oy0 = 0; oy0 < g.ho; oy0 += rows) {
      const std::size_t oy1 = std::min(g.ho, oy0 + rows);
      const std::size_t len = (oy1 - oy0) * g.wo;
      const double* cptr = xn;
      std::size_t ldc = P;
      if (!g.pointwise()) {
        col.resize(K * len);
        im2col(g, xn, oy0, oy1, col.data());
        cptr = col.data();
        ldc = len;
      }
      const double* gchunk = gn + oy0 * g.wo;
      if (gw) {
        for (std::size_t co = 0; co < g.cout; ++co) {
          for (std::size_t k = 0; k < K; ++k) {
            gw[co * K + k] += dot(gchunk + co * P, cptr + k * ldc, len);
          }
        }
      }
      if (gx) {
        if (g.pointwise()) {
          double* gxn = gx + n * g.cin * P;
          for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              axpy(wt[co * K + k], gn + co * P, gxn + k * P, P);
            }
          }
        } else {
          dcol.assign(K * len, 0.0);
          for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              axpy(wt[co * K + k], gchunk + co * P, dcol.data() + k * len, len);
            }
          }
          col2im_acc(g, dcol.data(), oy0, oy1, gx + n * g.cin * g.h * g.w);
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  const std::string op = "conv2d";
  require_rank(op, x, 4, "input");
  require_rank(op, weight, 4, "weight");
  if (x.dim(1) != weight.dim(1)) {
    shape_fail(op, "input channels of " + shape_str(x.shape()) + " do not match weight " +
                       shape_str(weight.shape()));
  }
  if (stride < 1) shape_fail(op, "stride must be >= 1");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    shape_fail(op, "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                       shape_str(x.shape()) + " (pad " + std::to_string(pad) + ")");
  }
  if (bias.defined() && bias.shape() != Shape{g.cout}) {
    shape_fail(op, "bias " + shape_str(bias.shape()) + " does not match weight " +
                       shape_str(weight.shape()));
  }
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;

  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  conv_forward(g, x.data().data(), weight.data().data(),
               bias.defined() ? bias.data().data() : nullptr, out.data_mut().data());
  autodiff::check_finite(out, "conv2d");

  if (autodiff::should_record({&x, &weight, &bias})) {
    autodiff::record(out, [g, xn = x.node(), wn = weight.node(), bn = bias.node(),
                           on = out.node()] {
      conv_backward(g, xn->data.data(), wn->data.data(), on->grad.data(), grad_of(xn),
                    grad_of(wn), bn ? grad_of(bn) : nullptr);
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  const std::string op = "maxpool2d";
  require_rank(op, x, 4, "input");
  if (kernel < 1 || stride < 1) shape_fail(op, "kernel and stride must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h || kernel > w) {
    shape_fail(op, "kernel " + std::to_string(kernel) + " larger than input " + shape_str(x.shape()));
  }
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  Tensor out(Shape{n, c, ho, wo});
  std::vector<std::size_t> argmax(out.numel());
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        argmax[o] = best;
        od[o] = xd[best];
      }
    }
  }
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [xn = x.node(), on = out.node(), argmax = std::move(argmax)] {
      double* gx = grad_of(xn);
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += on->grad[i];
    });
  }
  return out;
}

Tensor dwxcorr(const Tensor& search, const Tensor& templ) {
  const std::string op = "dwxcorr";
  require_rank(op, search, 4, "search");
  require_rank(op, templ, 4, "template");
  if (search.dim(0) != templ.dim(0) || search.dim(1) != templ.dim(1)) {
    shape_fail(op, "batch/channel mismatch " + shape_str(search.shape()) + " vs " +
                       shape_str(templ.shape()));
  }
  const std::size_t n = search.dim(0), c = search.dim(1);
  const std::size_t hs = search.dim(2), ws = search.dim(3);
  const std::size_t ht = templ.dim(2), wt = templ.dim(3);
  if (ht > hs || wt > ws) {
    shape_fail(op, "template " + shape_str(templ.shape()) + " larger than search " +
                       shape_str(search.shape()));
  }
  const std::size_t ho = hs - ht + 1, wo = ws - wt + 1;
  Tensor out(Shape{n, c, ho, wo});
  const double* sd = search.data().data();
  const double* td = templ.data().data();
  double* od = out.data_mut().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* sp = sd + plane * hs * ws;
    const double* tp = td + plane * ht * wt;
    double* op_ = od + plane * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (std::size_t u = 0; u < ht; ++u) {
          for (std::size_t v = 0; v < wt; ++v) acc += sp[(i + u) * ws + j + v] * tp[u * wt + v];
        }
        op_[i * wo + j] = acc;
      }
    }
  }
  autodiff::check_finite(out, "dwxcorr");
  if (autodiff::should_record({&search, &templ})) {
    autodiff::record(out, [=, sn = search.node(), tn = templ.node(), on = out.node()] {
      double* gs = grad_of(sn);
      double* gt = grad_of(tn);
      const double* g = on->grad.data();
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        const double* sp = sn->data.data() + plane * hs * ws;
        const double* tp = tn->data.data() + plane * ht * wt;
        const double* gp = g + plane * ho * wo;
        for (std::size_t i = 0; i < ho; ++i) {
          for (std::size_t j = 0; j < wo; ++j) {
            const double go = gp[i * wo + j];
            for (std::size_t u = 0; u < ht; ++u) {
              for (std::size_t v = 0; v < wt; ++v) {
                if (gs) gs[plane * hs * ws + (i + u) * ws + j + v] += go * tp[u * wt + v];
                if (gt) gt[plane * ht * wt + u * wt + v] += go * sp[(i + u) * ws + j + v];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::string op = "matmul";
  if (!a.defined() || !b.defined()) shape_fail(op, "undefined operand");
  const bool batched = a.rank() == 3;
  if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3))) {
    shape_fail(op, "expected rank-2 or rank-3 operands, got " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
  }
  const std::size_t bsz = batched ? a.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t m = a.dim(off), k = a.dim(off + 1);
  const std::size_t kb = b.dim(off), p = b.dim(off + 1);
  if (k != kb || (batched && b.dim(0) != bsz)) {
    shape_fail(op, "inner dimension mismatch " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  }
  Tensor out(batched ? Shape{bsz, m, p} : Shape{m, p});
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data_mut().data();
  for (std::size_t s = 0; s < bsz; ++s) {
    const double* as = ad + s * m * k;
    const double* bs = bd + s * k * p;
    double* os = od + s * m * p;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) axpy(as[i * k + kk], bs + kk * p, os + i * p, p);
    }
  }
  autodiff::check_finite(out, "matmul");
  if (autodiff::should_record({&a, &b})) {
    autodiff::record(out, [=, an = a.node(), bn = b.node(), on = out.node()] {
      double* ga = grad_of(an);
      double* gb = grad_of(bn);
      for (std::size_t s = 0; s < bsz; ++s) {
        const double* as = an->data.data() + s * m * k;
        const double* bs = bn->data.data() + s * k * p;
        const double* gs = on->grad.data() + s * m * p;
        if (ga) {
          double* gas = ga + s * m * k;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) gas[i * k + kk] += dot(gs + i * p, bs + kk * p, p);
          }
        }
        if (gb) {
          double* gbs = gb + s * k * p;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) axpy(as[i * k + kk], gs + i * p, gbs + kk * p, p);
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  if (!x.defined() || (x.rank() != 2 && x.rank() != 3)) {
    shape_fail("transpose_last2", "expected rank 2 or 3, got " +
                                      (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
  const bool batched = x.rank() == 3;
  const std::size_t bsz = batched ? x.dim(0) : 1;
  const std::size_t r = x.dim(batched ? 1 : 0), c = x.dim(batched ? 2 : 1);
  Tensor out(batched ? Shape{bsz, c, r} : Shape{c, r});
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t s = 0; s < bsz; ++s) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) od[s * r * c + j * r + i] = xd[s * r * c + i * c + j];
    }
  }
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [=, xn = x.node(), on = out.node()] {
      double* gx = grad_of(xn);
      const double* g = on->grad.data();
      for (std::size_t s = 0; s < bsz; ++s) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gx[s * r * c + i * c + j] += g[s * r * c + j * r + i];
        }
      }
    });
  }
  return out;
}

Tensor softmax_lastaxis(const Tensor& x) {
  if (!x.defined() || x.rank() == 0 || x.shape().back() == 0) {
    shape_fail("softmax_lastaxis", "last axis must be non-empty");
  }
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  Tensor out(x.shape());
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd + r * k;
    double* orow = od + r * k;
    const double mx = *std::max_element(xr, xr + k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      orow[i] = std::exp(xr[i] - mx);
      total += orow[i];
    }
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < k; ++i) orow[i] *= inv;
  }
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [=, xn = x.node(), on = out.node()] {
      double* gx = grad_of(xn);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = on->data.data() + r * k;
        const double* g = on->grad.data() + r * k;
        const double s = dot(y, g, k);
        for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += y[i] * (g[i] - s);
      }
    });
  }
  return out;
}

Tensor gap(const Tensor& x) {
  require_rank("gap", x, 4, "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) shape_fail("gap", "empty spatial extent");
  Tensor out(Shape{n, c, 1, 1});
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += xd[plane * hw + i];
    od[plane] = acc / static_cast<double>(hw);
  }
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [=, xn = x.node(), on = out.node()] {
      double* gx = grad_of(xn);
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        const double g = on->grad[plane] / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) gx[plane * hw + i] += g;
      }
    });
  }
  return out;
}

Tensor gmp(const Tensor& x) {
  require_rank("gmp", x, 4, "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) shape_fail("gmp", "empty spatial extent");
  Tensor out(Shape{n, c, 1, 1});
  std::vector<std::size_t> argmax(n * c);
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    std::size_t best = plane * hw;
    for (std::size_t i = 1; i < hw; ++i) {
      if (xd[plane * hw + i] > xd[best]) best = plane * hw + i;
    }
    argmax[plane] = best;
    od[plane] = xd[best];
  }
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [xn = x.node(), on = out.node(), argmax = std::move(argmax)] {
      double* gx = grad_of(xn);
      for (std::size_t plane = 0; plane < argmax.size(); ++plane) gx[argmax[plane]] += on->grad[plane];
    });
  }
  return out;
}

namespace {

template <class Fwd, class Bwd>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Bwd dfdx) {
  if (!x.defined()) shape_fail(name, "undefined operand");
  Tensor out(x.shape());
  const double* xd = x.data().data();
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < out.numel(); ++i) od[i] = fwd(xd[i]);
  autodiff::check_finite(out, name);
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [xn = x.node(), on = out.node(), dfdx] {
      double* gx = grad_of(xn);
      for (std::size_t i = 0; i < on->data.size(); ++i) {
        gx[i] += on->grad[i] * dfdx(xn->data[i], on->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out(a.shape());
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < out.numel(); ++i) od[i] = a.data()[i] + b.data()[i];
  if (autodiff::should_record({&a, &b})) {
    autodiff::record(out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (double* ga = grad_of(an)) axpy(1.0, on->grad.data(), ga, on->grad.size());
      if (double* gb = grad_of(bn)) axpy(1.0, on->grad.data(), gb, on->grad.size());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tensor out(a.shape());
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < out.numel(); ++i) od[i] = a.data()[i] - b.data()[i];
  if (autodiff::should_record({&a, &b})) {
    autodiff::record(out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (double* ga = grad_of(an)) axpy(1.0, on->grad.data(), ga, on->grad.size());
      if (double* gb = grad_of(bn)) axpy(-1.0, on->grad.data(), gb, on->grad.size());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out(a.shape());
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < out.numel(); ++i) od[i] = a.data()[i] * b.data()[i];
  if (autodiff::should_record({&a, &b})) {
    autodiff::record(out, [an = a.node(), bn = b.node(), on = out.node()] {
      double* ga = grad_of(an);
      double* gb = grad_of(bn);
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (ga) ga[i] += on->grad[i] * bn->data[i];
        if (gb) gb[i] += on->grad[i] * an->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (!x.defined() || !s.defined()) shape_fail("scale", "undefined operand");
  if (s.numel() != 1) {
    shape_fail("scale", "scale factor must hold one value, got " + shape_str(s.shape()) +
                            " for input " + shape_str(x.shape()));
  }
  const double sv = s.item();
  Tensor out(x.shape());
  double* od = out.data_mut().data();
  for (std::size_t i = 0; i < out.numel(); ++i) od[i] = x.data()[i] * sv;
  if (autodiff::should_record({&x, &s})) {
    autodiff::record(out, [xn = x.node(), sn = s.node(), on = out.node()] {
      if (double* gx = grad_of(xn)) axpy(sn->data[0], on->grad.data(), gx, on->grad.size());
      if (double* gs = grad_of(sn)) gs[0] += dot(on->grad.data(), xn->data.data(), on->grad.size());
    });
  }
  return out;
}

Tensor scale_by(const Tensor& x, double c) {
  return unary("scale_by", x, [c](double v) { return v * c; },
               [c](double, double) { return c; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v < 0 ? 0.0 : v; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const std::string op = "concat_channels";
  require_rank(op, a, 4, "a");
  require_rank(op, b, 4, "b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    shape_fail(op, "N,H,W mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  double* od = out.data_mut().data();
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.data().data() + s * ca * hw, ca * hw, od + s * (ca + cb) * hw);
    std::copy_n(b.data().data() + s * cb * hw, cb * hw, od + s * (ca + cb) * hw + ca * hw);
  }
  if (autodiff::should_record({&a, &b})) {
    autodiff::record(out, [=, an = a.node(), bn = b.node(), on = out.node()] {
      double* ga = grad_of(an);
      double* gb = grad_of(bn);
      for (std::size_t s = 0; s < n; ++s) {
        const double* g = on->grad.data() + s * (ca + cb) * hw;
        if (ga) axpy(1.0, g, ga + s * ca * hw, ca * hw);
        if (gb) axpy(1.0, g + ca * hw, gb + s * cb * hw, cb * hw);
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_channels", x, 4, "input");
  if (begin >= end || end > x.dim(1)) {
    shape_fail("slice_channels", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), cs = end - begin;
  Tensor out(Shape{n, cs, x.dim(2), x.dim(3)});
  double* od = out.data_mut().data();
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(x.data().data() + (s * c + begin) * hw, cs * hw, od + s * cs * hw);
  }
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [=, xn = x.node(), on = out.node()] {
      double* gx = grad_of(xn);
      for (std::size_t s = 0; s < n; ++s) {
        axpy(1.0, on->grad.data() + s * cs * hw, gx + (s * c + begin) * hw, cs * hw);
      }
    });
  }
  return out;
}

Tensor mul_channelwise(const Tensor& x, const Tensor& w) {
  const std::string op = "mul_channelwise";
  require_rank(op, x, 4, "x");
  require_rank(op, w, 4, "w");
  if (w.dim(0) != x.dim(0) || w.dim(1) != x.dim(1) || w.dim(2) != 1 || w.dim(3) != 1) {
    shape_fail(op, "weights " + shape_str(w.shape()) + " do not broadcast over " +
                       shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  double* od = out.data_mut().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double wv = w.data()[p];
    for (std::size_t i = 0; i < hw; ++i) od[p * hw + i] = x.data()[p * hw + i] * wv;
  }
  if (autodiff::should_record({&x, &w})) {
    autodiff::record(out, [=, xn = x.node(), wn = w.node(), on = out.node()] {
      double* gx = grad_of(xn);
      double* gw = grad_of(wn);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* g = on->grad.data() + p * hw;
        if (gx) axpy(wn->data[p], g, gx + p * hw, hw);
        if (gw) gw[p] += dot(g, xn->data.data() + p * hw, hw);
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (!x.defined()) shape_fail("reshape", "undefined operand");
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [xn = x.node(), on = out.node()] {
      axpy(1.0, on->grad.data(), grad_of(xn), on->grad.size());
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  if (!x.defined()) shape_fail("sum", "undefined operand");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (autodiff::should_record({&x})) {
    autodiff::record(out, [xn = x.node(), on = out.node()] {
      double* gx = grad_of(xn);
      for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += on->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (!x.defined() || x.numel() == 0) shape_fail("mean", "empty operand");
  return scale_by(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace siamapn
