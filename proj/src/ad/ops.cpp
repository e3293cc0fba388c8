#include "dejavu/ad/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::ad {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(fmt::format("{}: {} must have rank {}, got {}", op, what, rank,
                                 shape_string(t.shape())));
  }
}

Tape& tape_of(Var a) { return *a.tape; }

// Elementwise unary op where the local derivative depends on input and output.
template <typename F, typename D>
Var unary(Var x, F f, D df) {
  Tape& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const std::uint32_t xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(x),
                     [xi, df](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& in = t.value(xi);
                       const Tensor& out = t.value(self);
                       Tensor& gx = t.grad(xi);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(in[i], out[i]);
                     });
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor y = av;
  y += bv;
  const std::uint32_t ai = a.id, bi = b.id;
  return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                     [ai, bi](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ai)) t.grad(ai) += g;
                       if (t.requires_grad(bi)) t.grad(bi) += g;
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "sub");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                     [ai, bi](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ai)) t.grad(ai) += g;
                       if (t.requires_grad(bi)) {
                         Tensor& gb = t.grad(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                     [ai, bi](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ai)) {
                         const Tensor& bv = t.value(bi);
                         Tensor& ga = t.grad(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                       }
                       if (t.requires_grad(bi)) {
                         const Tensor& av = t.value(ai);
                         Tensor& gb = t.grad(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                       }
                     });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double s = 0.0;
  for (double v : tape.value(a).data()) s += v;
  const std::uint32_t ai = a.id;
  return tape.record(Tensor::scalar(s), tape.requires_grad(a),
                     [ai](Tape& t, std::uint32_t self) {
                       const double g = t.grad(self)[0];
                       for (double& v : t.grad(ai).data()) v += g;
                     });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var squared_error(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "squared_error");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return tape.record(Tensor::scalar(s), tape.requires_grad(a) || tape.requires_grad(b),
                     [ai, bi](Tape& t, std::uint32_t self) {
                       const double g = t.grad(self)[0];
                       const Tensor& av = t.value(ai);
                       const Tensor& bv = t.value(bi);
                       if (t.requires_grad(ai)) {
                         Tensor& ga = t.grad(ai);
                         for (std::size_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * g * (av[i] - bv[i]);
                       }
                       if (t.requires_grad(bi)) {
                         Tensor& gb = t.grad(bi);
                         for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= 2.0 * g * (av[i] - bv[i]);
                       }
                     });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_rank(av, 2, "matmul", "lhs");
  require_rank(bv, 2, "matmul", "rhs");
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError(fmt::format("matmul: {} x {}", shape_string(av.shape()),
                                 shape_string(bv.shape())));
  }
  Tensor y({n, m});
  for (std::size_t r = 0; r < n; ++r) {
    double* yr = &y[r * m];
    for (std::size_t i = 0; i < k; ++i) {
      const double x = av[r * k + i];
      const double* br = &bv[i * m];
      for (std::size_t o = 0; o < m; ++o) yr[o] += x * br[o];
    }
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return tape.record(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                     [ai, bi, n, k, m](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& av = t.value(ai);
                       const Tensor& bv = t.value(bi);
                       if (t.requires_grad(ai)) {
                         Tensor& ga = t.grad(ai);
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t i = 0; i < k; ++i) {
                             double s = 0.0;
                             for (std::size_t o = 0; o < m; ++o) s += g[r * m + o] * bv[i * m + o];
                             ga[r * k + i] += s;
                           }
                       }
                       if (t.requires_grad(bi)) {
                         Tensor& gb = t.grad(bi);
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t i = 0; i < k; ++i) {
                             const double x = av[r * k + i];
                             for (std::size_t o = 0; o < m; ++o) gb[i * m + o] += x * g[r * m + o];
                           }
                       }
                     });
}

Var dense(Var x, Var weight, Var bias) {
  Tape& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  const Tensor& bv = tape.value(bias);
  require_rank(wv, 2, "dense", "weight");
  require_rank(bv, 1, "dense", "bias");
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw ShapeError(fmt::format("dense: input must be rank 1 or 2, got {}",
                                 shape_string(xv.shape())));
  }
  const std::size_t in = wv.dim(0), out = wv.dim(1);
  const std::size_t n = xv.rank() == 1 ? 1 : xv.dim(0);
  const std::size_t xin = xv.rank() == 1 ? xv.dim(0) : xv.dim(1);
  if (xin != in || bv.dim(0) != out) {
    throw ShapeError(fmt::format("dense: input {} weight {} bias {}", shape_string(xv.shape()),
                                 shape_string(wv.shape()), shape_string(bv.shape())));
  }
  Tensor y(xv.rank() == 1 ? Shape{out} : Shape{n, out});
  for (std::size_t r = 0; r < n; ++r) {
    double* yr = &y[r * out];
    for (std::size_t o = 0; o < out; ++o) yr[o] = bv[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xval = xv[r * in + i];
      const double* wr = &wv[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xval * wr[o];
    }
  }
  const std::uint32_t xi = x.id, wi = weight.id, bi = bias.id;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(std::move(y), rg, [xi, wi, bi, n, in, out](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    const Tensor& wv = t.value(wi);
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad(xi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
          double s = 0.0;
          for (std::size_t o = 0; o < out; ++o) s += g[r * out + o] * wv[i * out + o];
          gx[r * in + i] += s;
        }
    }
    if (t.requires_grad(wi)) {
      Tensor& gw = t.grad(wi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
          const double xval = xv[r * in + i];
          for (std::size_t o = 0; o < out; ++o) gw[i * out + o] += xval * g[r * out + o];
        }
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
    }
  });
}

Var conv1d(Var x, Var kernels, Var bias) {
  Tape& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  const Tensor& kv = tape.value(kernels);
  const Tensor& bv = tape.value(bias);
  require_rank(xv, 2, "conv1d", "input");
  require_rank(kv, 3, "conv1d", "kernels");
  require_rank(bv, 1, "conv1d", "bias");
  const std::size_t w = xv.dim(0), ci = xv.dim(1);
  const std::size_t k = kv.dim(0), co = kv.dim(2);
  if (kv.dim(1) != ci || bv.dim(0) != co) {
    throw ShapeError(fmt::format("conv1d: input {} kernels {} bias {}", shape_string(xv.shape()),
                                 shape_string(kv.shape()), shape_string(bv.shape())));
  }
  if (k == 0 || k > w) {
    throw ShapeError(fmt::format("conv1d: kernel width {} exceeds input length {}", k, w));
  }
  const std::size_t len = w - k + 1;
  Tensor y({len, co});
  for (std::size_t tt = 0; tt < len; ++tt) {
    double* yr = &y[tt * co];
    for (std::size_t o = 0; o < co; ++o) yr[o] = bv[o];
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < ci; ++i) {
        const double xval = xv[(tt + j) * ci + i];
        const double* kr = &kv[(j * ci + i) * co];
        for (std::size_t o = 0; o < co; ++o) yr[o] += xval * kr[o];
      }
  }
  const std::uint32_t xi = x.id, ki = kernels.id, bi = bias.id;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(kernels) || tape.requires_grad(bias);
  return tape.record(std::move(y), rg, [xi, ki, bi, len, k, ci, co](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    const Tensor& kv = t.value(ki);
    const bool gx_on = t.requires_grad(xi), gk_on = t.requires_grad(ki);
    Tensor* gx = gx_on ? &t.grad(xi) : nullptr;
    Tensor* gk = gk_on ? &t.grad(ki) : nullptr;
    for (std::size_t tt = 0; tt < len; ++tt) {
      const double* gr = &g[tt * co];
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < ci; ++i) {
          const std::size_t xo = (tt + j) * ci + i;
          const std::size_t ko = (j * ci + i) * co;
          if (gx_on) {
            double s = 0.0;
            for (std::size_t o = 0; o < co; ++o) s += gr[o] * kv[ko + o];
            (*gx)[xo] += s;
          }
          if (gk_on) {
            const double xval = xv[xo];
            for (std::size_t o = 0; o < co; ++o) (*gk)[ko + o] += xval * gr[o];
          }
        }
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t tt = 0; tt < len; ++tt)
        for (std::size_t o = 0; o < co; ++o) gb[o] += g[tt * co + o];
    }
  });
}

Var conv1d_transpose(Var x, Var kernels, Var bias) {
  Tape& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  const Tensor& kv = tape.value(kernels);
  const Tensor& bv = tape.value(bias);
  require_rank(xv, 2, "conv1d_transpose", "input");
  require_rank(kv, 3, "conv1d_transpose", "kernels");
  require_rank(bv, 1, "conv1d_transpose", "bias");
  const std::size_t len = xv.dim(0), ci = xv.dim(1);
  const std::size_t k = kv.dim(0), co = kv.dim(1);
  if (kv.dim(2) != ci || bv.dim(0) != co || k == 0) {
    throw ShapeError(fmt::format("conv1d_transpose: input {} kernels {} bias {}",
                                 shape_string(xv.shape()), shape_string(kv.shape()),
                                 shape_string(bv.shape())));
  }
  const std::size_t w = len + k - 1;
  Tensor y({w, co});
  for (std::size_t r = 0; r < w; ++r)
    for (std::size_t a = 0; a < co; ++a) y[r * co + a] = bv[a];
  for (std::size_t tt = 0; tt < len; ++tt)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t a = 0; a < co; ++a) {
        const double* kr = &kv[(j * co + a) * ci];
        const double* xr = &xv[tt * ci];
        double s = 0.0;
        for (std::size_t c = 0; c < ci; ++c) s += xr[c] * kr[c];
        y[(tt + j) * co + a] += s;
      }
  const std::uint32_t xi = x.id, ki = kernels.id, bi = bias.id;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(kernels) || tape.requires_grad(bias);
  return tape.record(std::move(y), rg, [xi, ki, bi, len, k, ci, co, w](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    const Tensor& kv = t.value(ki);
    const bool gx_on = t.requires_grad(xi), gk_on = t.requires_grad(ki);
    Tensor* gx = gx_on ? &t.grad(xi) : nullptr;
    Tensor* gk = gk_on ? &t.grad(ki) : nullptr;
    for (std::size_t tt = 0; tt < len; ++tt)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t a = 0; a < co; ++a) {
          const double gv = g[(tt + j) * co + a];
          const std::size_t ko = (j * co + a) * ci;
          if (gx_on)
            for (std::size_t c = 0; c < ci; ++c) (*gx)[tt * ci + c] += gv * kv[ko + c];
          if (gk_on)
            for (std::size_t c = 0; c < ci; ++c) (*gk)[ko + c] += gv * xv[tt * ci + c];
        }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t r = 0; r < w; ++r)
        for (std::size_t a = 0; a < co; ++a) gb[a] += g[r * co + a];
    }
  });
}

namespace {

struct GruCache {
  std::size_t steps = 0, in = 0, hidden = 0;
  // Per step: reset, update, candidate gates and the hidden projection h·Un.
  std::vector<double> r, z, n, hn;
};

}  // namespace

Var gru_sequence(Var x, const GruWeights& weights) {
  Tape& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  const Tensor& wi = tape.value(weights.input_weight);
  const Tensor& wh = tape.value(weights.hidden_weight);
  const Tensor& bv = tape.value(weights.bias);
  require_rank(xv, 2, "gru_sequence", "input");
  require_rank(wi, 2, "gru_sequence", "input_weight");
  require_rank(wh, 2, "gru_sequence", "hidden_weight");
  require_rank(bv, 1, "gru_sequence", "bias");
  const std::size_t steps = xv.dim(0), in = xv.dim(1), h = wh.dim(0);
  const std::size_t g3 = 3 * h;
  if (wi.dim(0) != in || wi.dim(1) != g3 || wh.dim(1) != g3 || bv.dim(0) != g3) {
    throw ShapeError(fmt::format("gru_sequence: input {} input_weight {} hidden_weight {} bias {}",
                                 shape_string(xv.shape()), shape_string(wi.shape()),
                                 shape_string(wh.shape()), shape_string(bv.shape())));
  }
  auto cache = std::make_shared<GruCache>();
  cache->steps = steps;
  cache->in = in;
  cache->hidden = h;
  cache->r.resize(steps * h);
  cache->z.resize(steps * h);
  cache->n.resize(steps * h);
  cache->hn.resize(steps * h);

  Tensor out({steps, h});
  std::vector<double> a(g3), gh(g3), prev(h, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t q = 0; q < g3; ++q) a[q] = bv[q];
    for (std::size_t i = 0; i < in; ++i) {
      const double xval = xv[s * in + i];
      const double* wr = &wi[i * g3];
      for (std::size_t q = 0; q < g3; ++q) a[q] += xval * wr[q];
    }
    std::fill(gh.begin(), gh.end(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const double hv = prev[i];
      const double* wr = &wh[i * g3];
      for (std::size_t q = 0; q < g3; ++q) gh[q] += hv * wr[q];
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double r = sigmoid_value(a[j] + gh[j]);
      const double z = sigmoid_value(a[h + j] + gh[h + j]);
      const double n = std::tanh(a[2 * h + j] + r * gh[2 * h + j]);
      const double next = (1.0 - z) * n + z * prev[j];
      cache->r[s * h + j] = r;
      cache->z[s * h + j] = z;
      cache->n[s * h + j] = n;
      cache->hn[s * h + j] = gh[2 * h + j];
      out[s * h + j] = next;
    }
    for (std::size_t j = 0; j < h; ++j) prev[j] = out[s * h + j];
  }

  const std::uint32_t xi = x.id, wii = weights.input_weight.id, whi = weights.hidden_weight.id,
                      bi = weights.bias.id;
  const bool rg = tape.requires_grad(x) || tape.requires_grad(weights.input_weight) ||
                  tape.requires_grad(weights.hidden_weight) || tape.requires_grad(weights.bias);
  return tape.record(std::move(out), rg, [xi, wii, whi, bi, cache](Tape& t, std::uint32_t self) {
    const std::size_t steps = cache->steps, in = cache->in, h = cache->hidden, g3 = 3 * h;
    const Tensor& g = t.grad(self);
    const Tensor& states = t.value(self);
    const Tensor& xv = t.value(xi);
    const Tensor& wi = t.value(wii);
    const Tensor& wh = t.value(whi);
    const bool gx_on = t.requires_grad(xi), gwi_on = t.requires_grad(wii),
               gwh_on = t.requires_grad(whi), gb_on = t.requires_grad(bi);
    Tensor* gx = gx_on ? &t.grad(xi) : nullptr;
    Tensor* gwi = gwi_on ? &t.grad(wii) : nullptr;
    Tensor* gwh = gwh_on ? &t.grad(whi) : nullptr;
    Tensor* gb = gb_on ? &t.grad(bi) : nullptr;

    std::vector<double> dh(h, 0.0), da(g3), dg(g3), dprev(h);
    for (std::size_t s = steps; s-- > 0;) {
      for (std::size_t j = 0; j < h; ++j) dh[j] += g[s * h + j];
      for (std::size_t j = 0; j < h; ++j) {
        const double r = cache->r[s * h + j];
        const double z = cache->z[s * h + j];
        const double n = cache->n[s * h + j];
        const double hn = cache->hn[s * h + j];
        const double hp = s == 0 ? 0.0 : states[(s - 1) * h + j];
        const double dn = dh[j] * (1.0 - z);
        const double dz = dh[j] * (hp - n);
        const double dan = dn * (1.0 - n * n);
        const double dr = dan * hn;
        const double dar = dr * r * (1.0 - r);
        const double daz = dz * z * (1.0 - z);
        da[j] = dar;
        da[h + j] = daz;
        da[2 * h + j] = dan;
        dg[j] = dar;
        dg[h + j] = daz;
        dg[2 * h + j] = dan * r;
        dprev[j] = dh[j] * z;
      }
      if (gb_on)
        for (std::size_t q = 0; q < g3; ++q) (*gb)[q] += da[q];
      for (std::size_t i = 0; i < in; ++i) {
        const double xval = xv[s * in + i];
        const double* wr = &wi[i * g3];
        if (gwi_on) {
          double* gr = &(*gwi)[i * g3];
          for (std::size_t q = 0; q < g3; ++q) gr[q] += xval * da[q];
        }
        if (gx_on) {
          double acc = 0.0;
          for (std::size_t q = 0; q < g3; ++q) acc += da[q] * wr[q];
          (*gx)[s * in + i] += acc;
        }
      }
      for (std::size_t i = 0; i < h; ++i) {
        const double hp = s == 0 ? 0.0 : states[(s - 1) * h + i];
        const double* wr = &wh[i * g3];
        if (gwh_on && s > 0) {
          double* gr = &(*gwh)[i * g3];
          for (std::size_t q = 0; q < g3; ++q) gr[q] += hp * dg[q];
        }
        double acc = 0.0;
        for (std::size_t q = 0; q < g3; ++q) acc += dg[q] * wr[q];
        dprev[i] += acc;
      }
      dh.swap(dprev);
    }
  });
}

Var gelu(Var x) {
  return unary(x, gelu_value, [](double in, double) { return gelu_derivative(in); });
}

Var sigmoid(Var x) {
  return unary(x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var leaky_rectifier(Var x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double in, double) { return in > 0 ? 1.0 : slope; });
}

Var log(Var x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Var softmax(Var x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  if (xv.rank() == 0) throw ShapeError("softmax of a scalar");
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.size() / cols;
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * cols];
    double* out = &y[r * cols];
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
  const std::uint32_t xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(x),
                     [xi, rows, cols](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& y = t.value(self);
                       Tensor& gx = t.grad(xi);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double inner = 0.0;
                         for (std::size_t c = 0; c < cols; ++c)
                           inner += g[r * cols + c] * y[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c)
                           gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - inner);
                       }
                     });
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_columns of nothing");
  Tape& tape = tape_of(parts[0]);
  const std::size_t rows = tape.value(parts[0]).dim(0);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& v = tape.value(p);
    require_rank(v, 2, "concat_columns", "part");
    if (v.dim(0) != rows) throw ShapeError("concat_columns: row counts differ");
    ids.push_back(p.id);
    widths.push_back(v.dim(1));
    total += v.dim(1);
    rg = rg || tape.requires_grad(p);
  }
  Tensor y({rows, total});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const Tensor& v = tape.value(ids[p]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[p]; ++c) y[r * total + offset + c] = v[r * widths[p] + c];
    offset += widths[p];
  }
  return tape.record(std::move(y), rg,
                     [ids, widths, rows, total](Tape& t, std::uint32_t self) {
                       const Tensor& g = t.grad(self);
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < ids.size(); ++p) {
                         if (t.requires_grad(ids[p])) {
                           Tensor& gp = t.grad(ids[p]);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[p]; ++c)
                               gp[r * widths[p] + c] += g[r * total + offset + c];
                         }
                         offset += widths[p];
                       }
                     });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows of nothing");
  Tape& tape = tape_of(rows[0]);
  const std::size_t len = tape.value(rows[0]).size();
  std::vector<std::uint32_t> ids;
  bool rg = false;
  Tensor y({rows.size(), len});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = tape.value(rows[r]);
    if (v.size() != len) throw ShapeError("stack_rows: row lengths differ");
    std::copy(v.data().begin(), v.data().end(), y.data().begin() + r * len);
    ids.push_back(rows[r].id);
    rg = rg || tape.requires_grad(rows[r]);
  }
  return tape.record(std::move(y), rg, [ids, len](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!t.requires_grad(ids[r])) continue;
      Tensor& gr = t.grad(ids[r]);
      for (std::size_t c = 0; c < len; ++c) gr[c] += g[r * len + c];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of(x);
  Tensor y = tape.value(x).reshaped(std::move(shape));
  const std::uint32_t xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(x), [xi](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace dejavu::ad
