#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "tcb/autograd.hpp"
#include "tcb/error.hpp"

namespace tcb::ops {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RMat>;
using CMapR = Eigen::Map<const RMat>;

Graph& graph_of(Var a) {
  if (!a.graph) throw ConfigError("unbound variable");
  return *a.graph;
}

/// Gradient buffer of an input, or nullptr when it needs no gradient.
Tensor* gbuf(Graph& g, Var v) { return g.requires_grad(v) ? &g.grad_buffer(v) : nullptr; }

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw ConfigError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor y = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return g.record(std::move(y), {a}, [a, df](Graph& g, const Tensor& out, const Tensor& go) {
    Tensor* ga = gbuf(g, a);
    if (!ga) return;
    const Tensor& x = g.value(a);
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += go[i] * df(x[i], out[i]);
  });
}

// cols[(c*k + ki)*k + kj][oy*wo + ox] = img[c][oy*s + ki][ox*s + kj]
void im2col(const double* img, int channels, int h, int w, int k, int s, int ho, int wo, double* cols) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * p;
        const double* plane = img + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const double* src = plane + static_cast<std::size_t>(oy * s + ki) * w + kj;
          double* dst = row + static_cast<std::size_t>(oy) * wo;
          if (s == 1) {
            std::copy(src, src + wo, dst);
          } else {
            for (int ox = 0; ox < wo; ++ox) dst[ox] = src[ox * s];
          }
        }
      }
}

void col2im(const double* cols, int channels, int h, int w, int k, int s, int ho, int wo, double* img) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * p;
        double* plane = img + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          double* dst = plane + static_cast<std::size_t>(oy * s + ki) * w + kj;
          const double* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) dst[ox * s] += src[ox];
        }
      }
}

int pad_source(int i, int n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case PadMode::zero:
      return -1;
    case PadMode::replicate:
      return std::clamp(i, 0, n - 1);
    case PadMode::reflect:
      if (n == 1) return 0;
      while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
      return i;
  }
  return -1;
}

void check_bias(const Tensor& b, int channels) {
  if (b.size() != static_cast<std::size_t>(channels)) throw ConfigError("bias size does not match output channels");
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same(a.value(), b.value(), "add");
  Tensor y = a.value();
  y += b.value();
  return g.record(std::move(y), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    g.add_grad(a, go);
    g.add_grad(b, go);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    g.add_grad(a, go);
    if (Tensor* gb = gbuf(g, b))
      for (std::size_t i = 0; i < go.size(); ++i) (*gb)[i] -= go[i];
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var lincomb(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw ConfigError("lincomb of nothing");
  Graph& g = graph_of(terms.front().second);
  double total = 0.0;
  std::vector<Var> inputs;
  for (const auto& [coef, v] : terms) {
    if (v.value().size() != 1) throw ConfigError("lincomb needs scalar terms");
    total += coef * v.item();
    inputs.push_back(v);
  }
  return g.record(Tensor::scalar(total), inputs, [terms](Graph& g, const Tensor&, const Tensor& go) {
    for (const auto& [coef, v] : terms) g.add_grad(v, Tensor::scalar(coef * go[0]));
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  return g.record(Tensor::scalar(a.value().sum()), {a}, [a](Graph& g, const Tensor&, const Tensor& go) {
    if (Tensor* ga = gbuf(g, a))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += go[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ConfigError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); }, [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var pad(Var x, int top, int bottom, int left, int right, PadMode mode) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ConfigError("negative padding");
  if (mode == PadMode::reflect && (std::max(top, bottom) >= std::max(v.h(), 2) || std::max(left, right) >= std::max(v.w(), 2)))
    throw ConfigError("reflect padding wider than the input");
  const int h = v.h(), w = v.w();
  Tensor y(v.n(), v.c(), h + top + bottom, w + left + right);
  std::vector<int> rows(y.h()), cols(y.w());
  for (int i = 0; i < y.h(); ++i) rows[i] = pad_source(i - top, h, mode);
  for (int j = 0; j < y.w(); ++j) cols[j] = pad_source(j - left, w, mode);
  for (int n = 0; n < v.n(); ++n)
    for (int c = 0; c < v.c(); ++c)
      for (int i = 0; i < y.h(); ++i)
        for (int j = 0; j < y.w(); ++j)
          if (rows[i] >= 0 && cols[j] >= 0) y.at(n, c, i, j) = v.at(n, c, rows[i], cols[j]);
  return g.record(std::move(y), {x}, [x, rows, cols](Graph& g, const Tensor& out, const Tensor& go) {
    Tensor* gx = gbuf(g, x);
    if (!gx) return;
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c)
        for (int i = 0; i < out.h(); ++i)
          for (int j = 0; j < out.w(); ++j)
            if (rows[i] >= 0 && cols[j] >= 0) gx->at(n, c, rows[i], cols[j]) += go.at(n, c, i, j);
  });
}

Var crop(Var x, int top, int left, int height, int width) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > v.h() || left + width > v.w())
    throw ConfigError("crop outside the input");
  Tensor y(v.n(), v.c(), height, width);
  for (int n = 0; n < v.n(); ++n)
    for (int c = 0; c < v.c(); ++c)
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) y.at(n, c, i, j) = v.at(n, c, top + i, left + j);
  return g.record(std::move(y), {x}, [x, top, left](Graph& g, const Tensor& out, const Tensor& go) {
    Tensor* gx = gbuf(g, x);
    if (!gx) return;
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c)
        for (int i = 0; i < out.h(); ++i)
          for (int j = 0; j < out.w(); ++j) gx->at(n, c, top + i, left + j) += go.at(n, c, i, j);
  });
}

Var concat_channels(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w()) throw ConfigError("concat: shape mismatch");
  const std::size_t ea = static_cast<std::size_t>(av.c()) * av.h() * av.w();
  const std::size_t eb = static_cast<std::size_t>(bv.c()) * bv.h() * bv.w();
  Tensor y(av.n(), av.c() + bv.c(), av.h(), av.w());
  for (int n = 0; n < av.n(); ++n) {
    std::copy(av.image(n), av.image(n) + ea, y.image(n));
    std::copy(bv.image(n), bv.image(n) + eb, y.image(n) + ea);
  }
  return g.record(std::move(y), {a, b}, [a, b, ea, eb](Graph& g, const Tensor& out, const Tensor& go) {
    Tensor* ga = gbuf(g, a);
    Tensor* gb = gbuf(g, b);
    for (int n = 0; n < out.n(); ++n) {
      const double* src = go.image(n);
      if (ga)
        for (std::size_t i = 0; i < ea; ++i) ga->image(n)[i] += src[i];
      if (gb)
        for (std::size_t i = 0; i < eb; ++i) gb->image(n)[i] += src[ea + i];
    }
  });
}

Var slice_channels(Var x, int begin, int end) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  if (begin < 0 || end > v.c() || begin >= end) throw ConfigError("slice_channels: bad range");
  const std::size_t plane = static_cast<std::size_t>(v.h()) * v.w();
  Tensor y(v.n(), end - begin, v.h(), v.w());
  for (int n = 0; n < v.n(); ++n)
    std::copy(v.image(n) + begin * plane, v.image(n) + end * plane, y.image(n));
  return g.record(std::move(y), {x}, [x, begin, plane](Graph& g, const Tensor& out, const Tensor& go) {
    Tensor* gx = gbuf(g, x);
    if (!gx) return;
    const std::size_t len = static_cast<std::size_t>(out.c()) * plane;
    for (int n = 0; n < out.n(); ++n) {
      double* dst = gx->image(n) + begin * plane;
      const double* src = go.image(n);
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

Var avgpool2(Var x) {
  Graph& g = graph_of(x);
  const Tensor& v = x.value();
  if (v.h() % 2 || v.w() % 2) throw ConfigError("avgpool2 needs even spatial dims");
  Tensor y(v.n(), v.c(), v.h() / 2, v.w() / 2);
  for (int n = 0; n < v.n(); ++n)
    for (int c = 0; c < v.c(); ++c)
      for (int i = 0; i < y.h(); ++i)
        for (int j = 0; j < y.w(); ++j)
          y.at(n, c, i, j) = 0.25 * (v.at(n, c, 2 * i, 2 * j) + v.at(n, c, 2 * i, 2 * j + 1) +
                                     v.at(n, c, 2 * i + 1, 2 * j) + v.at(n, c, 2 * i + 1, 2 * j + 1));
  return g.record(std::move(y), {x}, [x](Graph& g, const Tensor& out, const Tensor& go) {
    Tensor* gx = gbuf(g, x);
    if (!gx) return;
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c)
        for (int i = 0; i < out.h(); ++i)
          for (int j = 0; j < out.w(); ++j) {
            const double d = 0.25 * go.at(n, c, i, j);
            gx->at(n, c, 2 * i, 2 * j) += d;
            gx->at(n, c, 2 * i, 2 * j + 1) += d;
            gx->at(n, c, 2 * i + 1, 2 * j) += d;
            gx->at(n, c, 2 * i + 1, 2 * j + 1) += d;
          }
  });
}

Var conv2d(Var x, Var w, Var b, int stride) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const int k = wv.h();
  if (wv.w() != k || wv.c() != xv.c()) throw ConfigError("conv2d: weight " + wv.shape_string() + " vs input " + xv.shape_string());
  if (stride < 1 || xv.h() < k || xv.w() < k) throw ConfigError("conv2d: input smaller than kernel");
  check_bias(b.value(), wv.n());
  const int cout = wv.n(), cin = xv.c();
  const int ho = (xv.h() - k) / stride + 1, wo = (xv.w() - k) / stride + 1;
  const int kk = cin * k * k;
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xv.n()) * kk * p);
  Tensor y(xv.n(), cout, ho, wo);
  CMapR wm(wv.data(), cout, kk);
  const Tensor& bv = b.value();
  for (int n = 0; n < xv.n(); ++n) {
    double* cn = cols->data() + static_cast<std::size_t>(n) * kk * p;
    im2col(xv.image(n), cin, xv.h(), xv.w(), k, stride, ho, wo, cn);
    MapR ym(y.image(n), cout, static_cast<Eigen::Index>(p));
    ym.noalias() = wm * CMapR(cn, kk, static_cast<Eigen::Index>(p));
    for (int c = 0; c < cout; ++c) ym.row(c).array() += bv[c];
  }
  return g.record(std::move(y), {x, w, b}, [x, w, b, cols, k, stride, ho, wo, kk, p](Graph& g, const Tensor&, const Tensor& go) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    const int cout = wv.n();
    Tensor* gx = gbuf(g, x);
    Tensor* gw = gbuf(g, w);
    Tensor* gb = gbuf(g, b);
    std::vector<double> dcols(gx ? static_cast<std::size_t>(kk) * p : 0);
    for (int n = 0; n < xv.n(); ++n) {
      CMapR gy(go.image(n), cout, static_cast<Eigen::Index>(p));
      const double* cn = cols->data() + static_cast<std::size_t>(n) * kk * p;
      if (gw) MapR(gw->data(), cout, kk).noalias() += gy * CMapR(cn, kk, static_cast<Eigen::Index>(p)).transpose();
      if (gb)
        for (int c = 0; c < cout; ++c) {
          const double* row = go.image(n) + static_cast<std::size_t>(c) * p;
          double acc = 0.0;
          for (std::size_t i = 0; i < p; ++i) acc += row[i];
          (*gb)[c] += acc;
        }
      if (gx) {
        MapR dc(dcols.data(), kk, static_cast<Eigen::Index>(p));
        dc.noalias() = CMapR(wv.data(), cout, kk).transpose() * gy;
        col2im(dcols.data(), xv.c(), xv.h(), xv.w(), k, stride, ho, wo, gx->image(n));
      }
    }
  });
}

Var conv_transpose2d(Var x, Var w, Var b, int stride, int padding, int output_padding) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const int k = wv.h();
  if (wv.w() != k || wv.n() != xv.c()) throw ConfigError("conv_transpose2d: weight " + wv.shape_string() + " vs input " + xv.shape_string());
  if (stride < 1 || padding < 0 || output_padding < 0 || output_padding >= stride)
    throw ConfigError("conv_transpose2d: bad stride/padding");
  const int cin = xv.c(), cout = wv.c();
  check_bias(b.value(), cout);
  const int hf = (xv.h() - 1) * stride + k + output_padding;
  const int wf = (xv.w() - 1) * stride + k + output_padding;
  const int ho = hf - 2 * padding, wo = wf - 2 * padding;
  if (ho <= 0 || wo <= 0) throw ConfigError("conv_transpose2d: empty output");
  const int kk = cout * k * k;
  const std::size_t p = static_cast<std::size_t>(xv.h()) * xv.w();
  Tensor y(xv.n(), cout, ho, wo);
  std::vector<double> cols(static_cast<std::size_t>(kk) * p);
  std::vector<double> canvas(static_cast<std::size_t>(cout) * hf * wf);
  CMapR wm(wv.data(), cin, kk);
  const Tensor& bv = b.value();
  for (int n = 0; n < xv.n(); ++n) {
    MapR(cols.data(), kk, static_cast<Eigen::Index>(p)).noalias() = wm.transpose() * CMapR(xv.image(n), cin, static_cast<Eigen::Index>(p));
    std::fill(canvas.begin(), canvas.end(), 0.0);
    col2im(cols.data(), cout, hf, wf, k, stride, xv.h(), xv.w(), canvas.data());
    for (int c = 0; c < cout; ++c)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j)
          y.at(n, c, i, j) = canvas[(static_cast<std::size_t>(c) * hf + i + padding) * wf + j + padding] + bv[c];
  }
  return g.record(std::move(y), {x, w, b}, [x, w, b, k, stride, padding, hf, wf, kk, p](Graph& g, const Tensor& out, const Tensor& go) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    const int cin = xv.c(), cout = out.c();
    Tensor* gx = gbuf(g, x);
    Tensor* gw = gbuf(g, w);
    Tensor* gb = gbuf(g, b);
    std::vector<double> canvas(static_cast<std::size_t>(cout) * hf * wf);
    std::vector<double> dcols(static_cast<std::size_t>(kk) * p);
    for (int n = 0; n < out.n(); ++n) {
      if (gb)
        for (int c = 0; c < cout; ++c)
          for (int i = 0; i < out.h(); ++i)
            for (int j = 0; j < out.w(); ++j) (*gb)[c] += go.at(n, c, i, j);
      if (!gx && !gw) continue;
      std::fill(canvas.begin(), canvas.end(), 0.0);
      for (int c = 0; c < cout; ++c)
        for (int i = 0; i < out.h(); ++i)
          for (int j = 0; j < out.w(); ++j)
            canvas[(static_cast<std::size_t>(c) * hf + i + padding) * wf + j + padding] = go.at(n, c, i, j);
      im2col(canvas.data(), cout, hf, wf, k, stride, xv.h(), xv.w(), dcols.data());
      CMapR dc(dcols.data(), kk, static_cast<Eigen::Index>(p));
      if (gx) MapR(gx->image(n), cin, static_cast<Eigen::Index>(p)).noalias() += CMapR(wv.data(), cin, kk) * dc;
      if (gw) MapR(gw->data(), cin, kk).noalias() += CMapR(xv.image(n), cin, static_cast<Eigen::Index>(p)) * dc.transpose();
    }
  });
}

Var mse_loss(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same(av, bv, "mse_loss");
  if (av.size() == 0) throw ConfigError("mse_loss of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  return g.record(Tensor::scalar(acc / n), {a, b}, [a, b, n](Graph& g, const Tensor&, const Tensor& go) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    Tensor* ga = gbuf(g, a);
    Tensor* gb = gbuf(g, b);
    const double s = 2.0 * go[0] / n;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = s * (av[i] - bv[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  Graph& g = graph_of(logits);
  const Tensor& x = logits.value();
  require_same(x, targets, "bce_with_logits");
  if (x.size() == 0) throw ConfigError("bce of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += std::max(x[i], 0.0) - x[i] * targets[i] + std::log1p(std::exp(-std::abs(x[i])));
  const double n = static_cast<double>(x.size());
  return g.record(Tensor::scalar(acc / n), {logits}, [logits, targets, n](Graph& g, const Tensor&, const Tensor& go) {
    Tensor* gl = gbuf(g, logits);
    if (!gl) return;
    const Tensor& x = g.value(logits);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      (*gl)[i] += go[0] * (p - targets[i]) / n;
    }
  });
}

}  // namespace tcb::ops
