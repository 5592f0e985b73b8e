#include "gdse/numerics/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gdse {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("op on empty Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || !a.valid())
    throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

// Elementwise unary op given f(x) and f'(x) expressed through (x, y).
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Tape& t = tape_of(a);
  const auto x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.push(std::move(y), a.rows(), a.cols(), a.requires_grad(),
                [ia, df](Tape& tp, std::size_t self) {
                  const auto& n = tp.node(self);
                  const auto& xv = tp.node(ia).value;
                  auto& ga = tp.grad_of(ia);
                  for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += n.grad[i] * df(xv[i], n.value[i]);
                });
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return stable_softplus(x); }

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  const auto av = a.value(), bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return t.push(std::move(y), a.rows(), a.cols(), ra || rb,
                [ia, ib, ra, rb](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  if (ra) {
                    auto& ga = tp.grad_of(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (rb) {
                    auto& gb = tp.grad_of(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                  }
                });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  const auto av = a.value(), bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return t.push(std::move(y), a.rows(), a.cols(), ra || rb,
                [ia, ib, ra, rb](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  if (ra) {
                    auto& ga = tp.grad_of(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (rb) {
                    auto& gb = tp.grad_of(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                  }
                });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  const auto av = a.value(), bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return t.push(std::move(y), a.rows(), a.cols(), ra || rb,
                [ia, ib, ra, rb](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  const auto& x1 = tp.node(ia).value;
                  const auto& x2 = tp.node(ib).value;
                  if (ra) {
                    auto& ga = tp.grad_of(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * x2[i];
                  }
                  if (rb) {
                    auto& gb = tp.grad_of(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x1[i];
                  }
                });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "div");
  const auto av = a.value(), bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return t.push(std::move(y), a.rows(), a.cols(), ra || rb,
                [ia, ib, ra, rb](Tape& tp, std::size_t self) {
                  const auto& n = tp.node(self);
                  const auto& den = tp.node(ib).value;
                  if (ra) {
                    auto& ga = tp.grad_of(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] / den[i];
                  }
                  if (rb) {
                    auto& gb = tp.grad_of(ib);
                    for (std::size_t i = 0; i < gb.size(); ++i)
                      gb[i] -= n.grad[i] * n.value[i] / den[i];
                  }
                });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (bias.size() != rows)
    throw std::invalid_argument("add_channel_bias: bias has " + std::to_string(bias.size()) +
                                " entries for " + std::to_string(rows) + " channels");
  const auto xv = x.value(), bv = bias.value();
  std::vector<double> y(xv.begin(), xv.end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < cols; ++i) y[r * cols + i] += bv[r];
  const std::size_t ix = x.id(), ib = bias.id();
  const bool rx = x.requires_grad(), rb = bias.requires_grad();
  return t.push(std::move(y), rows, cols, rx || rb,
                [ix, ib, rx, rb, rows, cols](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  if (rx) {
                    auto& gx = tp.grad_of(ix);
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  }
                  if (rb) {
                    auto& gb = tp.grad_of(ib);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double acc = 0.0;
                      for (std::size_t i = 0; i < cols; ++i) acc += g[r * cols + i];
                      gb[r] += acc;
                    }
                  }
                });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return stable_softplus(x); },
               [](double x, double) { return sigmoid(x); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  const std::size_t ia = a.id();
  return t.push({acc}, 1, 1, a.requires_grad(), [ia](Tape& tp, std::size_t self) {
    const double g = tp.node(self).grad[0];
    for (auto& v : tp.grad_of(ia)) v += g;
  });
}

Var slice_rows(Var a, std::size_t first, std::size_t last) {
  Tape& t = tape_of(a);
  if (first > last || last > a.rows()) throw std::invalid_argument("slice_rows: bad range");
  const std::size_t cols = a.cols();
  const auto av = a.value();
  std::vector<double> y(av.begin() + first * cols, av.begin() + last * cols);
  const std::size_t ia = a.id();
  return t.push(std::move(y), last - first, cols, a.requires_grad(),
                [ia, first, cols](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  auto& ga = tp.grad_of(ia);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[first * cols + i] += g[i];
                });
}

Var slice_cols(Var a, std::size_t first, std::size_t last) {
  Tape& t = tape_of(a);
  if (first > last || last > a.cols()) throw std::invalid_argument("slice_cols: bad range");
  const std::size_t rows = a.rows(), cols = a.cols(), width = last - first;
  const auto av = a.value();
  std::vector<double> y(rows * width);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < width; ++i) y[r * width + i] = av[r * cols + first + i];
  const std::size_t ia = a.id();
  return t.push(std::move(y), rows, width, a.requires_grad(),
                [ia, first, rows, cols, width](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  auto& ga = tp.grad_of(ia);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < width; ++i)
                      ga[r * cols + first + i] += g[r * width + i];
                });
}

Var shift_right(Var x, std::size_t n) {
  Tape& t = tape_of(x);
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.value();
  std::vector<double> y(xv.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = n; i < cols; ++i) y[r * cols + i] = xv[r * cols + i - n];
  const std::size_t ix = x.id();
  return t.push(std::move(y), rows, cols, x.requires_grad(),
                [ix, n, rows, cols](Tape& tp, std::size_t self) {
                  const auto& g = tp.node(self).grad;
                  auto& gx = tp.grad_of(ix);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = n; i < cols; ++i) gx[r * cols + i - n] += g[r * cols + i];
                });
}

Var gated_activation(Var h, Var g) {
  require_same_shape(h, g, "gated_activation");
  return mul(tanh(h), sigmoid(g));
}

std::vector<double> gated_activation(std::span<const double> h, std::span<const double> g) {
  if (h.size() != g.size()) throw std::invalid_argument("gated_activation: length mismatch");
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = std::tanh(h[i]) * sigmoid(g[i]);
  return out;
}

namespace {

Var conv_impl(Var x, Var w, const Var* bias, const ConvGeometry& geom) {
  Tape& t = tape_of(x, w);
  if (geom.kernel == 0 || geom.dilation == 0)
    throw std::invalid_argument("conv1d: kernel and dilation must be >= 1");
  const std::size_t cin = x.rows(), n = x.cols();
  const std::size_t k = geom.kernel, d = geom.dilation, pl = geom.pad_left;
  if (w.cols() != cin * k)
    throw std::invalid_argument("conv1d: weight has " + std::to_string(w.cols()) +
                                " columns, expected " + std::to_string(cin * k));
  if (geom.span() > n + geom.pad_left + geom.pad_right)
    throw std::invalid_argument("conv1d: kernel span " + std::to_string(geom.span()) +
                                " exceeds padded input length " +
                                std::to_string(n + geom.pad_left + geom.pad_right));
  const std::size_t cout = w.rows();
  const std::size_t m = geom.output_length(n);
  if (bias != nullptr && bias->size() != cout)
    throw std::invalid_argument("conv1d: bias size mismatch");

  const auto xv = x.value(), wv = w.value();
  std::vector<double> y(cout * m, 0.0);
  // Output index i reads input index j = i + tap*d - pl; valid range of i for
  // a given tap keeps j inside [0, n).
  auto tap_range = [=](std::size_t tap, std::size_t& lo, std::size_t& hi) {
    const long long off = static_cast<long long>(tap * d) - static_cast<long long>(pl);
    long long l = std::max<long long>(0, -off);
    long long h = std::min<long long>(static_cast<long long>(m), static_cast<long long>(n) - off);
    lo = static_cast<std::size_t>(l);
    hi = static_cast<std::size_t>(std::max(l, h));
  };
  for (std::size_t o = 0; o < cout; ++o) {
    double* yo = y.data() + o * m;
    if (bias != nullptr) {
      const double b = bias->value()[o];
      for (std::size_t i = 0; i < m; ++i) yo[i] = b;
    }
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xc = xv.data() + c * n;
      for (std::size_t tap = 0; tap < k; ++tap) {
        const double wk = wv[o * cin * k + c * k + tap];
        if (wk == 0.0) continue;
        std::size_t lo, hi;
        tap_range(tap, lo, hi);
        const double* src = xc + (lo + tap * d - pl);
        for (std::size_t i = lo; i < hi; ++i) yo[i] += wk * src[i - lo];
      }
    }
  }

  const std::size_t ix = x.id(), iw = w.id();
  const bool rx = x.requires_grad(), rw = w.requires_grad();
  const bool has_bias = bias != nullptr;
  const std::size_t ib = has_bias ? bias->id() : 0;
  const bool rb = has_bias && bias->requires_grad();
  return t.push(
      std::move(y), cout, m, rx || rw || rb,
      [=](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        const auto& xs = tp.node(ix).value;
        const auto& ws = tp.node(iw).value;
        std::vector<double>* gx = rx ? &tp.grad_of(ix) : nullptr;
        std::vector<double>* gw = rw ? &tp.grad_of(iw) : nullptr;
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = g.data() + o * m;
          for (std::size_t c = 0; c < cin; ++c) {
            const double* xc = xs.data() + c * n;
            for (std::size_t tap = 0; tap < k; ++tap) {
              std::size_t lo, hi;
              tap_range(tap, lo, hi);
              const std::size_t j0 = lo + tap * d - pl;
              const std::size_t widx = o * cin * k + c * k + tap;
              if (gw != nullptr) {
                double acc = 0.0;
                for (std::size_t i = lo; i < hi; ++i) acc += go[i] * xc[j0 + i - lo];
                (*gw)[widx] += acc;
              }
              if (gx != nullptr) {
                const double wk = ws[widx];
                double* dst = gx->data() + c * n + j0;
                for (std::size_t i = lo; i < hi; ++i) dst[i - lo] += wk * go[i];
              }
            }
          }
        }
        if (rb) {
          auto& gb = tp.grad_of(ib);
          for (std::size_t o = 0; o < cout; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += g[o * m + i];
            gb[o] += acc;
          }
        }
      });
}

}  // namespace

Var conv1d(Var x, Var w, const ConvGeometry& geom) { return conv_impl(x, w, nullptr, geom); }

Var conv1d(Var x, Var w, Var bias, const ConvGeometry& geom) {
  tape_of(x, bias);
  return conv_impl(x, w, &bias, geom);
}

Var causal_dilated_conv(Var x, Var w, std::size_t kernel, std::size_t dilation, bool shift) {
  if (dilation < 1) throw std::invalid_argument("causal_dilated_conv: dilation must be >= 1");
  Var y = conv1d(x, w, ConvGeometry::causal(kernel, dilation));
  return shift ? shift_right(y, 1) : y;
}

Var weight_norm(Var v, Var g) {
  Tape& t = tape_of(v, g);
  const std::size_t rows = v.rows(), cols = v.cols();
  if (g.size() != rows) throw std::invalid_argument("weight_norm: magnitude size mismatch");
  const auto vv = v.value(), gv = g.value();
  std::vector<double> norms(rows, 0.0);
  std::vector<double> y(vv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += vv[r * cols + j] * vv[r * cols + j];
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 0.0)) throw std::invalid_argument("weight_norm: zero direction row");
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = gv[r] * vv[r * cols + j] / norms[r];
  }
  const std::size_t iv = v.id(), ig = g.id();
  const bool rv = v.requires_grad(), rg = g.requires_grad();
  return t.push(std::move(y), rows, cols, rv || rg,
                [=, norms = std::move(norms)](Tape& tp, std::size_t self) {
                  const auto& gy = tp.node(self).grad;
                  const auto& vs = tp.node(iv).value;
                  const auto& gs = tp.node(ig).value;
                  for (std::size_t r = 0; r < rows; ++r) {
                    // dot = <dL/dw, v/||v||>
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                      dot += gy[r * cols + j] * vs[r * cols + j] / norms[r];
                    if (rg) tp.grad_of(ig)[r] += dot;
                    if (rv) {
                      auto& gvv = tp.grad_of(iv);
                      const double c = gs[r] / norms[r];
                      for (std::size_t j = 0; j < cols; ++j)
                        gvv[r * cols + j] +=
                            c * (gy[r * cols + j] - dot * vs[r * cols + j] / norms[r]);
                    }
                  }
                });
}

}  // namespace gdse
