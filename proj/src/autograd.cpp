#include "depthkit/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "depthkit/errors.hpp"

namespace depthkit {
namespace {

void require_finite(const Tensor& t, const std::string& op) {
  if (!t.all_finite()) fail(ErrorCode::NonFinite, op + " produced a non-finite value");
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::ShapeMismatch, what);
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Output columns ow with 0 <= ow*stride + kw - pad < width.
std::pair<int, int> valid_cols(int out_w, int width, int kw, int stride, int pad) {
  int lo = 0;
  while (lo < out_w && lo * stride + kw - pad < 0) ++lo;
  int hi = out_w;
  while (hi > lo && (hi - 1) * stride + kw - pad >= width) --hi;
  return {lo, hi};
}

Scalar sign(Scalar v) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); }

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) fail(ErrorCode::ShapeMismatch, "negative extent");
  data_.assign(shape.size(), fill);
}

Tensor::Tensor(Shape shape, std::vector<Scalar> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape.size()) fail(ErrorCode::ShapeMismatch, "data length does not match " + to_string(shape));
}

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
}

// --- Graph ------------------------------------------------------------------

Var Graph::constant(Tensor value) {
  require_finite(value, "constant");
  Node n;
  n.kind = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::param(Parameter& p) {
  require_finite(p.value, "param " + p.name);
  Node n;
  n.kind = "param";
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::record(std::string kind, std::vector<Var> inputs, Tensor value, BackwardFn fn) {
  require_finite(value, kind);
  Node n;
  n.kind = std::move(kind);
  for (Var v : inputs) {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) fail(ErrorCode::BadConfig, "input not on tape");
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0);
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  return n.has_grad ? n.grad : Tensor(n.value.shape(), 0);
}

void Graph::backward(Var loss) {
  if (loss.id < 0 || static_cast<std::size_t>(loss.id) >= nodes_.size()) fail(ErrorCode::NotScalarLoss, "loss not on tape");
  if (value(loss).size() != 1) fail(ErrorCode::NotScalarLoss, "loss has shape " + to_string(value(loss).shape()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buffer(loss).fill(1);
  for (std::size_t i = static_cast<std::size_t>(loss.id) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0);
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
    } else if (n.backward) {
      // copy: the callback may allocate input buffers and move nodes_ storage
      const Tensor out_grad = n.grad;
      auto fn = n.backward;
      fn(*this, out_grad);
    }
  }
}

// --- convolution --------------------------------------------------------------

Var conv2d(Graph& g, Var x, Var w, std::optional<Var> b, int stride, int pad) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Shape xs = xv.shape(), ws = wv.shape();
  require_shape(stride >= 1 && pad >= 0, "conv2d stride/pad");
  require_shape(ws.c == xs.c, "conv2d channel mismatch: input " + to_string(xs) + " weight " + to_string(ws));
  require_shape(ws.h == ws.w && ws.h >= 1, "conv2d kernel must be square");
  require_shape(xs.h + 2 * pad >= ws.h && xs.w + 2 * pad >= ws.w, "conv2d kernel larger than padded input");
  if (b) require_shape(g.value(*b).size() == static_cast<std::size_t>(ws.n), "conv2d bias size");
  const int k = ws.h;
  const Shape os{xs.n, ws.n, conv_out(xs.h, k, stride, pad), conv_out(xs.w, k, stride, pad)};

  Tensor out(os, 0);
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < os.c; ++co) {
      Scalar* op = out.data() + out.offset(n, co, 0, 0);
      if (b) std::fill(op, op + os.plane(), g.value(*b)[static_cast<std::size_t>(co)]);
      for (int ci = 0; ci < xs.c; ++ci) {
        const Scalar* ip = xv.data() + xv.offset(n, ci, 0, 0);
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const Scalar wt = wv.at(co, ci, kh, kw);
            const auto [lo, hi] = valid_cols(os.w, xs.w, kw, stride, pad);
            for (int oh = 0; oh < os.h; ++oh) {
              const int ih = oh * stride + kh - pad;
              if (ih < 0 || ih >= xs.h) continue;
              Scalar* orow = op + static_cast<std::size_t>(oh) * os.w;
              const Scalar* irow = ip + static_cast<std::size_t>(ih) * xs.w + (kw - pad);
              if (stride == 1) {
                for (int ow = lo; ow < hi; ++ow) orow[ow] += wt * irow[ow];
              } else {
                for (int ow = lo; ow < hi; ++ow) orow[ow] += wt * irow[ow * stride];
              }
            }
          }
        }
      }
    }
  }

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return g.record("conv2d", inputs, std::move(out), [x, w, b, stride, pad, k, xs, os](Graph& g, const Tensor& dy) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    const bool need_x = g.requires_grad(x);
    const bool need_w = g.requires_grad(w);
    Tensor* dx = need_x ? &g.grad_buffer(x) : nullptr;
    Tensor* dw = need_w ? &g.grad_buffer(w) : nullptr;
    if (b && g.requires_grad(*b)) {
      Tensor& db = g.grad_buffer(*b);
      for (int n = 0; n < os.n; ++n)
        for (int co = 0; co < os.c; ++co) {
          const Scalar* gp = dy.data() + dy.offset(n, co, 0, 0);
          db[static_cast<std::size_t>(co)] += std::accumulate(gp, gp + os.plane(), Scalar(0));
        }
    }
    for (int n = 0; n < os.n; ++n) {
      for (int co = 0; co < os.c; ++co) {
        const Scalar* gp = dy.data() + dy.offset(n, co, 0, 0);
        for (int ci = 0; ci < xs.c; ++ci) {
          const Scalar* ip = xv.data() + xv.offset(n, ci, 0, 0);
          Scalar* dip = dx ? dx->data() + dx->offset(n, ci, 0, 0) : nullptr;
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              const Scalar wt = wv.at(co, ci, kh, kw);
              const auto [lo, hi] = valid_cols(os.w, xs.w, kw, stride, pad);
              Scalar acc = 0;
              for (int oh = 0; oh < os.h; ++oh) {
                const int ih = oh * stride + kh - pad;
                if (ih < 0 || ih >= xs.h) continue;
                const Scalar* grow = gp + static_cast<std::size_t>(oh) * os.w;
                const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(ih) * xs.w + (kw - pad);
                const Scalar* irow = ip + base;
                if (need_w) {
                  for (int ow = lo; ow < hi; ++ow) acc += grow[ow] * irow[ow * stride];
                }
                if (dip) {
                  Scalar* drow = dip + base;
                  for (int ow = lo; ow < hi; ++ow) drow[ow * stride] += wt * grow[ow];
                }
              }
              if (dw) dw->at(co, ci, kh, kw) += acc;
            }
          }
        }
      }
    }
  });
}

Var transpose_conv2d(Graph& g, Var x, Var w, std::optional<Var> b, int stride) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Shape xs = xv.shape(), ws = wv.shape();
  require_shape(stride >= 1, "transpose_conv2d stride");
  require_shape(ws.n == xs.c, "transpose_conv2d channel mismatch: input " + to_string(xs) + " weight " + to_string(ws));
  require_shape(ws.h == ws.w && ws.h >= 1, "transpose_conv2d kernel must be square");
  if (b) require_shape(g.value(*b).size() == static_cast<std::size_t>(ws.c), "transpose_conv2d bias size");
  const int k = ws.h;
  const Shape os{xs.n, ws.c, (xs.h - 1) * stride + k, (xs.w - 1) * stride + k};

  Tensor out(os, 0);
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < os.c; ++co) {
      Scalar* op = out.data() + out.offset(n, co, 0, 0);
      if (b) std::fill(op, op + os.plane(), g.value(*b)[static_cast<std::size_t>(co)]);
      for (int ci = 0; ci < xs.c; ++ci) {
        const Scalar* ip = xv.data() + xv.offset(n, ci, 0, 0);
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) {
            const Scalar wt = wv.at(ci, co, kh, kw);
            for (int ih = 0; ih < xs.h; ++ih) {
              Scalar* orow = op + static_cast<std::size_t>(ih * stride + kh) * os.w + kw;
              const Scalar* irow = ip + static_cast<std::size_t>(ih) * xs.w;
              for (int iw = 0; iw < xs.w; ++iw) orow[iw * stride] += wt * irow[iw];
            }
          }
      }
    }
  }

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return g.record("transpose_conv2d", inputs, std::move(out), [x, w, b, stride, k, xs, os](Graph& g, const Tensor& dy) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    Tensor* dx = g.requires_grad(x) ? &g.grad_buffer(x) : nullptr;
    Tensor* dw = g.requires_grad(w) ? &g.grad_buffer(w) : nullptr;
    if (b && g.requires_grad(*b)) {
      Tensor& db = g.grad_buffer(*b);
      for (int n = 0; n < os.n; ++n)
        for (int co = 0; co < os.c; ++co) {
          const Scalar* gp = dy.data() + dy.offset(n, co, 0, 0);
          db[static_cast<std::size_t>(co)] += std::accumulate(gp, gp + os.plane(), Scalar(0));
        }
    }
    for (int n = 0; n < xs.n; ++n) {
      for (int co = 0; co < os.c; ++co) {
        const Scalar* gp = dy.data() + dy.offset(n, co, 0, 0);
        for (int ci = 0; ci < xs.c; ++ci) {
          const Scalar* ip = xv.data() + xv.offset(n, ci, 0, 0);
          Scalar* dip = dx ? dx->data() + dx->offset(n, ci, 0, 0) : nullptr;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const Scalar wt = wv.at(ci, co, kh, kw);
              Scalar acc = 0;
              for (int ih = 0; ih < xs.h; ++ih) {
                const Scalar* grow = gp + static_cast<std::size_t>(ih * stride + kh) * os.w + kw;
                const Scalar* irow = ip + static_cast<std::size_t>(ih) * xs.w;
                if (dw)
                  for (int iw = 0; iw < xs.w; ++iw) acc += grow[iw * stride] * irow[iw];
                if (dip) {
                  Scalar* drow = dip + static_cast<std::size_t>(ih) * xs.w;
                  for (int iw = 0; iw < xs.w; ++iw) drow[iw] += wt * grow[iw * stride];
                }
              }
              if (dw) dw->at(ci, co, kh, kw) += acc;
            }
        }
      }
    }
  });
}

// --- elementwise and structural ------------------------------------------------

Var relu(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0 ? xv[i] : Scalar(0);
  return g.record("relu", {x}, std::move(out), [x](Graph& g, const Tensor& dy) {
    const Tensor& xv = g.value(x);
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0) dx[i] += dy[i];
  });
}

PoolResult maxpool2d(Graph& g, Var x, int kernel, int stride) {
  const Tensor& xv = g.value(x);
  const Shape xs = xv.shape();
  require_shape(kernel >= 1 && stride >= 1 && xs.h >= kernel && xs.w >= kernel, "maxpool2d window larger than input");
  const Shape os{xs.n, xs.c, (xs.h - kernel) / stride + 1, (xs.w - kernel) / stride + 1};
  Tensor out(os);
  PoolIndices idx{xs, os, std::vector<std::int64_t>(os.size())};
  std::size_t o = 0;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int oh = 0; oh < os.h; ++oh)
        for (int ow = 0; ow < os.w; ++ow, ++o) {
          std::size_t best = xv.offset(n, c, oh * stride, ow * stride);
          // row-major scan with strict > keeps the lowest flat index on ties
          for (int kh = 0; kh < kernel; ++kh)
            for (int kw = 0; kw < kernel; ++kw) {
              const std::size_t at = xv.offset(n, c, oh * stride + kh, ow * stride + kw);
              if (xv[at] > xv[best]) best = at;
            }
          out[o] = xv[best];
          idx.index[o] = static_cast<std::int64_t>(best);
        }
  auto saved = std::make_shared<std::vector<std::int64_t>>(idx.index);
  Var v = g.record("maxpool2d", {x}, std::move(out), [x, saved](Graph& g, const Tensor& dy) {
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < saved->size(); ++i) dx[static_cast<std::size_t>((*saved)[i])] += dy[i];
  });
  return {v, std::move(idx)};
}

Var max_unpool2d(Graph& g, Var x, const PoolIndices& idx, Shape out_shape) {
  const Tensor& xv = g.value(x);
  require_shape(xv.shape() == idx.output_shape, "max_unpool2d input " + to_string(xv.shape()) +
                                                    " does not match pooled shape " + to_string(idx.output_shape));
  require_shape(out_shape.n == xv.shape().n && out_shape.c == xv.shape().c, "max_unpool2d batch/channel mismatch");
  if (idx.index.size() != xv.size()) fail(ErrorCode::BadIndices, "index count does not match input");
  Tensor out(out_shape, 0);
  const std::size_t plane_in = xv.shape().plane();
  const std::size_t plane_out = out_shape.plane();
  for (std::size_t i = 0; i < idx.index.size(); ++i) {
    const std::int64_t at = idx.index[i];
    if (at < 0 || static_cast<std::size_t>(at) >= out_shape.size()) fail(ErrorCode::BadIndices, "index outside output");
    // indices must stay in the same (n, c) plane as their source element
    if (static_cast<std::size_t>(at) / plane_out != i / plane_in) fail(ErrorCode::BadIndices, "index crosses planes");
    out[static_cast<std::size_t>(at)] += xv[i];
  }
  auto saved = std::make_shared<std::vector<std::int64_t>>(idx.index);
  return g.record("max_unpool2d", {x}, std::move(out), [x, saved](Graph& g, const Tensor& dy) {
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < saved->size(); ++i) dx[i] += dy[static_cast<std::size_t>((*saved)[i])];
  });
}

Var add(Graph& g, Var x, Var y) {
  const Tensor& xv = g.value(x);
  const Tensor& yv = g.value(y);
  require_shape(xv.shape() == yv.shape(), "add " + to_string(xv.shape()) + " vs " + to_string(yv.shape()));
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + yv[i];
  return g.record("add", {x, y}, std::move(out), [x, y](Graph& g, const Tensor& dy) {
    for (Var v : {x, y}) {
      if (!g.requires_grad(v)) continue;
      Tensor& d = g.grad_buffer(v);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

Var concat_channels(Graph& g, Var x, Var y) {
  const Tensor& xv = g.value(x);
  const Tensor& yv = g.value(y);
  const Shape xs = xv.shape(), ys = yv.shape();
  require_shape(xs.n == ys.n && xs.h == ys.h && xs.w == ys.w, "concat_channels " + to_string(xs) + " vs " + to_string(ys));
  Tensor out(Shape{xs.n, xs.c + ys.c, xs.h, xs.w});
  const std::size_t bx = static_cast<std::size_t>(xs.c) * xs.plane();
  const std::size_t by = static_cast<std::size_t>(ys.c) * ys.plane();
  for (int n = 0; n < xs.n; ++n) {
    std::copy_n(xv.data() + n * bx, bx, out.data() + n * (bx + by));
    std::copy_n(yv.data() + n * by, by, out.data() + n * (bx + by) + bx);
  }
  return g.record("concat_channels", {x, y}, std::move(out), [x, y, xs, bx, by](Graph& g, const Tensor& dy) {
    Tensor* dx = g.requires_grad(x) ? &g.grad_buffer(x) : nullptr;
    Tensor* dyy = g.requires_grad(y) ? &g.grad_buffer(y) : nullptr;
    for (int n = 0; n < xs.n; ++n) {
      const Scalar* src = dy.data() + n * (bx + by);
      if (dx)
        for (std::size_t i = 0; i < bx; ++i) (*dx)[n * bx + i] += src[i];
      if (dyy)
        for (std::size_t i = 0; i < by; ++i) (*dyy)[n * by + i] += src[bx + i];
    }
  });
}

Var scale(Graph& g, Var x, Scalar s) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = s * xv[i];
  return g.record("scale", {x}, std::move(out), [x, s](Graph& g, const Tensor& dy) {
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += s * dy[i];
  });
}

Var sum(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  Tensor out(Shape{1, 1, 1, 1}, std::accumulate(xv.values().begin(), xv.values().end(), Scalar(0)));
  return g.record("sum", {x}, std::move(out), [x](Graph& g, const Tensor& dy) {
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0];
  });
}

Var mean(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require_shape(xv.size() > 0, "mean of empty tensor");
  const Scalar n = static_cast<Scalar>(xv.size());
  Tensor out(Shape{1, 1, 1, 1}, std::accumulate(xv.values().begin(), xv.values().end(), Scalar(0)) / n);
  return g.record("mean", {x}, std::move(out), [x, n](Graph& g, const Tensor& dy) {
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0] / n;
  });
}

Var spatial_gradient(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  const Shape xs = xv.shape();
  Tensor out(Shape{xs.n, 2 * xs.c, xs.h, xs.w}, 0);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < xs.h; ++i)
        for (int j = 0; j < xs.w; ++j) {
          if (j + 1 < xs.w) out.at(n, c, i, j) = xv.at(n, c, i, j + 1) - xv.at(n, c, i, j);
          if (i + 1 < xs.h) out.at(n, xs.c + c, i, j) = xv.at(n, c, i + 1, j) - xv.at(n, c, i, j);
        }
  return g.record("spatial_gradient", {x}, std::move(out), [x, xs](Graph& g, const Tensor& dy) {
    Tensor& dx = g.grad_buffer(x);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c)
        for (int i = 0; i < xs.h; ++i)
          for (int j = 0; j < xs.w; ++j) {
            if (j + 1 < xs.w) {
              const Scalar gv = dy.at(n, c, i, j);
              dx.at(n, c, i, j + 1) += gv;
              dx.at(n, c, i, j) -= gv;
            }
            if (i + 1 < xs.h) {
              const Scalar gv = dy.at(n, xs.c + c, i, j);
              dx.at(n, c, i + 1, j) += gv;
              dx.at(n, c, i, j) -= gv;
            }
          }
  });
}

Var laplacian_energy(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  const Shape xs = xv.shape();
  Tensor out(xs, 0);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 1; i + 1 < xs.h; ++i)
        for (int j = 1; j + 1 < xs.w; ++j) {
          const Scalar dxx = xv.at(n, c, i, j + 1) - 2 * xv.at(n, c, i, j) + xv.at(n, c, i, j - 1);
          const Scalar dyy = xv.at(n, c, i + 1, j) - 2 * xv.at(n, c, i, j) + xv.at(n, c, i - 1, j);
          out.at(n, c, i, j) = dxx * dxx + dyy * dyy;
        }
  return g.record("laplacian_energy", {x}, std::move(out), [x, xs](Graph& g, const Tensor& dy) {
    const Tensor& xv = g.value(x);
    Tensor& dx = g.grad_buffer(x);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c)
        for (int i = 1; i + 1 < xs.h; ++i)
          for (int j = 1; j + 1 < xs.w; ++j) {
            const Scalar gv = dy.at(n, c, i, j);
            if (gv == 0) continue;
            const Scalar dxx = xv.at(n, c, i, j + 1) - 2 * xv.at(n, c, i, j) + xv.at(n, c, i, j - 1);
            const Scalar dyy = xv.at(n, c, i + 1, j) - 2 * xv.at(n, c, i, j) + xv.at(n, c, i - 1, j);
            const Scalar gx = 2 * dxx * gv, gy = 2 * dyy * gv;
            dx.at(n, c, i, j + 1) += gx;
            dx.at(n, c, i, j - 1) += gx;
            dx.at(n, c, i + 1, j) += gy;
            dx.at(n, c, i - 1, j) += gy;
            dx.at(n, c, i, j) -= 2 * (gx + gy);
          }
  });
}

// --- distances ------------------------------------------------------------------

std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::L1: return "L1";
    case DistanceKind::L2: return "L2";
    case DistanceKind::Huber: return "Huber";
    case DistanceKind::AdaptiveHuber: return "AdaptiveHuber";
    case DistanceKind::RHuber: return "RHuber";
  }
  return "L1";
}

DistanceKind distance_kind_from_string(const std::string& s) {
  for (auto k : {DistanceKind::L1, DistanceKind::L2, DistanceKind::Huber, DistanceKind::AdaptiveHuber, DistanceKind::RHuber}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::BadConfig, "unknown distance kind: " + s);
}

namespace {

struct Penalty {
  Scalar value;
  Scalar slope;  // d value / d e
};

Penalty huber(Scalar e, Scalar delta) {
  const Scalar a = std::abs(e);
  if (a <= delta) return {Scalar(0.5) * e * e, e};
  return {delta * (a - Scalar(0.5) * delta), delta * sign(e)};
}

}  // namespace

Var distance(Graph& g, const Distance& d, Var a, Var b, const Tensor& mask) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_shape(av.shape() == bv.shape(), "distance " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  require_shape(mask.shape() == av.shape(), "distance mask " + to_string(mask.shape()));
  if (d.kind == DistanceKind::Huber && !(d.delta > 0)) fail(ErrorCode::BadConfig, "Huber delta must be positive");

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0) valid.push_back(i);
  if (valid.empty()) fail(ErrorCode::NoValidPixels, "distance over an empty mask");
  const Scalar n = static_cast<Scalar>(valid.size());

  std::vector<Scalar> e(valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k) e[k] = av[valid[k]] - bv[valid[k]];

  // Adaptive thresholds and the elements that determine them.
  Scalar threshold = 0;
  std::vector<std::pair<std::size_t, Scalar>> threshold_sources;  // (k, d threshold / d |e_k|)
  if (d.kind == DistanceKind::AdaptiveHuber) {
    std::vector<std::size_t> order(e.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return std::abs(e[p]) < std::abs(e[q]); });
    const std::size_t m = order.size();
    if (m % 2 == 1) {
      threshold = std::abs(e[order[m / 2]]);
      threshold_sources = {{order[m / 2], Scalar(1)}};
    } else {
      threshold = (std::abs(e[order[m / 2 - 1]]) + std::abs(e[order[m / 2]])) / 2;
      threshold_sources = {{order[m / 2 - 1], Scalar(0.5)}, {order[m / 2], Scalar(0.5)}};
    }
    if (threshold < Scalar(1e-12)) {
      threshold = Scalar(1e-12);
      threshold_sources.clear();
    }
  } else if (d.kind == DistanceKind::RHuber) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < e.size(); ++k)
      if (std::abs(e[k]) > std::abs(e[arg])) arg = k;
    threshold = Scalar(0.2) * std::abs(e[arg]);
    threshold_sources = {{arg, Scalar(0.2)}};
  }

  Scalar total = 0;
  std::vector<Scalar> slope(e.size());
  Scalar dthreshold = 0;  // d total / d threshold
  for (std::size_t k = 0; k < e.size(); ++k) {
    const Scalar ek = e[k];
    const Scalar ak = std::abs(ek);
    Penalty p{0, 0};
    switch (d.kind) {
      case DistanceKind::L1: p = {ak, sign(ek)}; break;
      case DistanceKind::L2: p = {ek * ek, 2 * ek}; break;
      case DistanceKind::Huber: p = huber(ek, static_cast<Scalar>(d.delta)); break;
      case DistanceKind::AdaptiveHuber:
        p = huber(ek, threshold);
        if (ak > threshold) dthreshold += ak - threshold;
        break;
      case DistanceKind::RHuber:
        if (threshold <= 0) {
          p = {0, 0};
        } else if (ak <= threshold) {
          p = {ak, sign(ek)};
        } else {
          p = {(ek * ek + threshold * threshold) / (2 * threshold), ek / threshold};
          dthreshold += Scalar(0.5) - ek * ek / (2 * threshold * threshold);
        }
        break;
    }
    total += p.value;
    slope[k] = p.slope;
  }
  for (const auto& [k, w] : threshold_sources) slope[k] += dthreshold * w * sign(e[k]);
  for (auto& s : slope) s /= n;

  Tensor out(Shape{1, 1, 1, 1}, total / n);
  auto saved_idx = std::make_shared<std::vector<std::size_t>>(std::move(valid));
  auto saved_slope = std::make_shared<std::vector<Scalar>>(std::move(slope));
  return g.record("distance:" + to_string(d.kind), {a, b}, std::move(out),
                  [a, b, saved_idx, saved_slope](Graph& g, const Tensor& dy) {
                    const Scalar up = dy[0];
                    if (g.requires_grad(a)) {
                      Tensor& da = g.grad_buffer(a);
                      for (std::size_t k = 0; k < saved_idx->size(); ++k) da[(*saved_idx)[k]] += up * (*saved_slope)[k];
                    }
                    if (g.requires_grad(b)) {
                      Tensor& db = g.grad_buffer(b);
                      for (std::size_t k = 0; k < saved_idx->size(); ++k) db[(*saved_idx)[k]] -= up * (*saved_slope)[k];
                    }
                  });
}

// --- checking and optimizers ------------------------------------------------------

double grad_check(const std::function<Var(Graph&)>& build, std::span<Parameter* const> params,
                  const GradCheckOptions& opts) {
  zero_grad(params);
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph g;
    Var loss = build(g);
    if (g.value(loss).size() != 1) fail(ErrorCode::NotScalarLoss, "grad_check loss is not scalar");
    return static_cast<double>(g.value(loss)[0]);
  };

  double worst = 0.0;
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    std::size_t stride = 1;
    if (opts.max_elements_per_param > 0 && n > opts.max_elements_per_param) {
      stride = (n + opts.max_elements_per_param - 1) / opts.max_elements_per_param;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const Scalar orig = p->value[i];
      p->value[i] = orig + static_cast<Scalar>(opts.eps);
      const double up = eval();
      p->value[i] = orig - static_cast<Scalar>(opts.eps);
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->grad = Tensor(p->value.shape(), 0);
}

void sgd_step(std::span<Parameter* const> params, double lr, double weight_decay) {
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) fail(ErrorCode::ShapeMismatch, "gradient shape for " + p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] -= static_cast<Scalar>(lr * (p->grad[i] + weight_decay * p->value[i]));
    }
  }
}

void adam_step(AdamState& s, std::span<Parameter* const> params, double lr, double weight_decay) {
  if (s.m.empty()) {
    for (Parameter* p : params) {
      s.m.emplace_back(p->value.shape(), 0);
      s.v.emplace_back(p->value.shape(), 0);
    }
  }
  if (s.m.size() != params.size()) fail(ErrorCode::ShapeMismatch, "optimizer state does not match parameter list");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.grad.shape() != p.value.shape() || s.m[k].shape() != p.value.shape()) {
      fail(ErrorCode::ShapeMismatch, "gradient shape for " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = p.grad[i];
      s.m[k][i] = static_cast<Scalar>(s.beta1 * s.m[k][i] + (1.0 - s.beta1) * gi);
      s.v[k][i] = static_cast<Scalar>(s.beta2 * s.v[k][i] + (1.0 - s.beta2) * gi * gi);
      const double mhat = s.m[k][i] / c1;
      const double vhat = s.v[k][i] / c2;
      p.value[i] -= static_cast<Scalar>(lr * (mhat / (std::sqrt(vhat) + s.eps) + weight_decay * p.value[i]));
    }
  }
}

}  // namespace depthkit
