#include <algorithm>
#include <cstring>

#include "virnet/errors.hpp"
#include "virnet/tensor.hpp"

// Structural ops on [c, h, w] images. Loops are ordered so the innermost
// dimension walks contiguous memory; everything is single-threaded and
// bit-reproducible.

namespace virnet {

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backprop);

using detail::Node;

namespace {

void require_rank3(const Tensor& t, const char* op) {
    if (!t.defined() || t.ndim() != 3) {
        throw ShapeError(std::string(op) + ": expected [c,h,w] tensor" +
                         (t.defined() ? ", got " + shape_str(t.shape()) : ""));
    }
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) i = -i;
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    if (i > last) i = 2 * last - i;
    return static_cast<std::size_t>(i);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
    require_rank3(input, "conv2d");
    if (!weights.defined() || weights.ndim() != 4) {
        throw ShapeError("conv2d: weights must be [c_out,c_in,k,k]");
    }
    const auto& is = input.shape();
    const auto& ws = weights.shape();
    const std::size_t cin = is[0], h = is[1], w = is[2];
    const std::size_t cout = ws[0], k = ws[2];
    if (ws[1] != cin) {
        throw ShapeError("conv2d: weight c_in " + std::to_string(ws[1]) +
                         " != input channels " + std::to_string(cin));
    }
    if (ws[3] != k || k % 2 == 0) {
        throw ShapeError("conv2d: kernel must be square with odd side, got " +
                         shape_str(ws));
    }
    if (!bias.defined() || bias.shape() != Shape{cout}) {
        throw ShapeError("conv2d: bias must have shape [c_out]");
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
    if (h + 2 * padding < k || w + 2 * padding < k ||
        (h + 2 * padding - k) % stride != 0 || (w + 2 * padding - k) % stride != 0) {
        throw ShapeError("conv2d: non-integral output size for input " +
                         shape_str(is) + ", k=" + std::to_string(k) +
                         ", stride=" + std::to_string(stride) +
                         ", padding=" + std::to_string(padding));
    }
    const std::size_t oh = (h + 2 * padding - k) / stride + 1;
    const std::size_t ow = (w + 2 * padding - k) / stride + 1;

    const double* in_p = input.values().data();
    const double* w_p = weights.values().data();
    const double* b_p = bias.values().data();
    std::vector<double> out(cout * oh * ow);

    const auto p = static_cast<std::ptrdiff_t>(padding);
    const auto s = static_cast<std::ptrdiff_t>(stride);

    // cross-correlation; kernel-position-outer ordering keeps the inner ox
    // loop contiguous in both input and output
    for (std::size_t co = 0; co < cout; ++co) {
        double* out_plane = out.data() + co * oh * ow;
        std::fill(out_plane, out_plane + oh * ow, b_p[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* in_plane = in_p + ci * h * w;
            const double* w_block = w_p + (co * cin + ci) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const double wv = w_block[ky * k + kx];
                    const auto dy = static_cast<std::ptrdiff_t>(ky) - p;
                    const auto dx = static_cast<std::ptrdiff_t>(kx) - p;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + dy;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        const double* in_row = in_plane + iy * w;
                        double* out_row = out_plane + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + dx;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            out_row[ox] += wv * in_row[ix];
                        }
                    }
                }
            }
        }
    }

    Tensor in_t = input, w_t = weights, b_t = bias;
    return make_op_result(
        {cout, oh, ow}, std::move(out), {input, weights, bias},
        [in_t, w_t, b_t, cin, h, w, cout, k, oh, ow, p, s](Node& self) {
            const double* g = self.grad.data();
            const double* inv = in_t.values().data();
            const double* wv = w_t.values().data();
            double* din = in_t.requires_grad() ? in_t.node()->grad_buffer().data() : nullptr;
            double* dw = w_t.requires_grad() ? w_t.node()->grad_buffer().data() : nullptr;
            double* db = b_t.requires_grad() ? b_t.node()->grad_buffer().data() : nullptr;
            for (std::size_t co = 0; co < cout; ++co) {
                const double* g_plane = g + co * oh * ow;
                if (db) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < oh * ow; ++i) acc += g_plane[i];
                    db[co] += acc;
                }
                if (!din && !dw) continue;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* in_plane = inv + ci * h * w;
                    const std::size_t wb = (co * cin + ci) * k * k;
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const auto dy = static_cast<std::ptrdiff_t>(ky) - p;
                            const auto dx = static_cast<std::ptrdiff_t>(kx) - p;
                            const double wval = wv[wb + ky * k + kx];
                            double wacc = 0.0;
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + dy;
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                const double* g_row = g_plane + oy * ow;
                                const double* in_row = in_plane + iy * w;
                                double* din_row = din ? din + ci * h * w + iy * w : nullptr;
                                for (std::size_t ox = 0; ox < ow; ++ox) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + dx;
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                    const double gy = g_row[ox];
                                    wacc += gy * in_row[ix];
                                    if (din_row) din_row[ix] += gy * wval;
                                }
                            }
                            if (dw) dw[wb + ky * k + kx] += wacc;
                        }
                    }
                }
            }
        });
}

Tensor avg_pool2(const Tensor& input) {
    require_rank3(input, "avg_pool2");
    const auto& is = input.shape();
    const std::size_t c = is[0], h = is[1], w = is[2];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("avg_pool2: spatial dims must be even, got " + shape_str(is));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    const double* in_p = input.values().data();
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* in_plane = in_p + ci * h * w;
        double* out_plane = out.data() + ci * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const double* r0 = in_plane + 2 * y * w;
            const double* r1 = r0 + w;
            for (std::size_t x = 0; x < ow; ++x) {
                out_plane[y * ow + x] =
                    0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
            }
        }
    }
    Tensor in_t = input;
    return make_op_result({c, oh, ow}, std::move(out), {input},
                          [in_t, c, h, w, oh, ow](Node& self) {
                              if (!in_t.requires_grad()) return;
                              double* din = in_t.node()->grad_buffer().data();
                              const double* g = self.grad.data();
                              for (std::size_t ci = 0; ci < c; ++ci) {
                                  double* din_plane = din + ci * h * w;
                                  const double* g_plane = g + ci * oh * ow;
                                  for (std::size_t y = 0; y < oh; ++y) {
                                      for (std::size_t x = 0; x < ow; ++x) {
                                          const double gv = 0.25 * g_plane[y * ow + x];
                                          din_plane[2 * y * w + 2 * x] += gv;
                                          din_plane[2 * y * w + 2 * x + 1] += gv;
                                          din_plane[(2 * y + 1) * w + 2 * x] += gv;
                                          din_plane[(2 * y + 1) * w + 2 * x + 1] += gv;
                                      }
                                  }
                              }
                          });
}

Tensor nearest_upsample(const Tensor& input, std::size_t factor) {
    require_rank3(input, "nearest_upsample");
    if (factor == 0) throw ShapeError("nearest_upsample: factor must be >= 1");
    const auto& is = input.shape();
    const std::size_t c = is[0], h = is[1], w = is[2];
    const std::size_t oh = h * factor, ow = w * factor;
    const double* in_p = input.values().data();
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* in_plane = in_p + ci * h * w;
        double* out_plane = out.data() + ci * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const double* in_row = in_plane + (y / factor) * w;
            double* out_row = out_plane + y * ow;
            for (std::size_t x = 0; x < ow; ++x) out_row[x] = in_row[x / factor];
        }
    }
    Tensor in_t = input;
    return make_op_result({c, oh, ow}, std::move(out), {input},
                          [in_t, c, h, w, factor](Node& self) {
                              if (!in_t.requires_grad()) return;
                              double* din = in_t.node()->grad_buffer().data();
                              const double* g = self.grad.data();
                              const std::size_t oh = h * factor, ow = w * factor;
                              for (std::size_t ci = 0; ci < c; ++ci) {
                                  double* din_plane = din + ci * h * w;
                                  const double* g_plane = g + ci * oh * ow;
                                  for (std::size_t y = 0; y < oh; ++y) {
                                      double* din_row = din_plane + (y / factor) * w;
                                      const double* g_row = g_plane + y * ow;
                                      for (std::size_t x = 0; x < ow; ++x) {
                                          din_row[x / factor] += g_row[x];
                                      }
                                  }
                              }
                          });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank3(a, "concat_channels");
    require_rank3(b, "concat_channels");
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as[1] != bs[1] || as[2] != bs[2]) {
        throw ShapeError("concat_channels: spatial dims differ, " + shape_str(as) +
                         " vs " + shape_str(bs));
    }
    const std::size_t ca = as[0], cb = bs[0], h = as[1], w = as[2];
    std::vector<double> out;
    out.reserve((ca + cb) * h * w);
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    Tensor at = a, bt = b;
    return make_op_result({ca + cb, h, w}, std::move(out), {a, b},
                          [at, bt, ca, cb, h, w](Node& self) {
                              const double* g = self.grad.data();
                              const std::size_t na = ca * h * w;
                              if (at.requires_grad()) {
                                  double* da = at.node()->grad_buffer().data();
                                  for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
                              }
                              if (bt.requires_grad()) {
                                  double* db = bt.node()->grad_buffer().data();
                                  const std::size_t nb = cb * h * w;
                                  for (std::size_t i = 0; i < nb; ++i) db[i] += g[na + i];
                              }
                          });
}

Tensor slice_channels(const Tensor& input, std::size_t first, std::size_t count) {
    require_rank3(input, "slice_channels");
    const auto& is = input.shape();
    const std::size_t c = is[0], h = is[1], w = is[2];
    if (first + count > c) {
        throw ShapeError("slice_channels: range [" + std::to_string(first) + "," +
                         std::to_string(first + count) + ") exceeds " +
                         std::to_string(c) + " channels");
    }
    const std::size_t plane = h * w;
    auto v = input.values();
    std::vector<double> out(v.begin() + first * plane, v.begin() + (first + count) * plane);
    Tensor in_t = input;
    return make_op_result({count, h, w}, std::move(out), {input},
                          [in_t, first, count, plane](Node& self) {
                              if (!in_t.requires_grad()) return;
                              double* din = in_t.node()->grad_buffer().data();
                              const double* g = self.grad.data();
                              for (std::size_t i = 0; i < count * plane; ++i) {
                                  din[first * plane + i] += g[i];
                              }
                          });
}

Tensor reflect_pad2d(const Tensor& input, std::size_t pad) {
    require_rank3(input, "reflect_pad2d");
    const auto& is = input.shape();
    const std::size_t c = is[0], h = is[1], w = is[2];
    if (pad >= h || pad >= w) {
        throw ShapeError("reflect_pad2d: pad " + std::to_string(pad) +
                         " too large for " + shape_str(is));
    }
    const std::size_t oh = h + 2 * pad, ow = w + 2 * pad;
    const double* in_p = input.values().data();
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* in_plane = in_p + ci * h * w;
        double* out_plane = out.data() + ci * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t sy =
                reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad), h);
            for (std::size_t x = 0; x < ow; ++x) {
                const std::size_t sx = reflect_index(
                    static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(pad), w);
                out_plane[y * ow + x] = in_plane[sy * w + sx];
            }
        }
    }
    Tensor in_t = input;
    return make_op_result(
        {c, oh, ow}, std::move(out), {input}, [in_t, c, h, w, pad](Node& self) {
            if (!in_t.requires_grad()) return;
            double* din = in_t.node()->grad_buffer().data();
            const double* g = self.grad.data();
            const std::size_t oh = h + 2 * pad, ow = w + 2 * pad;
            for (std::size_t ci = 0; ci < c; ++ci) {
                double* din_plane = din + ci * h * w;
                const double* g_plane = g + ci * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::size_t sy = reflect_index(
                        static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad), h);
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::size_t sx = reflect_index(
                            static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(pad), w);
                        din_plane[sy * w + sx] += g_plane[y * ow + x];
                    }
                }
            }
        });
}

Tensor subsample2d(const Tensor& input, std::size_t s) {
    require_rank3(input, "subsample2d");
    if (s == 0) throw ShapeError("subsample2d: scale must be >= 1");
    const auto& is = input.shape();
    const std::size_t c = is[0], h = is[1], w = is[2];
    if (h % s != 0 || w % s != 0) {
        throw ShapeError("subsample2d: dims " + shape_str(is) +
                         " not divisible by scale " + std::to_string(s));
    }
    const std::size_t oh = h / s, ow = w / s;
    const double* in_p = input.values().data();
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* in_plane = in_p + ci * h * w;
        double* out_plane = out.data() + ci * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                out_plane[y * ow + x] = in_plane[y * s * w + x * s];
            }
        }
    }
    Tensor in_t = input;
    return make_op_result({c, oh, ow}, std::move(out), {input},
                          [in_t, c, h, w, s](Node& self) {
                              if (!in_t.requires_grad()) return;
                              double* din = in_t.node()->grad_buffer().data();
                              const double* g = self.grad.data();
                              const std::size_t oh = h / s, ow = w / s;
                              for (std::size_t ci = 0; ci < c; ++ci) {
                                  double* din_plane = din + ci * h * w;
                                  const double* g_plane = g + ci * oh * ow;
                                  for (std::size_t y = 0; y < oh; ++y) {
                                      for (std::size_t x = 0; x < ow; ++x) {
                                          din_plane[y * s * w + x * s] += g_plane[y * ow + x];
                                      }
                                  }
                              }
                          });
}

}  // namespace virnet
