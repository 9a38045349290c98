#pragma once

// Spatial ops on [C x H x W] tensors (row-major, channels outermost).

#include <string>
#include <vector>

#include "tmc/tensor.hpp"

namespace tmc {

namespace detail {
inline void require_chw(const char* op, const Tensor& t) {
    if (t.shape().size() != 3)
        throw std::invalid_argument(std::string("rank error: ") + op +
                                    " needs a [CxHxW] tensor, got " + shape_str(t.shape()));
}
}  // namespace detail

// Cross-correlation with kernel bank w [Cout x Cin x k x k] and bias [Cout].
// The output extent (H + 2*pad - k) must divide the stride exactly.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1,
                     int pad = 0) {
    detail::require_chw("conv2d", x);
    if (w.shape().size() != 4)
        throw std::invalid_argument("rank error: conv2d kernel bank must be 4-d, got " +
                                    shape_str(w.shape()));
    int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
    int cout = w.dim(0), kcin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (kh != kw) throw std::invalid_argument("shape error: conv2d kernel must be square");
    int k = kh;
    if (kcin != cin)
        throw std::invalid_argument("dimension error: conv2d input channels " +
                                    std::to_string(cin) + " vs kernel " + std::to_string(kcin));
    if (b.shape() != Shape{cout})
        throw std::invalid_argument("shape error: conv2d bias must be [" + std::to_string(cout) +
                                    "], got " + shape_str(b.shape()));
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    if (h + 2 * pad < k || ww + 2 * pad < k)
        throw std::invalid_argument("shape error: conv2d kernel " + std::to_string(k) +
                                    " does not fit padded input " + shape_str(x.shape()));
    if ((h + 2 * pad - k) % stride != 0 || (ww + 2 * pad - k) % stride != 0)
        throw std::invalid_argument("shape error: conv2d output extent not integral for input " +
                                    shape_str(x.shape()) + ", k=" + std::to_string(k) +
                                    ", stride=" + std::to_string(stride) +
                                    ", pad=" + std::to_string(pad));
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (ww + 2 * pad - k) / stride + 1;

    std::vector<double> out(static_cast<size_t>(cout) * ho * wo);
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    for (int co = 0; co < cout; ++co) {
        double bias = b.values()[co];
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias;
                int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xp = xv + (static_cast<size_t>(ci) * h) * ww;
                    const double* wp = wv + ((static_cast<size_t>(co) * cin + ci) * k) * k;
                    for (int ky = 0; ky < k; ++ky) {
                        int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ix = ix0 + kx;
                            if (ix < 0 || ix >= ww) continue;
                            acc += xp[iy * ww + ix] * wp[ky * k + kx];
                        }
                    }
                }
                out[(static_cast<size_t>(co) * ho + oy) * wo + ox] = acc;
            }
    }
    return make_op("conv2d", {cout, ho, wo}, std::move(out), {x, w, b},
                   [cin, h, ww, cout, k, stride, pad, ho, wo](detail::Node& self) {
                       auto& px = *self.parents[0];
                       auto& pw = *self.parents[1];
                       auto& pb = *self.parents[2];
                       const double* g = self.grad.data();
                       for (int co = 0; co < cout; ++co)
                           for (int oy = 0; oy < ho; ++oy)
                               for (int ox = 0; ox < wo; ++ox) {
                                   double go = g[(static_cast<size_t>(co) * ho + oy) * wo + ox];
                                   if (go == 0.0) continue;
                                   if (pb.needs_grad) pb.grad[co] += go;
                                   int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                                   for (int ci = 0; ci < cin; ++ci) {
                                       size_t xoff = static_cast<size_t>(ci) * h * ww;
                                       size_t woff = (static_cast<size_t>(co) * cin + ci) *
                                                     static_cast<size_t>(k) * k;
                                       for (int ky = 0; ky < k; ++ky) {
                                           int iy = iy0 + ky;
                                           if (iy < 0 || iy >= h) continue;
                                           for (int kx = 0; kx < k; ++kx) {
                                               int ix = ix0 + kx;
                                               if (ix < 0 || ix >= ww) continue;
                                               if (px.needs_grad)
                                                   px.grad[xoff + iy * ww + ix] +=
                                                       go * pw.value[woff + ky * k + kx];
                                               if (pw.needs_grad)
                                                   pw.grad[woff + ky * k + kx] +=
                                                       go * px.value[xoff + iy * ww + ix];
                                           }
                                       }
                                   }
                               }
                   });
}

// Nearest-neighbor 2x duplication; backward sums the four children.
inline Tensor upsample2x(const Tensor& x) {
    detail::require_chw("upsample2x", x);
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<double> out(static_cast<size_t>(c) * 4 * h * w);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double v = x.values()[(static_cast<size_t>(ci) * h + y) * w + xx];
                size_t base = (static_cast<size_t>(ci) * 2 * h + 2 * y) * (2 * w) + 2 * xx;
                out[base] = v;
                out[base + 1] = v;
                out[base + 2 * w] = v;
                out[base + 2 * w + 1] = v;
            }
    return make_op("upsample2x", {c, 2 * h, 2 * w}, std::move(out), {x},
                   [c, h, w](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.needs_grad) return;
                       for (int ci = 0; ci < c; ++ci)
                           for (int y = 0; y < h; ++y)
                               for (int xx = 0; xx < w; ++xx) {
                                   size_t base =
                                       (static_cast<size_t>(ci) * 2 * h + 2 * y) * (2 * w) +
                                       2 * xx;
                                   p.grad[(static_cast<size_t>(ci) * h + y) * w + xx] +=
                                       self.grad[base] + self.grad[base + 1] +
                                       self.grad[base + 2 * w] + self.grad[base + 2 * w + 1];
                               }
                   });
}

// Channel-wise concatenation of [C_p x H x W] parts sharing H and W.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty())
        throw std::invalid_argument("empty-input error: concat_channels of nothing");
    detail::require_chw("concat_channels", parts[0]);
    int h = parts[0].dim(1), w = parts[0].dim(2);
    int ctotal = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        detail::require_chw("concat_channels", parts[p]);
        if (parts[p].dim(1) != h || parts[p].dim(2) != w)
            throw std::invalid_argument("shape error: concat_channels part " + std::to_string(p) +
                                        " is " + shape_str(parts[p].shape()) + ", want spatial " +
                                        std::to_string(h) + "x" + std::to_string(w));
        ctotal += parts[p].dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(ctotal) * h * w);
    std::vector<int64_t> sizes;
    for (const auto& part : parts) {
        out.insert(out.end(), part.values().begin(), part.values().end());
        sizes.push_back(part.numel());
    }
    return make_op("concat_channels", {ctotal, h, w}, std::move(out), parts,
                   [sizes = std::move(sizes)](detail::Node& self) {
                       int64_t off = 0;
                       for (size_t p = 0; p < self.parents.size(); ++p) {
                           auto& par = *self.parents[p];
                           if (par.needs_grad)
                               for (int64_t i = 0; i < sizes[p]; ++i)
                                   par.grad[i] += self.grad[off + i];
                           off += sizes[p];
                       }
                   });
}

// [C x H x W] -> [HW x C] token matrix; token n = y*W + x.
inline Tensor chw_to_tokens(const Tensor& x) {
    detail::require_chw("chw_to_tokens", x);
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int n = h * w;
    std::vector<double> out(static_cast<size_t>(n) * c);
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < n; ++i)
            out[static_cast<size_t>(i) * c + ci] = x.values()[static_cast<size_t>(ci) * n + i];
    return make_op("chw_to_tokens", {n, c}, std::move(out), {x}, [c, n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < n; ++i)
                p.grad[static_cast<size_t>(ci) * n + i] +=
                    self.grad[static_cast<size_t>(i) * c + ci];
    });
}

// [HW x C] tokens -> [C x H x W].
inline Tensor tokens_to_chw(const Tensor& t, int h, int w) {
    detail::require_2d("tokens_to_chw", t);
    int n = t.dim(0), c = t.dim(1);
    if (n != h * w)
        throw std::invalid_argument("shape error: tokens_to_chw " + std::to_string(n) +
                                    " tokens vs grid " + std::to_string(h) + "x" +
                                    std::to_string(w));
    std::vector<double> out(static_cast<size_t>(c) * n);
    for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < c; ++ci)
            out[static_cast<size_t>(ci) * n + i] = t.values()[static_cast<size_t>(i) * c + ci];
    return make_op("tokens_to_chw", {c, h, w}, std::move(out), {t}, [c, n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int i = 0; i < n; ++i)
            for (int ci = 0; ci < c; ++ci)
                p.grad[static_cast<size_t>(i) * c + ci] +=
                    self.grad[static_cast<size_t>(ci) * n + i];
    });
}

// Groups each 2x2 token neighborhood of an [HW x C] grid into one token of
// 4C channels (Swin patch-merging layout). Grid extents must be even.
inline Tensor merge_tokens_2x2(const Tensor& t, int h, int w) {
    detail::require_2d("merge_tokens_2x2", t);
    int n = t.dim(0), c = t.dim(1);
    if (n != h * w)
        throw std::invalid_argument("shape error: merge_tokens_2x2 " + std::to_string(n) +
                                    " tokens vs grid " + std::to_string(h) + "x" +
                                    std::to_string(w));
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("merge error: odd grid extent " + std::to_string(h) + "x" +
                                    std::to_string(w));
    int ho = h / 2, wo = w / 2;
    std::vector<double> out(static_cast<size_t>(ho) * wo * 4 * c);
    auto src = [&](int y, int x) { return static_cast<size_t>(y * w + x) * c; };
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            size_t dst = static_cast<size_t>(y * wo + x) * 4 * c;
            const size_t quad[4] = {src(2 * y, 2 * x), src(2 * y, 2 * x + 1),
                                    src(2 * y + 1, 2 * x), src(2 * y + 1, 2 * x + 1)};
            for (int q = 0; q < 4; ++q)
                for (int ci = 0; ci < c; ++ci)
                    out[dst + q * c + ci] = t.values()[quad[q] + ci];
        }
    return make_op("merge_tokens_2x2", {ho * wo, 4 * c}, std::move(out), {t},
                   [h, w, c, ho, wo](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.needs_grad) return;
                       auto src = [&](int y, int x) { return static_cast<size_t>(y * w + x) * c; };
                       for (int y = 0; y < ho; ++y)
                           for (int x = 0; x < wo; ++x) {
                               size_t dst = static_cast<size_t>(y * wo + x) * 4 * c;
                               const size_t quad[4] = {src(2 * y, 2 * x), src(2 * y, 2 * x + 1),
                                                       src(2 * y + 1, 2 * x),
                                                       src(2 * y + 1, 2 * x + 1)};
                               for (int q = 0; q < 4; ++q)
                                   for (int ci = 0; ci < c; ++ci)
                                       p.grad[quad[q] + ci] += self.grad[dst + q * c + ci];
                           }
                   });
}

// Non-overlapping p x p patches of a [C x H x W] image as rows of a
// [(H/p * W/p) x (p*p*C)] matrix.
inline Tensor extract_patches(const Tensor& x, int p) {
    detail::require_chw("extract_patches", x);
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (p < 1 || h % p != 0 || w % p != 0)
        throw std::invalid_argument("shape error: extract_patches " + shape_str(x.shape()) +
                                    " not divisible by patch size " + std::to_string(p));
    int gh = h / p, gw = w / p, row = p * p * c;
    std::vector<double> out(static_cast<size_t>(gh) * gw * row);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            size_t dst = static_cast<size_t>(gy * gw + gx) * row;
            int o = 0;
            for (int ci = 0; ci < c; ++ci)
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        out[dst + o++] =
                            x.values()[(static_cast<size_t>(ci) * h + gy * p + py) * w + gx * p +
                                       px];
        }
    return make_op("extract_patches", {gh * gw, row}, std::move(out), {x},
                   [c, h, w, p, gh, gw, row](detail::Node& self) {
                       auto& par = *self.parents[0];
                       if (!par.needs_grad) return;
                       for (int gy = 0; gy < gh; ++gy)
                           for (int gx = 0; gx < gw; ++gx) {
                               size_t dst = static_cast<size_t>(gy * gw + gx) * row;
                               int o = 0;
                               for (int ci = 0; ci < c; ++ci)
                                   for (int py = 0; py < p; ++py)
                                       for (int px = 0; px < p; ++px)
                                           par.grad[(static_cast<size_t>(ci) * h + gy * p + py) *
                                                        w +
                                                    gx * p + px] += self.grad[dst + o++];
                           }
                   });
}

}  // namespace tmc
