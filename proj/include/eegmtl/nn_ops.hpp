#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eegmtl/autodiff.hpp"
#include "eegmtl/ops.hpp"
#include "eegmtl/tensor.hpp"

namespace eegmtl {

namespace detail {

inline void require_conv_geometry(const char* op, int kh, int kw, int sh, int sw, int ph, int pw) {
    if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 || pw < 0) {
        throw ShapeError(std::string(op) + " geometry invalid: kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " stride " + std::to_string(sh) + "x" +
                         std::to_string(sw) + " pad " + std::to_string(ph) + "x" +
                         std::to_string(pw));
    }
}

template <class S>
inline void require_rank(const char* op, const Tensor<S>& t, int rank) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + " requires a rank-" + std::to_string(rank) +
                         " tensor, got " + dims_str(t.dims()));
    }
}

} // namespace detail

// ---- convolutions ----------------------------------------------------------
// All convolutions are cross-correlations (no kernel flip) over zero-padded
// inputs, the usual deep learning convention.

/// x [Cin,H,W] * w [Cout,Cin,kh,kw] + b [Cout] -> [Cout,Ho,Wo]
/// with Ho = (H + 2*ph - kh)/sh + 1 (floor), likewise Wo.
template <class S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, int sh, int sw, int ph, int pw) {
    Tape<S>& tp = detail::same_tape(x, w);
    detail::same_tape(x, b);
    const Tensor<S>& xv = x.value();
    const Tensor<S>& wv = w.value();
    const Tensor<S>& bv = b.value();
    detail::require_rank("conv2d input", xv, 3);
    detail::require_rank("conv2d weight", wv, 4);
    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    detail::require_conv_geometry("conv2d", kh, kw, sh, sw, ph, pw);
    if (wv.dim(1) != cin) {
        throw ShapeError("conv2d weight expects " + std::to_string(wv.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
    }
    if (bv.rank() != 1 || bv.dim(0) != cout) {
        throw ShapeError("conv2d bias must be [" + std::to_string(cout) + "], got " +
                         dims_str(bv.dims()));
    }
    if (h + 2 * ph < kh || wd + 2 * pw < kw) {
        throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * ph) + "x" +
                         std::to_string(wd + 2 * pw));
    }
    const int ho = (h + 2 * ph - kh) / sh + 1;
    const int wo = (wd + 2 * pw - kw) / sw + 1;

    Tensor<S> out({cout, ho, wo});
    for (int o = 0; o < cout; ++o) {
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                S acc = bv[static_cast<std::size_t>(o)];
                for (int c = 0; c < cin; ++c) {
                    for (int u = 0; u < kh; ++u) {
                        const int y = i * sh + u - ph;
                        if (y < 0 || y >= h) continue;
                        for (int v = 0; v < kw; ++v) {
                            const int z = j * sw + v - pw;
                            if (z < 0 || z >= wd) continue;
                            acc += xv[(static_cast<std::size_t>(c) * h + y) * wd + z] *
                                   wv[((static_cast<std::size_t>(o) * cin + c) * kh + u) * kw + v];
                        }
                    }
                }
                out[(static_cast<std::size_t>(o) * ho + i) * wo + j] = acc;
            }
        }
    }
    return tp.push(std::move(out), {x.id, w.id, b.id},
                   [=](Tape<S>& t, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& xv = t.node(nd.parents[0]).value;
                       const Tensor<S>& wv = t.node(nd.parents[1]).value;
                       Tensor<S>& gx = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gw = flow[static_cast<std::size_t>(nd.parents[1])];
                       Tensor<S>& gb = flow[static_cast<std::size_t>(nd.parents[2])];
                       for (int o = 0; o < cout; ++o) {
                           for (int i = 0; i < ho; ++i) {
                               for (int j = 0; j < wo; ++j) {
                                   const S go = g[(static_cast<std::size_t>(o) * ho + i) * wo + j];
                                   gb[static_cast<std::size_t>(o)] += go;
                                   for (int c = 0; c < cin; ++c) {
                                       for (int u = 0; u < kh; ++u) {
                                           const int y = i * sh + u - ph;
                                           if (y < 0 || y >= h) continue;
                                           for (int v = 0; v < kw; ++v) {
                                               const int z = j * sw + v - pw;
                                               if (z < 0 || z >= wd) continue;
                                               const std::size_t xi =
                                                   (static_cast<std::size_t>(c) * h + y) * wd + z;
                                               const std::size_t wi =
                                                   ((static_cast<std::size_t>(o) * cin + c) * kh +
                                                    u) * kw + v;
                                               gx[xi] += go * wv[wi];
                                               gw[wi] += go * xv[xi];
                                           }
                                       }
                                   }
                               }
                           }
                       }
                   });
}

/// Depthwise convolution with channel multiplier. x [C,H,W] * w [C,M,kh,kw]
/// + b [C*M] -> [C*M,Ho,Wo]; output channel c*M + r is driven only by input
/// channel c.
template <class S>
Var<S> depthwise_conv2d(Var<S> x, Var<S> w, Var<S> b, int sh, int sw, int ph, int pw) {
    Tape<S>& tp = detail::same_tape(x, w);
    detail::same_tape(x, b);
    const Tensor<S>& xv = x.value();
    const Tensor<S>& wv = w.value();
    const Tensor<S>& bv = b.value();
    detail::require_rank("depthwise_conv2d input", xv, 3);
    detail::require_rank("depthwise_conv2d weight", wv, 4);
    const int ch = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int mult = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
    detail::require_conv_geometry("depthwise_conv2d", kh, kw, sh, sw, ph, pw);
    if (wv.dim(0) != ch) {
        throw ShapeError("depthwise_conv2d weight expects " + std::to_string(wv.dim(0)) +
                         " channels, input has " + std::to_string(ch));
    }
    const int cout = ch * mult;
    if (bv.rank() != 1 || bv.dim(0) != cout) {
        throw ShapeError("depthwise_conv2d bias must be [" + std::to_string(cout) + "], got " +
                         dims_str(bv.dims()));
    }
    if (h + 2 * ph < kh || wd + 2 * pw < kw) {
        throw ShapeError("depthwise_conv2d kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " larger than padded input " +
                         std::to_string(h + 2 * ph) + "x" + std::to_string(wd + 2 * pw));
    }
    const int ho = (h + 2 * ph - kh) / sh + 1;
    const int wo = (wd + 2 * pw - kw) / sw + 1;

    Tensor<S> out({cout, ho, wo});
    for (int c = 0; c < ch; ++c) {
        for (int r = 0; r < mult; ++r) {
            const int q = c * mult + r;
            for (int i = 0; i < ho; ++i) {
                for (int j = 0; j < wo; ++j) {
                    S acc = bv[static_cast<std::size_t>(q)];
                    for (int u = 0; u < kh; ++u) {
                        const int y = i * sh + u - ph;
                        if (y < 0 || y >= h) continue;
                        for (int v = 0; v < kw; ++v) {
                            const int z = j * sw + v - pw;
                            if (z < 0 || z >= wd) continue;
                            acc += xv[(static_cast<std::size_t>(c) * h + y) * wd + z] *
                                   wv[((static_cast<std::size_t>(c) * mult + r) * kh + u) * kw + v];
                        }
                    }
                    out[(static_cast<std::size_t>(q) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    return tp.push(std::move(out), {x.id, w.id, b.id},
                   [=](Tape<S>& t, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& xv = t.node(nd.parents[0]).value;
                       const Tensor<S>& wv = t.node(nd.parents[1]).value;
                       Tensor<S>& gx = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gw = flow[static_cast<std::size_t>(nd.parents[1])];
                       Tensor<S>& gb = flow[static_cast<std::size_t>(nd.parents[2])];
                       for (int c = 0; c < ch; ++c) {
                           for (int r = 0; r < mult; ++r) {
                               const int q = c * mult + r;
                               for (int i = 0; i < ho; ++i) {
                                   for (int j = 0; j < wo; ++j) {
                                       const S go =
                                           g[(static_cast<std::size_t>(q) * ho + i) * wo + j];
                                       gb[static_cast<std::size_t>(q)] += go;
                                       for (int u = 0; u < kh; ++u) {
                                           const int y = i * sh + u - ph;
                                           if (y < 0 || y >= h) continue;
                                           for (int v = 0; v < kw; ++v) {
                                               const int z = j * sw + v - pw;
                                               if (z < 0 || z >= wd) continue;
                                               const std::size_t xi =
                                                   (static_cast<std::size_t>(c) * h + y) * wd + z;
                                               const std::size_t wi =
                                                   ((static_cast<std::size_t>(c) * mult + r) * kh +
                                                    u) * kw + v;
                                               gx[xi] += go * wv[wi];
                                               gw[wi] += go * xv[xi];
                                           }
                                       }
                                   }
                               }
                           }
                       }
                   });
}

/// Transposed convolution (adjoint of conv2d's input map). x [Cin,H,W] *
/// w [Cin,Cout,kh,kw] + b [Cout] -> [Cout,Ho,Wo] with
/// Ho = (H-1)*sh + kh - 2*ph; scatter targets cropped by padding are dropped.
template <class S>
Var<S> transposed_conv2d(Var<S> x, Var<S> w, Var<S> b, int sh, int sw, int ph, int pw) {
    Tape<S>& tp = detail::same_tape(x, w);
    detail::same_tape(x, b);
    const Tensor<S>& xv = x.value();
    const Tensor<S>& wv = w.value();
    const Tensor<S>& bv = b.value();
    detail::require_rank("transposed_conv2d input", xv, 3);
    detail::require_rank("transposed_conv2d weight", wv, 4);
    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int cout = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
    detail::require_conv_geometry("transposed_conv2d", kh, kw, sh, sw, ph, pw);
    if (wv.dim(0) != cin) {
        throw ShapeError("transposed_conv2d weight expects " + std::to_string(wv.dim(0)) +
                         " input channels, input has " + std::to_string(cin));
    }
    if (bv.rank() != 1 || bv.dim(0) != cout) {
        throw ShapeError("transposed_conv2d bias must be [" + std::to_string(cout) + "], got " +
                         dims_str(bv.dims()));
    }
    const int ho = (h - 1) * sh + kh - 2 * ph;
    const int wo = (wd - 1) * sw + kw - 2 * pw;
    if (ho < 1 || wo < 1) {
        throw ShapeError("transposed_conv2d output extent " + std::to_string(ho) + "x" +
                         std::to_string(wo) + " is not positive");
    }

    Tensor<S> out({cout, ho, wo});
    for (int o = 0; o < cout; ++o) {
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                out[(static_cast<std::size_t>(o) * ho + i) * wo + j] =
                    bv[static_cast<std::size_t>(o)];
            }
        }
    }
    for (int c = 0; c < cin; ++c) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < wd; ++j) {
                const S xij = xv[(static_cast<std::size_t>(c) * h + i) * wd + j];
                for (int o = 0; o < cout; ++o) {
                    for (int u = 0; u < kh; ++u) {
                        const int y = i * sh + u - ph;
                        if (y < 0 || y >= ho) continue;
                        for (int v = 0; v < kw; ++v) {
                            const int z = j * sw + v - pw;
                            if (z < 0 || z >= wo) continue;
                            out[(static_cast<std::size_t>(o) * ho + y) * wo + z] +=
                                xij *
                                wv[((static_cast<std::size_t>(c) * cout + o) * kh + u) * kw + v];
                        }
                    }
                }
            }
        }
    }
    return tp.push(std::move(out), {x.id, w.id, b.id},
                   [=](Tape<S>& t, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& xv = t.node(nd.parents[0]).value;
                       const Tensor<S>& wv = t.node(nd.parents[1]).value;
                       Tensor<S>& gx = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gw = flow[static_cast<std::size_t>(nd.parents[1])];
                       Tensor<S>& gb = flow[static_cast<std::size_t>(nd.parents[2])];
                       for (int o = 0; o < cout; ++o) {
                           for (int y = 0; y < ho; ++y) {
                               for (int z = 0; z < wo; ++z) {
                                   gb[static_cast<std::size_t>(o)] +=
                                       g[(static_cast<std::size_t>(o) * ho + y) * wo + z];
                               }
                           }
                       }
                       for (int c = 0; c < cin; ++c) {
                           for (int i = 0; i < h; ++i) {
                               for (int j = 0; j < wd; ++j) {
                                   const std::size_t xi =
                                       (static_cast<std::size_t>(c) * h + i) * wd + j;
                                   for (int o = 0; o < cout; ++o) {
                                       for (int u = 0; u < kh; ++u) {
                                           const int y = i * sh + u - ph;
                                           if (y < 0 || y >= ho) continue;
                                           for (int v = 0; v < kw; ++v) {
                                               const int z = j * sw + v - pw;
                                               if (z < 0 || z >= wo) continue;
                                               const S go =
                                                   g[(static_cast<std::size_t>(o) * ho + y) * wo +
                                                     z];
                                               const std::size_t wi =
                                                   ((static_cast<std::size_t>(c) * cout + o) * kh +
                                                    u) * kw + v;
                                               gx[xi] += go * wv[wi];
                                               gw[wi] += go * xv[xi];
                                           }
                                       }
                                   }
                               }
                           }
                       }
                   });
}

// ---- normalization ---------------------------------------------------------

/// Normalizes each channel (leading axis) over its remaining axes, then scales
/// and shifts: gamma * (x - mu)/sqrt(var + eps) + beta. Variance is biased
/// (divide by N). A channel with a single element has no spread to normalize,
/// so spatial size 1 is rejected.
template <class S>
Var<S> instance_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
    Tape<S>& tp = detail::same_tape(x, gamma);
    detail::same_tape(x, beta);
    const Tensor<S>& xv = x.value();
    const Tensor<S>& gv = gamma.value();
    const Tensor<S>& bv = beta.value();
    if (xv.rank() < 2) {
        throw ShapeError("instance_norm requires rank >= 2, got " + dims_str(xv.dims()));
    }
    const int ch = xv.dim(0);
    const std::size_t n = xv.size() / static_cast<std::size_t>(ch);
    if (n < 2) {
        throw ShapeError("instance_norm spatial size must be >= 2, got " + dims_str(xv.dims()));
    }
    if (gv.rank() != 1 || gv.dim(0) != ch || bv.rank() != 1 || bv.dim(0) != ch) {
        throw ShapeError("instance_norm scale/shift must be [" + std::to_string(ch) + "], got " +
                         dims_str(gv.dims()) + " and " + dims_str(bv.dims()));
    }

    std::vector<S> mu(static_cast<std::size_t>(ch)), inv(static_cast<std::size_t>(ch));
    Tensor<S> out(xv.dims());
    const S invn = S(1) / static_cast<S>(n);
    for (int c = 0; c < ch; ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * n;
        S m = 0;
        for (std::size_t i = 0; i < n; ++i) m += xv[off + i];
        m *= invn;
        S var = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const S d = xv[off + i] - m;
            var += d * d;
        }
        var *= invn;
        const S iv = S(1) / std::sqrt(var + eps);
        mu[static_cast<std::size_t>(c)] = m;
        inv[static_cast<std::size_t>(c)] = iv;
        const S gc = gv[static_cast<std::size_t>(c)];
        const S bc = bv[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < n; ++i) {
            out[off + i] = gc * (xv[off + i] - m) * iv + bc;
        }
    }
    return tp.push(std::move(out), {x.id, gamma.id, beta.id},
                   [ch, n, invn, mu = std::move(mu), inv = std::move(inv)](
                       Tape<S>& t, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& xv = t.node(nd.parents[0]).value;
                       const Tensor<S>& gv = t.node(nd.parents[1]).value;
                       Tensor<S>& gx = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gg = flow[static_cast<std::size_t>(nd.parents[1])];
                       Tensor<S>& gb = flow[static_cast<std::size_t>(nd.parents[2])];
                       for (int c = 0; c < ch; ++c) {
                           const std::size_t off = static_cast<std::size_t>(c) * n;
                           const S m = mu[static_cast<std::size_t>(c)];
                           const S iv = inv[static_cast<std::size_t>(c)];
                           const S gc = gv[static_cast<std::size_t>(c)];
                           S sum_gy = 0, sum_gyy = 0;
                           for (std::size_t i = 0; i < n; ++i) {
                               const S y = (xv[off + i] - m) * iv;
                               const S gi = g[off + i];
                               gg[static_cast<std::size_t>(c)] += gi * y;
                               gb[static_cast<std::size_t>(c)] += gi;
                               sum_gy += gi * gc;
                               sum_gyy += gi * gc * y;
                           }
                           const S mean_gy = sum_gy * invn;
                           const S mean_gyy = sum_gyy * invn;
                           for (std::size_t i = 0; i < n; ++i) {
                               const S y = (xv[off + i] - m) * iv;
                               gx[off + i] += iv * (g[off + i] * gc - mean_gy - y * mean_gyy);
                           }
                       }
                   });
}

/// Normalizes each row of a rank-2 tensor over its last axis, then scales and
/// shifts per column. Variance is biased (divide by D).
template <class S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
    Tape<S>& tp = detail::same_tape(x, gamma);
    detail::same_tape(x, beta);
    const Tensor<S>& xv = x.value();
    const Tensor<S>& gv = gamma.value();
    const Tensor<S>& bv = beta.value();
    detail::require_rank2("layer_norm", xv);
    const int rows = xv.dim(0), d = xv.dim(1);
    if (gv.rank() != 1 || gv.dim(0) != d || bv.rank() != 1 || bv.dim(0) != d) {
        throw ShapeError("layer_norm scale/shift must be [" + std::to_string(d) + "], got " +
                         dims_str(gv.dims()) + " and " + dims_str(bv.dims()));
    }

    std::vector<S> mu(static_cast<std::size_t>(rows)), inv(static_cast<std::size_t>(rows));
    Tensor<S> out(xv.dims());
    const S invd = S(1) / static_cast<S>(d);
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * d;
        S m = 0;
        for (int j = 0; j < d; ++j) m += xv[off + j];
        m *= invd;
        S var = 0;
        for (int j = 0; j < d; ++j) {
            const S dv = xv[off + j] - m;
            var += dv * dv;
        }
        var *= invd;
        const S iv = S(1) / std::sqrt(var + eps);
        mu[static_cast<std::size_t>(r)] = m;
        inv[static_cast<std::size_t>(r)] = iv;
        for (int j = 0; j < d; ++j) {
            out[off + j] = gv[static_cast<std::size_t>(j)] * (xv[off + j] - m) * iv +
                           bv[static_cast<std::size_t>(j)];
        }
    }
    return tp.push(std::move(out), {x.id, gamma.id, beta.id},
                   [rows, d, invd, mu = std::move(mu), inv = std::move(inv)](
                       Tape<S>& t, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& xv = t.node(nd.parents[0]).value;
                       const Tensor<S>& gv = t.node(nd.parents[1]).value;
                       Tensor<S>& gx = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gg = flow[static_cast<std::size_t>(nd.parents[1])];
                       Tensor<S>& gb = flow[static_cast<std::size_t>(nd.parents[2])];
                       for (int r = 0; r < rows; ++r) {
                           const std::size_t off = static_cast<std::size_t>(r) * d;
                           const S m = mu[static_cast<std::size_t>(r)];
                           const S iv = inv[static_cast<std::size_t>(r)];
                           S sum_gy = 0, sum_gyy = 0;
                           for (int j = 0; j < d; ++j) {
                               const S y = (xv[off + j] - m) * iv;
                               const S gi = g[off + j];
                               gg[static_cast<std::size_t>(j)] += gi * y;
                               gb[static_cast<std::size_t>(j)] += gi;
                               sum_gy += gi * gv[static_cast<std::size_t>(j)];
                               sum_gyy += gi * gv[static_cast<std::size_t>(j)] * y;
                           }
                           const S mean_gy = sum_gy * invd;
                           const S mean_gyy = sum_gyy * invd;
                           for (int j = 0; j < d; ++j) {
                               const S y = (xv[off + j] - m) * iv;
                               gx[off + j] +=
                                   iv * (g[off + j] * gv[static_cast<std::size_t>(j)] - mean_gy -
                                         y * mean_gyy);
                           }
                       }
                   });
}

// ---- resampling ------------------------------------------------------------

/// Nearest-neighbour resample of [C,H,W] to [C,Ht,Wt]; source index is
/// floor(i*H/Ht). Identity when the sizes already match.
template <class S>
Var<S> upsample_nearest(Var<S> x, int ht, int wt) {
    Tape<S>& tp = *x.tape;
    const Tensor<S>& xv = x.value();
    detail::require_rank("upsample_nearest", xv, 3);
    if (ht < 1 || wt < 1) {
        throw ShapeError("upsample_nearest target " + std::to_string(ht) + "x" +
                         std::to_string(wt) + " is not positive");
    }
    const int ch = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    Tensor<S> out({ch, ht, wt});
    for (int c = 0; c < ch; ++c) {
        for (int i = 0; i < ht; ++i) {
            const int si = static_cast<int>((static_cast<std::int64_t>(i) * h) / ht);
            for (int j = 0; j < wt; ++j) {
                const int sj = static_cast<int>((static_cast<std::int64_t>(j) * wd) / wt);
                out[(static_cast<std::size_t>(c) * ht + i) * wt + j] =
                    xv[(static_cast<std::size_t>(c) * h + si) * wd + sj];
            }
        }
    }
    return tp.push(std::move(out), {x.id},
                   [ch, h, wd, ht, wt](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& gx = flow[static_cast<std::size_t>(nd.parents[0])];
                       for (int c = 0; c < ch; ++c) {
                           for (int i = 0; i < ht; ++i) {
                               const int si = static_cast<int>((static_cast<std::int64_t>(i) * h) / ht);
                               for (int j = 0; j < wt; ++j) {
                                   const int sj =
                                       static_cast<int>((static_cast<std::int64_t>(j) * wd) / wt);
                                   gx[(static_cast<std::size_t>(c) * h + si) * wd + sj] +=
                                       g[(static_cast<std::size_t>(c) * ht + i) * wt + j];
                               }
                           }
                       }
                   });
}

// ---- token / grid conversion -----------------------------------------------

/// Flattens a [D,Hp,Wp] feature grid into tokens, prepends a learned class
/// token and adds position embeddings. Grid cell (i,j) becomes token
/// 1 + i*Wp + j (row-major); token 0 is the class token. Output [Hp*Wp+1, D].
template <class S>
Var<S> tokens_from_grid(Var<S> grid, Var<S> cls, Var<S> pos) {
    Tape<S>& tp = detail::same_tape(grid, cls);
    detail::same_tape(grid, pos);
    const Tensor<S>& gv = grid.value();
    const Tensor<S>& cv = cls.value();
    const Tensor<S>& pv = pos.value();
    detail::require_rank("tokens_from_grid", gv, 3);
    const int d = gv.dim(0), hp = gv.dim(1), wp = gv.dim(2);
    const int ntok = hp * wp + 1;
    if (cv.rank() != 1 || cv.dim(0) != d) {
        throw ShapeError("class token must be [" + std::to_string(d) + "], got " +
                         dims_str(cv.dims()));
    }
    if (pv.rank() != 2 || pv.dim(0) != ntok || pv.dim(1) != d) {
        throw ShapeError("position embedding must be [" + std::to_string(ntok) + "x" +
                         std::to_string(d) + "], got " + dims_str(pv.dims()));
    }
    Tensor<S> out({ntok, d});
    for (int j = 0; j < d; ++j) {
        out[static_cast<std::size_t>(j)] = cv[static_cast<std::size_t>(j)] +
                                           pv[static_cast<std::size_t>(j)];
    }
    const std::size_t hw = static_cast<std::size_t>(hp) * wp;
    for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t row = (p + 1) * static_cast<std::size_t>(d);
        for (int j = 0; j < d; ++j) {
            out[row + j] = gv[static_cast<std::size_t>(j) * hw + p] + pv[row + j];
        }
    }
    return tp.push(std::move(out), {grid.id, cls.id, pos.id},
                   [d, hw](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& ggrid = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gcls = flow[static_cast<std::size_t>(nd.parents[1])];
                       Tensor<S>& gpos = flow[static_cast<std::size_t>(nd.parents[2])];
                       for (std::size_t i = 0; i < g.size(); ++i) gpos[i] += g[i];
                       for (int j = 0; j < d; ++j) gcls[static_cast<std::size_t>(j)] +=
                           g[static_cast<std::size_t>(j)];
                       for (std::size_t p = 0; p < hw; ++p) {
                           const std::size_t row = (p + 1) * static_cast<std::size_t>(d);
                           for (int j = 0; j < d; ++j) {
                               ggrid[static_cast<std::size_t>(j) * hw + p] += g[row + j];
                           }
                       }
                   });
}

/// Inverse of the token flattening (without the class token): [Hp*Wp, D]
/// tokens back to a [D,Hp,Wp] grid.
template <class S>
Var<S> grid_from_tokens(Var<S> tokens, int hp, int wp) {
    Tape<S>& tp = *tokens.tape;
    const Tensor<S>& tv = tokens.value();
    detail::require_rank2("grid_from_tokens", tv);
    if (hp < 1 || wp < 1 || tv.dim(0) != hp * wp) {
        throw ShapeError("grid_from_tokens needs " + std::to_string(hp) + "*" +
                         std::to_string(wp) + " tokens, got " + dims_str(tv.dims()));
    }
    const int d = tv.dim(1);
    const std::size_t hw = static_cast<std::size_t>(hp) * wp;
    Tensor<S> out({d, hp, wp});
    for (std::size_t p = 0; p < hw; ++p) {
        for (int j = 0; j < d; ++j) {
            out[static_cast<std::size_t>(j) * hw + p] = tv[p * static_cast<std::size_t>(d) + j];
        }
    }
    return tp.push(std::move(out), {tokens.id},
                   [d, hw](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& gt = flow[static_cast<std::size_t>(nd.parents[0])];
                       for (std::size_t p = 0; p < hw; ++p) {
                           for (int j = 0; j < d; ++j) {
                               gt[p * static_cast<std::size_t>(d) + j] +=
                                   g[static_cast<std::size_t>(j) * hw + p];
                           }
                       }
                   });
}

} // namespace eegmtl
