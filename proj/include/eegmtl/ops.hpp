#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eegmtl/autodiff.hpp"
#include "eegmtl/rng.hpp"
#include "eegmtl/tensor.hpp"

namespace eegmtl {

namespace detail {

template <class S>
inline Tape<S>& same_tape(Var<S> a, Var<S> b) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw ShapeError("operands belong to different tapes");
    }
    return *a.tape;
}

template <class S>
inline void require_same_dims(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_dims(b)) {
        throw ShapeError(std::string(op) + " requires equal shapes, got " + dims_str(a.dims()) +
                         " and " + dims_str(b.dims()));
    }
}

template <class S>
inline void require_rank2(const char* op, const Tensor<S>& t) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + " requires a rank-2 tensor, got " + dims_str(t.dims()));
    }
}

} // namespace detail

// ---- elementwise binary ----------------------------------------------------

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
    Tape<S>& tp = detail::same_tape(a, b);
    const Tensor<S>& av = a.value();
    const Tensor<S>& bv = b.value();
    detail::require_same_dims("add", av, bv);
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return tp.push(std::move(out), {a.id, b.id}, [](Tape<S>&, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        Tensor<S>& gb = flow[static_cast<std::size_t>(n.parents[1])];
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
    Tape<S>& tp = detail::same_tape(a, b);
    const Tensor<S>& av = a.value();
    const Tensor<S>& bv = b.value();
    detail::require_same_dims("sub", av, bv);
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return tp.push(std::move(out), {a.id, b.id}, [](Tape<S>&, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        Tensor<S>& gb = flow[static_cast<std::size_t>(n.parents[1])];
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
    Tape<S>& tp = detail::same_tape(a, b);
    const Tensor<S>& av = a.value();
    const Tensor<S>& bv = b.value();
    detail::require_same_dims("mul", av, bv);
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return tp.push(std::move(out), {a.id, b.id}, [](Tape<S>& t, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        const Tensor<S>& av = t.node(n.parents[0]).value;
        const Tensor<S>& bv = t.node(n.parents[1]).value;
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        Tensor<S>& gb = flow[static_cast<std::size_t>(n.parents[1])];
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    });
}

// ---- scalar broadcast ------------------------------------------------------

template <class S>
Var<S> add_scalar(Var<S> a, S c) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    return tp.push(std::move(out), {a.id}, [](Tape<S>&, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    return tp.push(std::move(out), {a.id}, [c](Tape<S>&, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
}

template <class S>
Var<S> square(Var<S> a) {
    return mul(a, a);
}

// ---- activations -----------------------------------------------------------

template <class S>
Var<S> relu(Var<S> a) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > S(0) ? av[i] : S(0);
    return tp.push(std::move(out), {a.id}, [](Tape<S>& t, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        const Tensor<S>& av = t.node(n.parents[0]).value;
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] > S(0)) ga[i] += g[i];
        }
    });
}

namespace detail {

template <class S>
inline S gauss_cdf(S x) {
    return S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475244)));
}

template <class S>
inline S gauss_pdf(S x) {
    return S(0.3989422804014326779) * std::exp(S(-0.5) * x * x);
}

} // namespace detail

/// Exact (erf based) Gaussian error linear unit.
template <class S>
Var<S> gelu(Var<S> a) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * detail::gauss_cdf(av[i]);
    return tp.push(std::move(out), {a.id}, [](Tape<S>& t, const Node<S>& n, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(n.id)];
        const Tensor<S>& av = t.node(n.parents[0]).value;
        Tensor<S>& ga = flow[static_cast<std::size_t>(n.parents[0])];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const S x = av[i];
            ga[i] += g[i] * (detail::gauss_cdf(x) + x * detail::gauss_pdf(x));
        }
    });
}

// ---- matrix ops ------------------------------------------------------------

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
    Tape<S>& tp = detail::same_tape(a, b);
    const Tensor<S>& av = a.value();
    const Tensor<S>& bv = b.value();
    detail::require_rank2("matmul", av);
    detail::require_rank2("matmul", bv);
    if (av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul inner dimensions differ: " + dims_str(av.dims()) + " x " +
                         dims_str(bv.dims()));
    }
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<S> out({m, n});
    mat_view(out, m, n).noalias() = mat_view(av, m, k) * mat_view(bv, k, n);
    return tp.push(std::move(out), {a.id, b.id},
                   [m, k, n](Tape<S>& t, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& av = t.node(nd.parents[0]).value;
                       const Tensor<S>& bv = t.node(nd.parents[1]).value;
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gb = flow[static_cast<std::size_t>(nd.parents[1])];
                       auto G = mat_view(g, m, n);
                       mat_view(ga, m, k).noalias() += G * mat_view(bv, k, n).transpose();
                       mat_view(gb, k, n).noalias() += mat_view(av, m, k).transpose() * G;
                   });
}

template <class S>
Var<S> transpose(Var<S> a) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    detail::require_rank2("transpose", av);
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out({n, m});
    mat_view(out, n, m) = mat_view(av, m, n).transpose();
    return tp.push(std::move(out), {a.id}, [m, n](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
        Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
        mat_view(ga, m, n) += mat_view(g, n, m).transpose();
    });
}

/// Adds a length-n row vector to every row of an m x n matrix.
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> v) {
    Tape<S>& tp = detail::same_tape(a, v);
    const Tensor<S>& av = a.value();
    const Tensor<S>& vv = v.value();
    detail::require_rank2("add_rowvec", av);
    if (vv.rank() != 1 || vv.dim(0) != av.dim(1)) {
        throw ShapeError("add_rowvec needs a length-" + std::to_string(av.dim(1)) +
                         " vector, got " + dims_str(vv.dims()));
    }
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] =
            av[static_cast<std::size_t>(i) * n + j] + vv[static_cast<std::size_t>(j)];
    }
    return tp.push(std::move(out), {a.id, v.id},
                   [m, n](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       Tensor<S>& gv = flow[static_cast<std::size_t>(nd.parents[1])];
                       for (int i = 0; i < m; ++i) {
                           for (int j = 0; j < n; ++j) {
                               const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                               ga[idx] += g[idx];
                               gv[static_cast<std::size_t>(j)] += g[idx];
                           }
                       }
                   });
}

// ---- shape ops -------------------------------------------------------------

template <class S>
Var<S> reshape(Var<S> a, Dims dims) {
    Tape<S>& tp = *a.tape;
    Tensor<S> out = a.value().reshaped(dims);
    return tp.push(std::move(out), {a.id}, [](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
        const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
        Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

/// Rows [r0, r1) of a rank-2 tensor.
template <class S>
Var<S> slice_rows(Var<S> a, int r0, int r1) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    detail::require_rank2("slice_rows", av);
    const int m = av.dim(0), n = av.dim(1);
    if (r0 < 0 || r1 > m || r0 >= r1) {
        throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of range for " + dims_str(av.dims()));
    }
    Tensor<S> out({r1 - r0, n});
    std::copy(av.data() + static_cast<std::size_t>(r0) * n,
              av.data() + static_cast<std::size_t>(r1) * n, out.data());
    return tp.push(std::move(out), {a.id},
                   [r0, n](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       const std::size_t off = static_cast<std::size_t>(r0) * n;
                       for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
                   });
}

/// Columns [c0, c1) of a rank-2 tensor.
template <class S>
Var<S> slice_cols(Var<S> a, int c0, int c1) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    detail::require_rank2("slice_cols", av);
    const int m = av.dim(0), n = av.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1) {
        throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of range for " + dims_str(av.dims()));
    }
    const int w = c1 - c0;
    Tensor<S> out({m, w});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) {
            out[static_cast<std::size_t>(i) * w + j] =
                av[static_cast<std::size_t>(i) * n + c0 + j];
        }
    }
    return tp.push(std::move(out), {a.id},
                   [m, n, c0, w](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       for (int i = 0; i < m; ++i) {
                           for (int j = 0; j < w; ++j) {
                               ga[static_cast<std::size_t>(i) * n + c0 + j] +=
                                   g[static_cast<std::size_t>(i) * w + j];
                           }
                       }
                   });
}

/// Horizontal concatenation of rank-2 tensors with equal row counts.
template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of zero tensors");
    Tape<S>& tp = *parts[0].tape;
    const int m = parts[0].value().dim(0);
    int n = 0;
    std::vector<std::int32_t> ids;
    std::vector<int> widths;
    for (const Var<S>& p : parts) {
        if (p.tape != &tp) throw ShapeError("operands belong to different tapes");
        detail::require_rank2("concat_cols", p.value());
        if (p.value().dim(0) != m) {
            throw ShapeError("concat_cols row counts differ: " + dims_str(parts[0].value().dims()) +
                             " vs " + dims_str(p.value().dims()));
        }
        ids.push_back(p.id);
        widths.push_back(p.value().dim(1));
        n += p.value().dim(1);
    }
    Tensor<S> out({m, n});
    int off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor<S>& pv = parts[k].value();
        const int w = widths[k];
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) {
                out[static_cast<std::size_t>(i) * n + off + j] =
                    pv[static_cast<std::size_t>(i) * w + j];
            }
        }
        off += w;
    }
    return tp.push(std::move(out), std::move(ids),
                   [m, n, widths](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       int off = 0;
                       for (std::size_t k = 0; k < nd.parents.size(); ++k) {
                           Tensor<S>& gp = flow[static_cast<std::size_t>(nd.parents[k])];
                           const int w = widths[k];
                           for (int i = 0; i < m; ++i) {
                               for (int j = 0; j < w; ++j) {
                                   gp[static_cast<std::size_t>(i) * w + j] +=
                                       g[static_cast<std::size_t>(i) * n + off + j];
                               }
                           }
                           off += w;
                       }
                   });
}

// ---- reductions ------------------------------------------------------------

template <class S>
Var<S> sum_all(Var<S> a) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    S s = 0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    return tp.push(Tensor<S>::scalar(s), {a.id}, [](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
        const S g = flow[static_cast<std::size_t>(nd.id)][0];
        Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

template <class S>
Var<S> mean_all(Var<S> a) {
    const S inv = S(1) / static_cast<S>(a.value().size());
    return scale(sum_all(a), inv);
}

namespace detail {

inline void split_at_axis(const Dims& dims, int axis, std::size_t& outer, std::size_t& mid,
                          std::size_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(dims.size())) {
        throw ShapeError("reduction axis " + std::to_string(axis) + " out of range for " +
                         dims_str(dims));
    }
    outer = mid = inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(dims[i]);
    mid = static_cast<std::size_t>(dims[static_cast<std::size_t>(axis)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < dims.size(); ++i) {
        inner *= static_cast<std::size_t>(dims[i]);
    }
}

inline Dims erase_axis(const Dims& dims, int axis) {
    Dims out = dims;
    out.erase(out.begin() + axis);
    if (out.empty()) out = {1};
    return out;
}

} // namespace detail

/// Sums over one axis; the axis is removed from the shape (a rank-1 input
/// collapses to a scalar).
template <class S>
Var<S> sum_axis(Var<S> a, int axis) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    std::size_t outer, mid, inner;
    detail::split_at_axis(av.dims(), axis, outer, mid, inner);
    Tensor<S> out(detail::erase_axis(av.dims(), axis));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t m = 0; m < mid; ++m) {
            for (std::size_t i = 0; i < inner; ++i) {
                out[o * inner + i] += av[(o * mid + m) * inner + i];
            }
        }
    }
    return tp.push(std::move(out), {a.id},
                   [outer, mid, inner](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       for (std::size_t o = 0; o < outer; ++o) {
                           for (std::size_t m = 0; m < mid; ++m) {
                               for (std::size_t i = 0; i < inner; ++i) {
                                   ga[(o * mid + m) * inner + i] += g[o * inner + i];
                               }
                           }
                       }
                   });
}

template <class S>
Var<S> mean_axis(Var<S> a, int axis) {
    std::size_t outer, mid, inner;
    detail::split_at_axis(a.value().dims(), axis, outer, mid, inner);
    return scale(sum_axis(a, axis), S(1) / static_cast<S>(mid));
}

// ---- softmax ---------------------------------------------------------------

/// Row-wise softmax of a rank-2 tensor, max-subtracted for stability.
template <class S>
Var<S> softmax_rows(Var<S> a) {
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    detail::require_rank2("softmax_rows", av);
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out({m, n});
    for (int i = 0; i < m; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        S mx = av[off];
        for (int j = 1; j < n; ++j) mx = std::max(mx, av[off + j]);
        S z = 0;
        for (int j = 0; j < n; ++j) {
            const S e = std::exp(av[off + j] - mx);
            out[off + j] = e;
            z += e;
        }
        const S inv = S(1) / z;
        for (int j = 0; j < n; ++j) out[off + j] *= inv;
    }
    return tp.push(std::move(out), {a.id},
                   [m, n](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       const Tensor<S>& y = nd.value;
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       for (int i = 0; i < m; ++i) {
                           const std::size_t off = static_cast<std::size_t>(i) * n;
                           S dot = 0;
                           for (int j = 0; j < n; ++j) dot += g[off + j] * y[off + j];
                           for (int j = 0; j < n; ++j) {
                               ga[off + j] += y[off + j] * (g[off + j] - dot);
                           }
                       }
                   });
}

// ---- dropout ---------------------------------------------------------------

/// Inverted dropout. The mask is a pure function of the stream and element
/// index, so a fixed stream reproduces the same mask. In eval mode this is the
/// identity (returns the input var unchanged).
template <class S>
Var<S> dropout(Var<S> a, double p, bool train, RngStream stream) {
    if (p < 0.0 || p >= 1.0) {
        throw ShapeError("dropout rate must be in [0,1), got " + std::to_string(p));
    }
    if (!train || p == 0.0) return a;
    Tape<S>& tp = *a.tape;
    const Tensor<S>& av = a.value();
    const S keep_scale = S(1.0 / (1.0 - p));
    Tensor<S> mask(av.dims());
    Tensor<S> out(av.dims());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const S m = stream.uniform(i) >= p ? keep_scale : S(0);
        mask[i] = m;
        out[i] = av[i] * m;
    }
    return tp.push(std::move(out), {a.id},
                   [mask = std::move(mask)](Tape<S>&, const Node<S>& nd, Flow<S>& flow) {
                       const Tensor<S>& g = flow[static_cast<std::size_t>(nd.id)];
                       Tensor<S>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                   });
}

// ---- losses ----------------------------------------------------------------

/// Mean squared error over all elements of two equal-shaped tensors.
template <class S>
Var<S> mse(Var<S> pred, Var<S> target) {
    detail::require_same_dims("mse", pred.value(), target.value());
    return mean_all(square(sub(pred, target)));
}

} // namespace eegmtl
