#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eegmtl/autodiff.hpp"
#include "eegmtl/nn_ops.hpp"
#include "eegmtl/ops.hpp"
#include "eegmtl/rng.hpp"

namespace eegmtl {

// Every layer derives its init draws from root.child(<full parameter name>),
// so a parameter's init depends only on its own name and the seed, never on
// which other modules exist in the model.

template <class S>
struct Linear {
    Parameter<S> w;   // [in, out]; applied as rows(x) * w + b
    Parameter<S> b;   // [out]

    Linear(const std::string& name, int in, int out, const RngStream& root)
        : w(name + ".w",
            random_normal<S>({in, out}, root.child(name + ".w"), 0.0, 1.0 / std::sqrt(double(in)))),
          b(name + ".b", Tensor<S>({out})) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        return add_rowvec(matmul(x, ctx.use(w)), ctx.use(b));
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <class S>
struct Conv2dLayer {
    Parameter<S> w;   // [cout, cin, kh, kw]
    Parameter<S> b;   // [cout]
    int sh, sw, ph, pw;

    Conv2dLayer(const std::string& name, int cin, int cout, int kh, int kw, int sh_, int sw_,
                int ph_, int pw_, const RngStream& root)
        : w(name + ".w", random_normal<S>({cout, cin, kh, kw}, root.child(name + ".w"), 0.0,
                                          1.0 / std::sqrt(double(cin) * kh * kw))),
          b(name + ".b", Tensor<S>({cout})),
          sh(sh_), sw(sw_), ph(ph_), pw(pw_) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        return conv2d(x, ctx.use(w), ctx.use(b), sh, sw, ph, pw);
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <class S>
struct DepthwiseConv2dLayer {
    Parameter<S> w;   // [c, mult, kh, kw]
    Parameter<S> b;   // [c*mult]
    int sh, sw, ph, pw;

    DepthwiseConv2dLayer(const std::string& name, int c, int mult, int kh, int kw, int sh_,
                         int sw_, int ph_, int pw_, const RngStream& root)
        : w(name + ".w", random_normal<S>({c, mult, kh, kw}, root.child(name + ".w"), 0.0,
                                          1.0 / std::sqrt(double(kh) * kw))),
          b(name + ".b", Tensor<S>({c * mult})),
          sh(sh_), sw(sw_), ph(ph_), pw(pw_) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        return depthwise_conv2d(x, ctx.use(w), ctx.use(b), sh, sw, ph, pw);
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <class S>
struct TransposedConv2dLayer {
    Parameter<S> w;   // [cin, cout, kh, kw]
    Parameter<S> b;   // [cout]
    int sh, sw, ph, pw;

    TransposedConv2dLayer(const std::string& name, int cin, int cout, int kh, int kw, int sh_,
                          int sw_, int ph_, int pw_, const RngStream& root)
        : w(name + ".w", random_normal<S>({cin, cout, kh, kw}, root.child(name + ".w"), 0.0,
                                          1.0 / std::sqrt(double(cin) * kh * kw))),
          b(name + ".b", Tensor<S>({cout})),
          sh(sh_), sw(sw_), ph(ph_), pw(pw_) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        return transposed_conv2d(x, ctx.use(w), ctx.use(b), sh, sw, ph, pw);
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <class S>
struct LayerNormLayer {
    Parameter<S> gamma;
    Parameter<S> beta;
    S eps;

    LayerNormLayer(const std::string& name, int d, S eps_)
        : gamma(name + ".g", Tensor<S>::full({d}, S(1))),
          beta(name + ".b", Tensor<S>({d})),
          eps(eps_) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        return layer_norm(x, ctx.use(gamma), ctx.use(beta), eps);
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

template <class S>
struct InstanceNormLayer {
    Parameter<S> gamma;
    Parameter<S> beta;
    S eps;

    InstanceNormLayer(const std::string& name, int c, S eps_)
        : gamma(name + ".g", Tensor<S>::full({c}, S(1))),
          beta(name + ".b", Tensor<S>({c})),
          eps(eps_) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        return instance_norm(x, ctx.use(gamma), ctx.use(beta), eps);
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

/// Learned class token plus position table; turns a [D,Hp,Wp] feature grid
/// into a [Hp*Wp+1, D] token sequence.
template <class S>
struct PatchEmbed {
    Parameter<S> cls;   // [D]
    Parameter<S> pos;   // [Hp*Wp+1, D]
    int hp, wp;

    PatchEmbed(const std::string& name, int d, int hp_, int wp_, const RngStream& root)
        : cls(name + ".cls", random_normal<S>({d}, root.child(name + ".cls"), 0.0, 0.02)),
          pos(name + ".pos",
              random_normal<S>({hp_ * wp_ + 1, d}, root.child(name + ".pos"), 0.0, 0.02)),
          hp(hp_), wp(wp_) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> grid) {
        return tokens_from_grid(grid, ctx.use(cls), ctx.use(pos));
    }

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&cls);
        out.push_back(&pos);
    }
};

template <class S>
struct MultiHeadAttention {
    Linear<S> wq, wk, wv, wo;
    int heads, dhead;

    static int checked_heads(int d, int heads) {
        if (heads < 1 || d % heads != 0) {
            throw ShapeError("attention width " + std::to_string(d) + " not divisible by " +
                             std::to_string(heads) + " heads");
        }
        return heads;
    }

    MultiHeadAttention(const std::string& name, int d, int heads_, const RngStream& root)
        : wq(name + ".wq", d, d, root),
          wk(name + ".wk", d, d, root),
          wv(name + ".wv", d, d, root),
          wo(name + ".wo", d, d, root),
          heads(checked_heads(d, heads_)), dhead(d / heads) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        Var<S> q = wq(ctx, x);
        Var<S> k = wk(ctx, x);
        Var<S> v = wv(ctx, x);
        const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(dhead));
        std::vector<Var<S>> outs;
        outs.reserve(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const int c0 = h * dhead, c1 = (h + 1) * dhead;
            Var<S> qh = slice_cols(q, c0, c1);
            Var<S> kh = slice_cols(k, c0, c1);
            Var<S> vh = slice_cols(v, c0, c1);
            Var<S> att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_d));
            outs.push_back(matmul(att, vh));
        }
        return wo(ctx, concat_cols(outs));
    }

    void collect(std::vector<Parameter<S>*>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

template <class S>
struct MlpBlock {
    Linear<S> fc1, fc2;

    MlpBlock(const std::string& name, int d, int hidden, const RngStream& root)
        : fc1(name + ".fc1", d, hidden, root), fc2(name + ".fc2", hidden, d, root) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) { return fc2(ctx, gelu(fc1(ctx, x))); }

    void collect(std::vector<Parameter<S>*>& out) {
        fc1.collect(out);
        fc2.collect(out);
    }
};

/// Pre-norm transformer block: x + attn(ln1(x)), then h + mlp(ln2(h)).
template <class S>
struct EncoderBlock {
    LayerNormLayer<S> ln1;
    MultiHeadAttention<S> attn;
    LayerNormLayer<S> ln2;
    MlpBlock<S> mlp;

    EncoderBlock(const std::string& name, int d, int heads, int mlp_ratio, S eps,
                 const RngStream& root)
        : ln1(name + ".ln1", d, eps),
          attn(name + ".attn", d, heads, root),
          ln2(name + ".ln2", d, eps),
          mlp(name + ".mlp", d, d * mlp_ratio, root) {}

    Var<S> operator()(GraphContext<S>& ctx, Var<S> x) {
        Var<S> h = add(x, attn(ctx, ln1(ctx, x)));
        return add(h, mlp(ctx, ln2(ctx, h)));
    }

    void collect(std::vector<Parameter<S>*>& out) {
        ln1.collect(out);
        attn.collect(out);
        ln2.collect(out);
        mlp.collect(out);
    }
};

} // namespace eegmtl
