#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eegmtl/data.hpp"
#include "eegmtl/gradcheck.hpp"
#include "eegmtl/model.hpp"

namespace eegmtl {

struct CheckCase {
    std::string name;
    GradCheckReport report;
};

namespace detail {

/// Owns the parameters a check closes over, so the LossBuilder stays valid
/// across repeated evaluations.
struct CheckRig {
    std::vector<std::shared_ptr<Parameter<double>>> owned;
    std::vector<Parameter<double>*> layer_params; // owned by captured layer objects

    Parameter<double>& uniform(const std::string& name, Dims dims, const RngStream& st,
                               double lo = -1.0, double hi = 1.0) {
        owned.push_back(std::make_shared<Parameter<double>>(
            name, random_uniform<double>(std::move(dims), st.child(name), lo, hi)));
        return *owned.back();
    }

    /// Values in +-[0.2, 1.2]: bounded away from zero so kinked ops (relu)
    /// see no sign flips within the finite-difference step.
    Parameter<double>& signed_away_from_zero(const std::string& name, Dims dims,
                                             const RngStream& st) {
        Tensor<double> t = random_uniform<double>(dims, st.child(name), 0.2, 1.2);
        const RngStream sg = st.child(name + ".sign");
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (sg.uniform(i) < 0.5) t[i] = -t[i];
        }
        owned.push_back(std::make_shared<Parameter<double>>(name, std::move(t)));
        return *owned.back();
    }

    std::vector<Parameter<double>*> ptrs() const {
        std::vector<Parameter<double>*> out;
        out.reserve(owned.size() + layer_params.size());
        for (const auto& p : owned) out.push_back(p.get());
        out.insert(out.end(), layer_params.begin(), layer_params.end());
        return out;
    }
};

inline CheckCase run_case(const std::string& name, const std::shared_ptr<CheckRig>& rig,
                          LossBuilder f, double eps, double tol) {
    return CheckCase{name, grad_check(f, rig->ptrs(), eps, tol)};
}

} // namespace detail

/// Gradient checks for each primitive and layer on small random instances.
/// Deterministic: inputs come from fixed-seed streams.
inline std::vector<CheckCase> run_layer_gradient_checks(double eps, double tol,
                                                        bool inject_bug = false) {
    using detail::CheckRig;
    using detail::run_case;
    const RngStream seed(0xC11EC55ull);
    std::vector<CheckCase> out;

    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {3, 4}, seed.child("elementwise"));
        auto& b = rig->uniform("b", {3, 4}, seed.child("elementwise"));
        out.push_back(run_case(
            "ops.elementwise", rig,
            [rig, &a, &b](GraphContext<double>& ctx) {
                Var<double> va = ctx.use(a), vb = ctx.use(b);
                Var<double> e = add(mul(va, vb), sub(scale(va, 1.3), add_scalar(vb, 0.7)));
                return mean_all(square(e));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {3, 4}, seed.child("matmul"));
        auto& b = rig->uniform("b", {4, 5}, seed.child("matmul"));
        out.push_back(run_case(
            "ops.matmul", rig,
            [rig, &a, &b](GraphContext<double>& ctx) {
                return mean_all(square(matmul(ctx.use(a), ctx.use(b))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {4, 6}, seed.child("shapeops"));
        out.push_back(run_case(
            "ops.transpose_slice_concat", rig,
            [rig, &a](GraphContext<double>& ctx) {
                Var<double> v = ctx.use(a);
                Var<double> t = transpose(v);                       // [6,4]
                Var<double> top = slice_rows(t, 0, 3);              // [3,4]
                Var<double> left = slice_cols(top, 0, 2);           // [3,2]
                Var<double> right = slice_cols(top, 2, 4);          // [3,2]
                Var<double> c = concat_cols(std::vector<Var<double>>{right, left});
                return mean_all(square(reshape(c, {2, 6})));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {4, 3}, seed.child("rowvec"));
        auto& v = rig->uniform("v", {3}, seed.child("rowvec"));
        out.push_back(run_case(
            "ops.add_rowvec", rig,
            [rig, &a, &v](GraphContext<double>& ctx) {
                return mean_all(square(add_rowvec(ctx.use(a), ctx.use(v))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->signed_away_from_zero("a", {3, 5}, seed.child("relu"));
        out.push_back(run_case(
            "ops.relu", rig,
            [rig, &a](GraphContext<double>& ctx) { return mean_all(square(relu(ctx.use(a)))); },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {3, 5}, seed.child("gelu"), -2.0, 2.0);
        out.push_back(run_case(
            "ops.gelu", rig,
            [rig, &a](GraphContext<double>& ctx) { return mean_all(square(gelu(ctx.use(a)))); },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {4, 6}, seed.child("softmax"), -2.0, 2.0);
        auto& w = rig->uniform("w", {4, 6}, seed.child("softmax"));
        out.push_back(run_case(
            "ops.softmax_rows", rig,
            [rig, &a, &w](GraphContext<double>& ctx) {
                return mean_all(square(mul(softmax_rows(ctx.use(a)), ctx.use(w))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {2, 3, 4}, seed.child("reduce"));
        out.push_back(run_case(
            "ops.sum_mean_axis", rig,
            [rig, &a](GraphContext<double>& ctx) {
                Var<double> v = ctx.use(a);
                Var<double> s1 = mean_all(square(sum_axis(v, 1)));
                Var<double> s2 = mean_all(square(mean_axis(v, 2)));
                Var<double> s0 = mean_all(square(mean_axis(v, 0)));
                return add(add(s0, s1), s2);
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {4, 8}, seed.child("dropout"));
        out.push_back(run_case(
            "ops.dropout_fixed_mask", rig,
            [rig, &a](GraphContext<double>& ctx) {
                return mean_all(
                    square(dropout(ctx.use(a), 0.3, true, RngStream(0xD20Dull).child("mask"))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {2, 5, 6}, seed.child("conv"));
        auto& w = rig->uniform("w", {3, 2, 2, 3}, seed.child("conv"));
        auto& b = rig->uniform("b", {3}, seed.child("conv"));
        out.push_back(run_case(
            "nn.conv2d", rig,
            [rig, &x, &w, &b](GraphContext<double>& ctx) {
                return mean_all(square(conv2d(ctx.use(x), ctx.use(w), ctx.use(b), 2, 2, 1, 1)));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {3, 6, 5}, seed.child("depthwise"));
        auto& w = rig->uniform("w", {3, 2, 2, 2}, seed.child("depthwise"));
        auto& b = rig->uniform("b", {6}, seed.child("depthwise"));
        out.push_back(run_case(
            "nn.depthwise_conv2d", rig,
            [rig, &x, &w, &b](GraphContext<double>& ctx) {
                return mean_all(
                    square(depthwise_conv2d(ctx.use(x), ctx.use(w), ctx.use(b), 2, 1, 0, 1)));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {2, 3, 4}, seed.child("tconv"));
        auto& w = rig->uniform("w", {2, 3, 3, 2}, seed.child("tconv"));
        auto& b = rig->uniform("b", {3}, seed.child("tconv"));
        out.push_back(run_case(
            "nn.transposed_conv2d", rig,
            [rig, &x, &w, &b](GraphContext<double>& ctx) {
                return mean_all(
                    square(transposed_conv2d(ctx.use(x), ctx.use(w), ctx.use(b), 2, 2, 1, 0)));
            },
            eps, tol));
    }
    {
        // weight the normalized output by a random tensor: a plain sum of
        // squares is shift/scale invariant for a normalizer, leaving near-zero
        // gradients that only probe noise
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {3, 4, 5}, seed.child("instnorm"), -2.0, 2.0);
        auto& g = rig->uniform("g", {3}, seed.child("instnorm"), 0.5, 1.5);
        auto& b = rig->uniform("b", {3}, seed.child("instnorm"));
        auto& w = rig->uniform("w", {3, 4, 5}, seed.child("instnorm.weight"));
        out.push_back(run_case(
            "nn.instance_norm", rig,
            [rig, &x, &g, &b, &w](GraphContext<double>& ctx) {
                Var<double> y = instance_norm(ctx.use(x), ctx.use(g), ctx.use(b), 1e-5);
                return mean_all(square(mul(y, ctx.use(w))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {4, 6}, seed.child("layernorm"), -2.0, 2.0);
        auto& g = rig->uniform("g", {6}, seed.child("layernorm"), 0.5, 1.5);
        auto& b = rig->uniform("b", {6}, seed.child("layernorm"));
        auto& w = rig->uniform("w", {4, 6}, seed.child("layernorm.weight"));
        out.push_back(run_case(
            "nn.layer_norm", rig,
            [rig, &x, &g, &b, &w](GraphContext<double>& ctx) {
                Var<double> y = layer_norm(ctx.use(x), ctx.use(g), ctx.use(b), 1e-5);
                return mean_all(square(mul(y, ctx.use(w))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {2, 3, 4}, seed.child("upsample"));
        out.push_back(run_case(
            "nn.upsample_nearest", rig,
            [rig, &x](GraphContext<double>& ctx) {
                return mean_all(square(upsample_nearest(ctx.use(x), 5, 7)));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& g = rig->uniform("grid", {4, 2, 3}, seed.child("tokens"));
        auto& c = rig->uniform("cls", {4}, seed.child("tokens"));
        auto& p = rig->uniform("pos", {7, 4}, seed.child("tokens"));
        out.push_back(run_case(
            "nn.tokens_grid_roundtrip", rig,
            [rig, &g, &c, &p](GraphContext<double>& ctx) {
                Var<double> tok = tokens_from_grid(ctx.use(g), ctx.use(c), ctx.use(p));
                Var<double> back = grid_from_tokens(slice_rows(tok, 1, 7), 2, 3);
                return add(mean_all(square(tok)), mean_all(square(back)));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {5, 8}, seed.child("attention"), -0.8, 0.8);
        auto attn = std::make_shared<MultiHeadAttention<double>>("attn", 8, 2,
                                                                 seed.child("attention.init"));
        attn->collect(rig->layer_params);
        out.push_back(run_case(
            "layer.attention", rig,
            [rig, &x, attn](GraphContext<double>& ctx) {
                return mean_all(square((*attn)(ctx, ctx.use(x))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {4, 6}, seed.child("mlp"), -0.8, 0.8);
        auto mlp = std::make_shared<MlpBlock<double>>("mlp", 6, 12, seed.child("mlp.init"));
        mlp->collect(rig->layer_params);
        out.push_back(run_case(
            "layer.mlp", rig,
            [rig, &x, mlp](GraphContext<double>& ctx) {
                return mean_all(square((*mlp)(ctx, ctx.use(x))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& x = rig->uniform("x", {4, 8}, seed.child("block"), -0.8, 0.8);
        auto blk = std::make_shared<EncoderBlock<double>>("blk", 8, 2, 2, 1e-5,
                                                          seed.child("block.init"));
        blk->collect(rig->layer_params);
        out.push_back(run_case(
            "layer.encoder_block", rig,
            [rig, &x, blk](GraphContext<double>& ctx) {
                return mean_all(square((*blk)(ctx, ctx.use(x))));
            },
            eps, tol));
    }
    {
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {4, 5}, seed.child("mse"));
        auto& b = rig->uniform("b", {4, 5}, seed.child("mse"));
        out.push_back(run_case(
            "loss.mse", rig,
            [rig, &a, &b](GraphContext<double>& ctx) { return mse(ctx.use(a), ctx.use(b)); },
            eps, tol));
    }
    if (inject_bug) {
        // deliberately wrong backward rule; the checker must flag it
        auto rig = std::make_shared<CheckRig>();
        auto& a = rig->uniform("a", {3, 3}, seed.child("inject"));
        out.push_back(run_case(
            "inject.bad_backward", rig,
            [rig, &a](GraphContext<double>& ctx) {
                Var<double> v = ctx.use(a);
                const Tensor<double>& av = v.value();
                Tensor<double> doubled(av.dims());
                for (std::size_t i = 0; i < av.size(); ++i) doubled[i] = 2.0 * av[i];
                Var<double> bad = ctx.tape().push(
                    std::move(doubled), {v.id},
                    [](Tape<double>&, const Node<double>& nd, Flow<double>& flow) {
                        const Tensor<double>& g = flow[static_cast<std::size_t>(nd.id)];
                        Tensor<double>& ga = flow[static_cast<std::size_t>(nd.parents[0])];
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.5 * g[i];
                    });
                return mean_all(square(bad));
            },
            eps, tol));
    }
    return out;
}

/// End-to-end check on the full model: all heads enabled, l2 on, dropout
/// active under a fixed mask stream, two-sample batch. Gaze targets are
/// rescaled to O(1) and the head weights kept moderate so the total stays
/// O(1); a large loss magnitude drowns near-zero gradients in
/// finite-difference rounding noise without testing anything extra.
/// coord_cap limits the probed coordinates per parameter (0 = every
/// coordinate).
inline CheckCase run_model_gradient_check(const ModelConfig& base_cfg, double eps, double tol,
                                          std::size_t coord_cap = 0) {
    ModelConfig cfg = base_cfg;
    cfg.alpha_recon = 0.7;
    cfg.alpha_pupil = 0.3;
    if (cfg.l2_coeff <= 0.0) cfg.l2_coeff = 1e-4;

    auto model = std::make_shared<MtlTransformer<double>>(cfg, 0xE2Eull);

    GenConfig gen;
    gen.channels = cfg.channels;
    gen.timesteps = cfg.timesteps;
    const Dataset data = generate_synthetic(2, gen, 0xDA7Aull);
    auto eeg = std::make_shared<std::vector<Tensor<double>>>();
    auto gaze = std::make_shared<std::vector<std::array<double, 2>>>();
    auto pupil = std::make_shared<std::vector<double>>();
    for (const Sample& s : data.samples) {
        eeg->push_back(s.eeg.cast<double>());
        gaze->push_back({static_cast<double>(s.gaze[0]) / gen.screen_x_mm,
                         static_cast<double>(s.gaze[1]) / gen.screen_y_mm});
        pupil->push_back(static_cast<double>(s.pupil));
    }

    LossBuilder f = [model, eeg, gaze, pupil](GraphContext<double>& ctx) {
        std::vector<const Tensor<double>*> xs;
        for (const auto& t : *eeg) xs.push_back(&t);
        LossVars<double> loss =
            model->build_losses(ctx, xs, *gaze, *pupil, true, RngStream(0xF17Eull));
        return loss.total;
    };
    return CheckCase{"model.end_to_end_" + cfg.preset,
                     grad_check(f, model->parameters(), eps, tol, coord_cap)};
}

} // namespace eegmtl
