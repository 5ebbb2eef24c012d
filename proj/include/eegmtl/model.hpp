#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegmtl/layers.hpp"

namespace eegmtl {

inline int conv_out_extent(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

/// Geometry and objective weights for the gaze model. The two presets share
/// the same wiring; `desk` is small enough to train and grad-check quickly,
/// `paper` reproduces the published 128-channel geometry for shape tests.
struct ModelConfig {
    int channels = 128;        // electrode rows C
    int timesteps = 500;       // samples per window T
    int stem_filters = 256;    // temporal conv output channels
    int stem_kernel_t = 36;    // temporal kernel width, also its stride
    int stem_pad_t = 2;        // temporal zero padding
    int depth_kernel_c = 8;    // spatial kernel height, also its stride
    int depth_mult = 3;        // depthwise channel multiplier
    int embed_dim = 768;       // token width D == stem_filters * depth_mult
    int patch_grid_h = 16;
    int patch_grid_w = 14;
    int encoder_layers = 12;
    int encoder_heads = 12;
    int mlp_ratio = 4;
    int pred_hidden = 768;
    double dropout_p = 0.3;
    double alpha_recon = 140.0;
    double alpha_pupil = 1.0;
    double l2_coeff = 1e-4;
    double norm_eps = 1e-5;
    std::string preset = "paper";

    static ModelConfig paper() { return ModelConfig{}; }

    static ModelConfig desk() {
        ModelConfig c;
        c.channels = 8;
        c.timesteps = 64;
        c.stem_filters = 16;
        c.stem_kernel_t = 16;
        c.stem_pad_t = 0;
        c.depth_kernel_c = 4;
        c.depth_mult = 2;
        c.embed_dim = 32;
        c.patch_grid_h = 2;
        c.patch_grid_w = 4;
        c.encoder_layers = 2;
        c.encoder_heads = 2;
        c.mlp_ratio = 4;
        c.pred_hidden = 32;
        c.preset = "desk";
        return c;
    }

    int derived_grid_h() const { return conv_out_extent(channels, depth_kernel_c, depth_kernel_c, 0); }
    int derived_grid_w() const {
        return conv_out_extent(timesteps, stem_kernel_t, stem_kernel_t, stem_pad_t);
    }
    int n_patches() const { return patch_grid_h * patch_grid_w; }
    bool recon_enabled() const { return alpha_recon > 0.0; }
    bool pupil_enabled() const { return alpha_pupil > 0.0; }

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ShapeError("model config: " + what);
        };
        require(channels >= 1 && timesteps >= 1, "input extents must be positive");
        require(stem_filters >= 1 && stem_kernel_t >= 1 && stem_pad_t >= 0,
                "stem geometry must be positive");
        require(depth_kernel_c >= 1 && depth_mult >= 1, "depthwise geometry must be positive");
        require(encoder_layers >= 1 && mlp_ratio >= 1 && pred_hidden >= 1,
                "encoder sizes must be positive");
        require(embed_dim == stem_filters * depth_mult,
                "embed_dim " + std::to_string(embed_dim) + " != stem_filters*depth_mult " +
                    std::to_string(stem_filters * depth_mult));
        require(encoder_heads >= 1 && embed_dim % encoder_heads == 0,
                "embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                    std::to_string(encoder_heads) + " heads");
        require(timesteps + 2 * stem_pad_t >= stem_kernel_t, "stem kernel exceeds padded input");
        require(channels >= depth_kernel_c, "depthwise kernel exceeds channel count");
        require(derived_grid_h() >= 1 && derived_grid_w() >= 1, "patch grid collapses to zero");
        require(patch_grid_h == derived_grid_h() && patch_grid_w == derived_grid_w(),
                "patch grid " + std::to_string(patch_grid_h) + "x" + std::to_string(patch_grid_w) +
                    " inconsistent with stem geometry (derived " +
                    std::to_string(derived_grid_h()) + "x" + std::to_string(derived_grid_w()) +
                    ")");
        require(dropout_p >= 0.0 && dropout_p < 1.0, "dropout rate must be in [0,1)");
        require(alpha_recon >= 0.0 && alpha_pupil >= 0.0, "task weights must be >= 0");
        require(l2_coeff >= 0.0, "l2 coefficient must be >= 0");
        require(norm_eps > 0.0, "norm epsilon must be > 0");
    }

    bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"channels", c.channels},
                       {"timesteps", c.timesteps},
                       {"stem_filters", c.stem_filters},
                       {"stem_kernel_t", c.stem_kernel_t},
                       {"stem_pad_t", c.stem_pad_t},
                       {"depth_kernel_c", c.depth_kernel_c},
                       {"depth_mult", c.depth_mult},
                       {"embed_dim", c.embed_dim},
                       {"patch_grid_h", c.patch_grid_h},
                       {"patch_grid_w", c.patch_grid_w},
                       {"encoder_layers", c.encoder_layers},
                       {"encoder_heads", c.encoder_heads},
                       {"mlp_ratio", c.mlp_ratio},
                       {"pred_hidden", c.pred_hidden},
                       {"dropout_p", c.dropout_p},
                       {"alpha_recon", c.alpha_recon},
                       {"alpha_pupil", c.alpha_pupil},
                       {"l2_coeff", c.l2_coeff},
                       {"norm_eps", c.norm_eps},
                       {"preset", c.preset}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("channels").get_to(c.channels);
    j.at("timesteps").get_to(c.timesteps);
    j.at("stem_filters").get_to(c.stem_filters);
    j.at("stem_kernel_t").get_to(c.stem_kernel_t);
    j.at("stem_pad_t").get_to(c.stem_pad_t);
    j.at("depth_kernel_c").get_to(c.depth_kernel_c);
    j.at("depth_mult").get_to(c.depth_mult);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("patch_grid_h").get_to(c.patch_grid_h);
    j.at("patch_grid_w").get_to(c.patch_grid_w);
    j.at("encoder_layers").get_to(c.encoder_layers);
    j.at("encoder_heads").get_to(c.encoder_heads);
    j.at("mlp_ratio").get_to(c.mlp_ratio);
    j.at("pred_hidden").get_to(c.pred_hidden);
    j.at("dropout_p").get_to(c.dropout_p);
    j.at("alpha_recon").get_to(c.alpha_recon);
    j.at("alpha_pupil").get_to(c.alpha_pupil);
    j.at("l2_coeff").get_to(c.l2_coeff);
    j.at("norm_eps").get_to(c.norm_eps);
    j.at("preset").get_to(c.preset);
}

template <class S>
struct LossValues {
    double main = 0.0;
    double recon = 0.0;
    double pupil = 0.0;
    double l2 = 0.0;     // unweighted sum of squared active parameters
    double total = 0.0;
};

template <class S>
struct LossVars {
    Var<S> total{};
    LossValues<S> values;
    bool has_recon = false;
    bool has_pupil = false;
};

template <class S>
struct ModelOutput {
    Tensor<S> gaze_pred;   // [2]
    Tensor<S> recon;       // [1,C,T] when the head is enabled, else empty
    Tensor<S> pupil_pred;  // [1] when the head is enabled, else empty
    LossValues<S> losses;  // filled when targets are supplied
    bool has_losses = false;
};

/// Gaze regressor with optional reconstruction and pupil-size heads. A head
/// whose task weight is zero is left out of the graph entirely: its
/// parameters are constructed (and saved) but receive no gradient and do not
/// enter the l2 sum, so a weight of zero is exactly the single-task model.
template <class S>
class MtlTransformer {
public:
    MtlTransformer(const ModelConfig& cfg, std::uint64_t seed)
        : cfg_(validated(cfg)),
          stem_("stem", 1, cfg.stem_filters, 1, cfg.stem_kernel_t, 1, cfg.stem_kernel_t, 0,
                cfg.stem_pad_t, RngStream(seed)),
          depthwise_("depthwise", cfg.stem_filters, cfg.depth_mult, cfg.depth_kernel_c, 1,
                     cfg.depth_kernel_c, 1, 0, 0, RngStream(seed)),
          embed_("embed", cfg.embed_dim, cfg.patch_grid_h, cfg.patch_grid_w, RngStream(seed)),
          final_ln_("encoder.ln", cfg.embed_dim, S(cfg.norm_eps)),
          gaze_fc1_("head.gaze.fc1", cfg.embed_dim, cfg.pred_hidden, RngStream(seed)),
          gaze_fc2_("head.gaze.fc2", cfg.pred_hidden, 2, RngStream(seed)),
          pupil_fc1_("head.pupil.fc1", cfg.embed_dim, cfg.pred_hidden, RngStream(seed)),
          pupil_fc2_("head.pupil.fc2", cfg.pred_hidden, 1, RngStream(seed)),
          dec_spatial_("decoder.spatial", cfg.embed_dim, cfg.stem_filters, 1, cfg.stem_kernel_t,
                       1, cfg.stem_kernel_t, 0, cfg.stem_pad_t, RngStream(seed)),
          dec_spatial_norm_("decoder.spatial_norm", cfg.stem_filters, S(cfg.norm_eps)),
          dec_temporal_("decoder.temporal", cfg.stem_filters, 1, cfg.depth_kernel_c, 1,
                        cfg.depth_kernel_c, 1, 0, 0, RngStream(seed)),
          dec_temporal_norm_("decoder.temporal_norm", 1, S(cfg.norm_eps)) {
        blocks_.reserve(static_cast<std::size_t>(cfg_.encoder_layers));
        for (int i = 0; i < cfg_.encoder_layers; ++i) {
            blocks_.emplace_back("encoder." + std::to_string(i), cfg_.embed_dim,
                                 cfg_.encoder_heads, cfg_.mlp_ratio, S(cfg_.norm_eps),
                                 RngStream(seed));
        }
        stem_.collect(params_);
        depthwise_.collect(params_);
        embed_.collect(params_);
        for (auto& b : blocks_) b.collect(params_);
        final_ln_.collect(params_);
        gaze_fc1_.collect(params_);
        gaze_fc2_.collect(params_);
        pupil_fc1_.collect(params_);
        pupil_fc2_.collect(params_);
        dec_spatial_.collect(params_);
        dec_spatial_norm_.collect(params_);
        dec_temporal_.collect(params_);
        dec_temporal_norm_.collect(params_);
    }

    MtlTransformer(const MtlTransformer&) = delete;
    MtlTransformer& operator=(const MtlTransformer&) = delete;

    const ModelConfig& config() const noexcept { return cfg_; }
    std::vector<Parameter<S>*>& parameters() noexcept { return params_; }
    const std::vector<Parameter<S>*>& parameters() const noexcept { return params_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto* p : params_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (auto* p : params_) p->zero_grad();
    }

    /// conv stem -> depthwise -> tokens -> encoder blocks -> final norm.
    /// x is one sample shaped [1,C,T]; returns [(N+1), D] with the class
    /// representation in row 0.
    Var<S> representation(GraphContext<S>& ctx, Var<S> x) {
        const Tensor<S>& xv = x.value();
        if (xv.rank() != 3 || xv.dim(0) != 1 || xv.dim(1) != cfg_.channels ||
            xv.dim(2) != cfg_.timesteps) {
            throw ShapeError("input must be [1x" + std::to_string(cfg_.channels) + "x" +
                             std::to_string(cfg_.timesteps) + "], got " + dims_str(xv.dims()));
        }
        Var<S> f = stem_(ctx, x);
        Var<S> g = depthwise_(ctx, f);
        Var<S> tok = embed_(ctx, g);
        for (auto& b : blocks_) tok = b(ctx, tok);
        return final_ln_(ctx, tok);
    }

    /// Class row -> FC -> dropout -> FC(2). Returns [1,2] (mm).
    Var<S> gaze_from_tokens(GraphContext<S>& ctx, Var<S> tokens, bool train, RngStream drop) {
        Var<S> cls = slice_rows(tokens, 0, 1);
        Var<S> h = dropout(gaze_fc1_(ctx, cls), cfg_.dropout_p, train, drop.child("gaze"));
        return gaze_fc2_(ctx, h);
    }

    /// Class row -> FC -> dropout -> FC(1). Returns [1,1].
    Var<S> pupil_from_tokens(GraphContext<S>& ctx, Var<S> tokens, bool train, RngStream drop) {
        Var<S> cls = slice_rows(tokens, 0, 1);
        Var<S> h = dropout(pupil_fc1_(ctx, cls), cfg_.dropout_p, train, drop.child("pupil"));
        return pupil_fc2_(ctx, h);
    }

    /// Patch rows -> grid -> spatial deconv block -> temporal deconv block ->
    /// resample to the input extents. Returns [1,C,T]. Both deconv blocks end
    /// in instance norm + relu, so the reconstruction is non-negative.
    Var<S> recon_from_tokens(GraphContext<S>& ctx, Var<S> tokens) {
        Var<S> patches = slice_rows(tokens, 1, cfg_.n_patches() + 1);
        Var<S> grid = grid_from_tokens(patches, cfg_.patch_grid_h, cfg_.patch_grid_w);
        Var<S> s = relu(dec_spatial_norm_(ctx, dec_spatial_(ctx, grid)));
        Var<S> t = relu(dec_temporal_norm_(ctx, dec_temporal_(ctx, s)));
        return upsample_nearest(t, cfg_.channels, cfg_.timesteps);
    }

    /// Multi-task objective over a batch: mean per-sample gaze MSE, plus
    /// alpha-weighted mean reconstruction / pupil MSE for enabled heads, plus
    /// l2 over the parameters bound into this graph. Heads with zero weight
    /// contribute no nodes at all.
    LossVars<S> build_losses(GraphContext<S>& ctx, const std::vector<const Tensor<S>*>& eeg,
                             const std::vector<std::array<S, 2>>& gaze,
                             const std::vector<S>& pupil, bool train, RngStream drop) {
        if (eeg.empty() || eeg.size() != gaze.size()) {
            throw ShapeError("batch needs matching eeg/gaze counts, got " +
                             std::to_string(eeg.size()) + " and " + std::to_string(gaze.size()));
        }
        const bool has_recon = cfg_.recon_enabled();
        const bool has_pupil = cfg_.pupil_enabled();
        if (has_pupil && pupil.size() != eeg.size()) {
            throw ShapeError("pupil head enabled but batch has no pupil targets");
        }

        Var<S> main_acc{}, recon_acc{}, pupil_acc{};
        for (std::size_t i = 0; i < eeg.size(); ++i) {
            Var<S> x = ctx.input(eeg[i]->reshaped({1, cfg_.channels, cfg_.timesteps}));
            Var<S> tok = representation(ctx, x);
            RngStream ds = drop.child(static_cast<std::uint64_t>(i));

            Var<S> pred = gaze_from_tokens(ctx, tok, train, ds);
            Var<S> target = ctx.input(Tensor<S>({1, 2}, {gaze[i][0], gaze[i][1]}));
            Var<S> li = mse(pred, target);
            main_acc = i == 0 ? li : add(main_acc, li);

            if (has_recon) {
                Var<S> ri = mse(recon_from_tokens(ctx, tok), x);
                recon_acc = i == 0 ? ri : add(recon_acc, ri);
            }
            if (has_pupil) {
                Var<S> pt = ctx.input(Tensor<S>({1, 1}, {pupil[i]}));
                Var<S> pi = mse(pupil_from_tokens(ctx, tok, train, ds), pt);
                pupil_acc = i == 0 ? pi : add(pupil_acc, pi);
            }
        }
        const S invb = S(1) / static_cast<S>(eeg.size());
        Var<S> main = scale(main_acc, invb);

        LossVars<S> out;
        out.has_recon = has_recon;
        out.has_pupil = has_pupil;
        out.total = main;
        out.values.main = static_cast<double>(main.value()[0]);
        if (has_recon) {
            Var<S> recon = scale(recon_acc, invb);
            out.values.recon = static_cast<double>(recon.value()[0]);
            out.total = add(out.total, scale(recon, S(cfg_.alpha_recon)));
        }
        if (has_pupil) {
            Var<S> pup = scale(pupil_acc, invb);
            out.values.pupil = static_cast<double>(pup.value()[0]);
            out.total = add(out.total, scale(pup, S(cfg_.alpha_pupil)));
        }
        if (cfg_.l2_coeff > 0.0) {
            Var<S> l2{};
            bool first = true;
            for (const auto& [p, id] : ctx.bindings()) {
                Var<S> v{&ctx.tape(), id};
                Var<S> s = sum_all(square(v));
                l2 = first ? s : add(l2, s);
                first = false;
            }
            out.values.l2 = static_cast<double>(l2.value()[0]);
            out.total = add(out.total, scale(l2, S(cfg_.l2_coeff)));
        }
        out.values.total = static_cast<double>(out.total.value()[0]);
        return out;
    }

    /// Eval-mode gaze prediction for one [C,T] sample; skips the aux heads.
    Tensor<S> predict_gaze(const Tensor<S>& eeg) {
        Tape<S> tape(false);
        GraphContext<S> ctx(tape);
        Var<S> x = ctx.input(eeg.reshaped({1, cfg_.channels, cfg_.timesteps}));
        Var<S> tok = representation(ctx, x);
        Var<S> pred = gaze_from_tokens(ctx, tok, false, RngStream(0));
        return pred.value().reshaped({2});
    }

    /// Eval-mode full forward for one sample; losses are filled when targets
    /// are supplied (pupil target required only if that head is enabled).
    ModelOutput<S> forward(const Tensor<S>& eeg, const std::array<S, 2>* gaze_target = nullptr,
                           const S* pupil_target = nullptr) {
        Tape<S> tape(false);
        GraphContext<S> ctx(tape);
        Var<S> x = ctx.input(eeg.reshaped({1, cfg_.channels, cfg_.timesteps}));
        Var<S> tok = representation(ctx, x);
        Var<S> pred = gaze_from_tokens(ctx, tok, false, RngStream(0));

        ModelOutput<S> out;
        out.gaze_pred = pred.value().reshaped({2});
        Var<S> recon{}, pup{};
        if (cfg_.recon_enabled()) {
            recon = recon_from_tokens(ctx, tok);
            out.recon = recon.value();
        }
        if (cfg_.pupil_enabled()) {
            pup = pupil_from_tokens(ctx, tok, false, RngStream(0));
            out.pupil_pred = pup.value().reshaped({1});
        }
        if (gaze_target != nullptr) {
            if (cfg_.pupil_enabled() && pupil_target == nullptr) {
                throw ShapeError("pupil head enabled but no pupil target supplied");
            }
            Var<S> t = ctx.input(Tensor<S>({1, 2}, {(*gaze_target)[0], (*gaze_target)[1]}));
            out.losses.main = static_cast<double>(mse(pred, t).value()[0]);
            if (cfg_.recon_enabled()) {
                out.losses.recon = static_cast<double>(mse(recon, x).value()[0]);
            }
            if (cfg_.pupil_enabled()) {
                Var<S> pt = ctx.input(Tensor<S>({1, 1}, {*pupil_target}));
                out.losses.pupil = static_cast<double>(mse(pup, pt).value()[0]);
            }
            if (cfg_.l2_coeff > 0.0) {
                double l2 = 0.0;
                for (const auto& [p, id] : ctx.bindings()) {
                    const Tensor<S>& v = p->value;
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        l2 += static_cast<double>(v[i]) * static_cast<double>(v[i]);
                    }
                }
                out.losses.l2 = l2;
            }
            out.losses.total = out.losses.main + cfg_.alpha_recon * out.losses.recon +
                               cfg_.alpha_pupil * out.losses.pupil +
                               cfg_.l2_coeff * out.losses.l2;
            out.has_losses = true;
        }
        return out;
    }

private:
    static ModelConfig validated(ModelConfig c) {
        c.validate();
        return c;
    }

    ModelConfig cfg_;
    Conv2dLayer<S> stem_;
    DepthwiseConv2dLayer<S> depthwise_;
    PatchEmbed<S> embed_;
    std::vector<EncoderBlock<S>> blocks_;
    LayerNormLayer<S> final_ln_;
    Linear<S> gaze_fc1_, gaze_fc2_;
    Linear<S> pupil_fc1_, pupil_fc2_;
    TransposedConv2dLayer<S> dec_spatial_;
    InstanceNormLayer<S> dec_spatial_norm_;
    TransposedConv2dLayer<S> dec_temporal_;
    InstanceNormLayer<S> dec_temporal_norm_;
    std::vector<Parameter<S>*> params_;
};

} // namespace eegmtl
