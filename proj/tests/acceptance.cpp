// Acceptance gate: every release criterion with its tolerance pinned in code.
// Prints one [PASS]/[FAIL] line per criterion and exits nonzero on any failure.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eegmtl/check_suite.hpp"
#include "eegmtl/data.hpp"
#include "eegmtl/model.hpp"
#include "eegmtl/nn_ops.hpp"
#include "eegmtl/sweep.hpp"
#include "eegmtl/train.hpp"
#include "eegmtl/weights.hpp"
#include "oracles.hpp"

using namespace eegmtl;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

GenConfig desk_gen() {
    return GenConfig{}; // 8 channels x 64 steps, pupil targets on
}

// The 2000-sample planted-structure set shared by the learning criteria.
const Dataset& shared_dataset() {
    static const Dataset data = generate_synthetic(2000, desk_gen(), 11);
    return data;
}

// ---- criterion bodies; each returns a detail string or throws Failure ---------

// Full-scale geometry: 1x128x500 in, 256x128x14 stem, 768x16x14 depthwise,
// 225x768 tokens, 2-value gaze, 1x128x500 reconstruction, forward under 10 s.
std::string criterion_shape_chain() {
    const ModelConfig cfg = ModelConfig::paper();
    require(cfg.derived_grid_h() == 16 && cfg.derived_grid_w() == 14, "derived grid is not 16x14");

    const RngStream st(0xACC1);
    Tape<float> tape(false);
    GraphContext<float> ctx(tape);
    Var<float> x = ctx.input(random_normal<float>({1, 128, 500}, st.child("x")));
    Var<float> stem = conv2d(x, ctx.input(random_normal<float>({256, 1, 1, 36}, st.child("w1"),
                                                               0.0, 0.05)),
                             ctx.input(Tensor<float>({256})), 1, 36, 0, 2);
    require(stem.value().dims() == Dims{256, 128, 14},
            "stem features are " + dims_str(stem.value().dims()));
    Var<float> dw = depthwise_conv2d(stem,
                                     ctx.input(random_normal<float>({256, 3, 8, 1}, st.child("w2"),
                                                                    0.0, 0.05)),
                                     ctx.input(Tensor<float>({768})), 8, 1, 0, 0);
    require(dw.value().dims() == Dims{768, 16, 14},
            "depthwise features are " + dims_str(dw.value().dims()));

    MtlTransformer<float> model(cfg, 1);
    std::size_t n_params = 0;
    for (const auto* p : model.parameters()) n_params += p->value.size();
    require(n_params == 93510150, "parameter count " + std::to_string(n_params));

    Tensor<float> eeg = random_normal<float>({128, 500}, st.child("eeg"));
    const auto t0 = std::chrono::steady_clock::now();
    Tape<float> tape2(false);
    GraphContext<float> ctx2(tape2);
    Var<float> tok = model.representation(ctx2, ctx2.input(eeg.reshaped({1, 128, 500})));
    require(tok.value().dims() == Dims{225, 768}, "tokens are " + dims_str(tok.value().dims()));
    const ModelOutput<float> out = model.forward(eeg);
    const double fwd = seconds_since(t0);
    require(out.gaze_pred.dims() == Dims{2}, "gaze output is " + dims_str(out.gaze_pred.dims()));
    require(out.recon.dims() == Dims{1, 128, 500},
            "reconstruction is " + dims_str(out.recon.dims()));
    require(out.gaze_pred.all_finite() && out.recon.all_finite(), "non-finite forward outputs");
    require(fwd < 10.0, "forward took " + fmt(fwd) + " s (limit 10)");
    return "93510150 params, tokens 225x768, forward " + fmt(fwd, 3) + " s";
}

// Layer-by-layer finite differences plus the full desk model, eps 1e-5,
// relative error under 1e-4, within five minutes.
std::string criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckCase> cases = run_layer_gradient_checks(1e-5, 1e-4);
    cases.push_back(run_model_gradient_check(ModelConfig::desk(), 1e-5, 1e-4, 0));
    double worst = 0.0;
    std::size_t coords = 0;
    for (const CheckCase& c : cases) {
        worst = std::max(worst, c.report.max_rel_err());
        for (const auto& e : c.report.entries) coords += e.coords_checked;
        require(c.report.pass(), "check \"" + c.name + "\" failed with max rel err " +
                                     fmt(c.report.max_rel_err()));
    }
    const double secs = seconds_since(t0);
    require(secs < 300.0, "gradient suite took " + fmt(secs) + " s (limit 300)");
    return std::to_string(cases.size()) + " checks, " + std::to_string(coords) +
           " coords, max rel err " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s";
}

// With both auxiliary weights at zero the multi-task model must train exactly
// like the single-task one: identical parameters after 50 steps, identical
// validation curves, untouched auxiliary heads.
std::string criterion_zero_weight() {
    const Dataset data = generate_synthetic(40, desk_gen(), 33);
    const SplitIndices split = split_dataset(data.size(), 33);
    TrainConfig tcfg;
    tcfg.epochs = 13;
    tcfg.batch_size = 8;
    tcfg.max_steps = 50;
    tcfg.seed = 33;

    ModelConfig base = ModelConfig::desk();
    base.alpha_recon = 0.0;
    base.alpha_pupil = 0.0;
    ModelConfig zeroed = ModelConfig::desk(); // the aux variant, weights forced to zero
    zeroed.alpha_recon = 0.0;
    zeroed.alpha_pupil = 0.0;

    MtlTransformer<float> a(base, tcfg.seed);
    MtlTransformer<float> b(zeroed, tcfg.seed);
    MtlTransformer<float> untouched(base, tcfg.seed);
    const RunReport ra = train_model(a, data, split, tcfg);
    const RunReport rb = train_model(b, data, split, tcfg);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        max_diff = std::max(max_diff,
                            oracle::max_abs_diff(a.parameters()[i]->value.cast<double>(),
                                                 b.parameters()[i]->value.cast<double>()));
    }
    require(max_diff < 1e-12, "parameters diverged by " + fmt(max_diff));

    require(ra.epochs.size() == rb.epochs.size(), "epoch counts differ");
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
        require(ra.epochs[i].val_rmse == rb.epochs[i].val_rmse,
                "val RMSE differs at epoch " + std::to_string(i));
    }

    // zero-weight heads must not move off their init
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& name = a.parameters()[i]->name;
        if (name.rfind("decoder.", 0) == 0 || name.rfind("head.pupil.", 0) == 0) {
            require(oracle::max_abs_diff(a.parameters()[i]->value.cast<double>(),
                                         untouched.parameters()[i]->value.cast<double>()) == 0.0,
                    "auxiliary parameter " + name + " moved");
        }
    }
    return "max param diff " + fmt(max_diff) + " after 50 steps, val curves identical";
}

// The reported total must equal main + a1*recon + a2*pupil + lambda*l2
// recomputed from the logged components, on 100 random batches.
std::string criterion_decomposition() {
    const ModelConfig cfg = ModelConfig::desk();
    MtlTransformer<float> model(cfg, 4);
    const RngStream st(0xACC4);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const RngStream ts = st.child(static_cast<std::uint64_t>(trial));
        const int bs = 1 + trial % 3;
        std::vector<Tensor<float>> eeg_store;
        std::vector<std::array<float, 2>> gaze;
        std::vector<float> pupil;
        auto cur = ts.child("targets").cursor();
        for (int i = 0; i < bs; ++i) {
            eeg_store.push_back(random_normal<float>({cfg.channels, cfg.timesteps},
                                                     ts.child(static_cast<std::uint64_t>(i))));
            gaze.push_back({float(cur.next_uniform() * 400.0 - 200.0),
                            float(cur.next_uniform() * 250.0 - 125.0)});
            pupil.push_back(float(cur.next_normal()));
        }
        std::vector<const Tensor<float>*> eeg;
        for (const auto& t : eeg_store) eeg.push_back(&t);

        Tape<float> tape;
        GraphContext<float> ctx(tape);
        const LossVars<float> lv =
            model.build_losses(ctx, eeg, gaze, pupil, true, ts.child("drop"));
        const double recomputed = lv.values.main + cfg.alpha_recon * lv.values.recon +
                                  cfg.alpha_pupil * lv.values.pupil + cfg.l2_coeff * lv.values.l2;
        const double rel = std::abs(lv.values.total - recomputed) / std::max(1.0, std::abs(recomputed));
        worst = std::max(worst, rel);
        require(rel < 1e-6, "batch " + std::to_string(trial) + " rel err " + fmt(rel));
    }
    return "100 batches, worst rel err " + fmt(worst, 3);
}

// A 15-epoch run must log the plateaus 1e-4, 9e-5, 8.1e-5 switching exactly
// at epochs 6 and 12.
std::string criterion_schedule() {
    const Dataset data = generate_synthetic(12, desk_gen(), 55);
    const SplitIndices split = split_dataset(data.size(), 55);
    ModelConfig cfg = ModelConfig::desk();
    cfg.alpha_recon = 0.0;
    cfg.alpha_pupil = 0.0;
    TrainConfig tcfg; // defaults: 15 epochs, 1e-4 base, x0.9 every 6
    tcfg.batch_size = 8;
    tcfg.seed = 55;
    MtlTransformer<float> model(cfg, tcfg.seed);
    const RunReport r = train_model(model, data, split, tcfg);
    require(r.epochs.size() == 15, "expected 15 epochs");

    const double plateaus[3] = {1e-4, 9e-5, 8.1e-5};
    for (int e = 0; e < 15; ++e) {
        const double want = plateaus[e / 6];
        const double got = r.epochs[static_cast<std::size_t>(e)].lr;
        require(std::abs(got - want) / want < 1e-12,
                "epoch " + std::to_string(e) + " lr " + fmt(got, 17));
        require(got == r.epochs[static_cast<std::size_t>(6 * (e / 6))].lr,
                "plateau not constant at epoch " + std::to_string(e));
    }
    require(r.epochs[5].lr != r.epochs[6].lr && r.epochs[11].lr != r.epochs[12].lr,
            "plateau boundaries missing");
    return "plateaus 1e-4 / 9e-5 / 8.1e-5 switching at 6 and 12";
}

// The desk model must drive its train loss below 1% of the starting value on
// 8 samples within 500 steps and two minutes.
std::string criterion_overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset data = generate_synthetic(10, desk_gen(), 5);
    const SplitIndices split = split_dataset(data.size(), 5); // 8 train samples
    ModelConfig cfg = ModelConfig::desk();
    cfg.alpha_recon = 0.0;
    cfg.alpha_pupil = 0.0;
    cfg.dropout_p = 0.0;
    TrainConfig tcfg;
    tcfg.epochs = 500; // batch 8 over 8 samples: one step per epoch
    tcfg.batch_size = 8;
    tcfg.base_lr = 1e-3;
    tcfg.decay_every = 600;
    tcfg.seed = 5;
    MtlTransformer<float> model(cfg, tcfg.seed);
    const RunReport r = train_model(model, data, split, tcfg);
    const double first = r.epochs.front().main;
    const double last = r.epochs.back().main;
    const double secs = seconds_since(t0);
    require(last < 0.01 * first, "main only fell to " + fmt(100.0 * last / first) + "% of start");
    require(secs < 120.0, "overfit run took " + fmt(secs) + " s (limit 120)");
    return "main " + fmt(first) + " -> " + fmt(last) + " mm^2 (" +
           fmt(100.0 * last / first, 2) + "%) in " + fmt(secs, 3) + " s";
}

// Trained on 2000 planted-structure samples, the model must beat the
// constant-mean baseline by at least 20% on the test split, for all of three
// seeds, within 15 minutes.
std::string criterion_beats_baseline() {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset& data = shared_dataset();
    ModelConfig cfg = ModelConfig::desk();
    cfg.alpha_pupil = 0.0; // reconstruction-assisted variant
    std::string detail;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        TrainConfig tcfg;
        tcfg.epochs = 30;
        tcfg.base_lr = 1e-3;
        tcfg.seed = seed;
        const SplitIndices split = split_dataset(data.size(), seed);
        MtlTransformer<float> model(cfg, seed);
        const RunReport r = train_model(model, data, split, tcfg);
        require(r.test_rmse <= 0.8 * r.naive_test_rmse,
                "seed " + std::to_string(seed) + ": " + fmt(r.test_rmse) + " mm vs naive " +
                    fmt(r.naive_test_rmse) + " mm");
        detail += (detail.empty() ? "" : ", ") + fmt(r.test_rmse) + "/" +
                  fmt(r.naive_test_rmse) + " mm";
    }
    const double secs = seconds_since(t0);
    require(secs < 900.0, "three runs took " + fmt(secs) + " s (limit 900)");
    return detail + ", " + fmt(secs, 3) + " s";
}

// Paired-seed sweep over {0, 35, 70, 140, 280}: some nonzero reconstruction
// weight must do at least as well as weight zero on mean test RMSE.
std::string criterion_sweep_shape() {
    SweepSpec spec;
    spec.weights = {0.0, 35.0, 70.0, 140.0, 280.0};
    spec.seeds = {1, 2, 3};
    TrainConfig tcfg;
    tcfg.epochs = 20;
    tcfg.base_lr = 1e-3;
    const SweepResult result = run_sweep(ModelConfig::desk(), tcfg, shared_dataset(), spec);

    for (const SweepRow& r : result.rows) {
        require(r.ok, "run at weight " + fmt(r.alpha) + " seed " + std::to_string(r.seed) +
                          " failed: " + r.error);
    }
    const double mean0 = result.summary[0].mean_rmse;
    double best_nonzero = result.summary[1].mean_rmse;
    double best_weight = result.summary[1].alpha;
    std::string means = fmt(mean0);
    for (std::size_t i = 1; i < result.summary.size(); ++i) {
        means += ", " + fmt(result.summary[i].mean_rmse);
        if (result.summary[i].mean_rmse < best_nonzero) {
            best_nonzero = result.summary[i].mean_rmse;
            best_weight = result.summary[i].alpha;
        }
    }
    require(best_nonzero <= mean0, "best nonzero mean " + fmt(best_nonzero) +
                                       " mm exceeds weight-0 mean " + fmt(mean0) + " mm");
    return "means {" + means + "} mm, best nonzero weight " + fmt(best_weight, 3);
}

// Same gen args give byte-identical containers; a saved checkpoint reproduces
// the reported validation RMSE bitwise; same-seed runs report identically.
std::string criterion_determinism() {
    const std::vector<std::uint8_t> c1 = encode_container(generate_synthetic(30, desk_gen(), 9));
    const std::vector<std::uint8_t> c2 = encode_container(generate_synthetic(30, desk_gen(), 9));
    require(c1 == c2, "containers differ across identical gen calls");

    const Dataset data = generate_synthetic(40, desk_gen(), 9);
    const SplitIndices split = split_dataset(data.size(), 9);
    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 8;
    tcfg.seed = 9;
    const std::string p1 = temp_file("eegmtl_accept_a.eegw");
    const std::string p2 = temp_file("eegmtl_accept_b.eegw");

    MtlTransformer<float> m1(ModelConfig::desk(), tcfg.seed);
    const RunReport r1 = train_model(m1, data, split, tcfg, p1);
    MtlTransformer<float> m2(ModelConfig::desk(), tcfg.seed);
    const RunReport r2 = train_model(m2, data, split, tcfg, p2);
    require(r1.same_metrics(r2), "same-seed reports differ");
    require(detail::read_file(p1) == detail::read_file(p2), "checkpoints differ byte-wise");

    const WeightFile wf = load_weights(p1);
    MtlTransformer<float> fresh(wf.config, 0);
    apply_weights(fresh.parameters(), wf);
    const double val = eval_rmse(fresh, data, split.val);
    require(val == r1.best_val_rmse,
            "reloaded val RMSE " + fmt(val, 17) + " vs reported " + fmt(r1.best_val_rmse, 17));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
    return "containers, reports and checkpoints bitwise stable, val RMSE " + fmt(val) + " mm";
}

// Forward ops must match naive loop oracles to 1e-12 in 64-bit over 100
// random geometries each.
std::string criterion_oracles() {
    const RngStream root(0xACC10);
    double worst = 0.0;
    auto track = [&](double d, const char* what, int trial) {
        worst = std::max(worst, d);
        require(d < 1e-12, std::string(what) + " trial " + std::to_string(trial) +
                               " off by " + fmt(d));
    };
    for (int trial = 0; trial < 100; ++trial) {
        const RngStream st = root.child("conv").child(static_cast<std::uint64_t>(trial));
        auto cur = st.cursor();
        const int cin = 1 + int(cur.next_below(3)), cout = 1 + int(cur.next_below(4));
        const int kh = 1 + int(cur.next_below(3)), kw = 1 + int(cur.next_below(3));
        const int sh = 1 + int(cur.next_below(3)), sw = 1 + int(cur.next_below(3));
        const int ph = int(cur.next_below(3)), pw = int(cur.next_below(3));
        const int h = std::max(kh - 2 * ph, 1) + int(cur.next_below(6));
        const int w = std::max(kw - 2 * pw, 1) + int(cur.next_below(6));
        const Tensor<double> x = random_uniform<double>({cin, h, w}, st.child("x"), -1.0, 1.0);
        const Tensor<double> wt =
            random_uniform<double>({cout, cin, kh, kw}, st.child("w"), -1.0, 1.0);
        const Tensor<double> b = random_uniform<double>({cout}, st.child("b"), -1.0, 1.0);
        Tape<double> tape(false);
        GraphContext<double> ctx(tape);
        const Tensor<double> got =
            conv2d(ctx.input(x), ctx.input(wt), ctx.input(b), sh, sw, ph, pw).value();
        track(oracle::max_abs_diff(got, oracle::conv2d(x, wt, b, sh, sw, ph, pw)), "conv2d", trial);
    }

    for (int trial = 0; trial < 100; ++trial) {
        const RngStream st = root.child("depthwise").child(static_cast<std::uint64_t>(trial));
        auto cur = st.cursor();
        const int c = 1 + int(cur.next_below(3)), mult = 1 + int(cur.next_below(3));
        const int kh = 1 + int(cur.next_below(3)), kw = 1 + int(cur.next_below(3));
        const int sh = 1 + int(cur.next_below(2)), sw = 1 + int(cur.next_below(2));
        const int h = kh + int(cur.next_below(6)), w = kw + int(cur.next_below(6));
        const Tensor<double> x = random_uniform<double>({c, h, w}, st.child("x"), -1.0, 1.0);
        const Tensor<double> wt =
            random_uniform<double>({c, mult, kh, kw}, st.child("w"), -1.0, 1.0);
        const Tensor<double> b = random_uniform<double>({c * mult}, st.child("b"), -1.0, 1.0);
        Tape<double> tape(false);
        GraphContext<double> ctx(tape);
        const Tensor<double> got =
            depthwise_conv2d(ctx.input(x), ctx.input(wt), ctx.input(b), sh, sw, 0, 0).value();
        track(oracle::max_abs_diff(got, oracle::depthwise_conv2d(x, wt, b, sh, sw, 0, 0)),
              "depthwise", trial);
    }

    for (int trial = 0; trial < 100; ++trial) {
        const RngStream st = root.child("tconv").child(static_cast<std::uint64_t>(trial));
        auto cur = st.cursor();
        const int cin = 1 + int(cur.next_below(3)), cout = 1 + int(cur.next_below(3));
        const int kh = 1 + int(cur.next_below(3)), kw = 1 + int(cur.next_below(3));
        const int sh = 1 + int(cur.next_below(2)), sw = 1 + int(cur.next_below(2));
        const int ph = int(cur.next_below(2)), pw = int(cur.next_below(2));
        const int h = 2 + int(cur.next_below(5)), w = 2 + int(cur.next_below(5));
        if ((h - 1) * sh + kh - 2 * ph < 1 || (w - 1) * sw + kw - 2 * pw < 1) continue;
        const Tensor<double> x = random_uniform<double>({cin, h, w}, st.child("x"), -1.0, 1.0);
        const Tensor<double> wt =
            random_uniform<double>({cin, cout, kh, kw}, st.child("w"), -1.0, 1.0);
        const Tensor<double> b = random_uniform<double>({cout}, st.child("b"), -1.0, 1.0);
        Tape<double> tape(false);
        GraphContext<double> ctx(tape);
        const Tensor<double> got =
            transposed_conv2d(ctx.input(x), ctx.input(wt), ctx.input(b), sh, sw, ph, pw).value();
        track(oracle::max_abs_diff(got, oracle::transposed_conv2d(x, wt, b, sh, sw, ph, pw)),
              "transposed_conv", trial);
    }

    for (int trial = 0; trial < 100; ++trial) {
        const RngStream st = root.child("mse").child(static_cast<std::uint64_t>(trial));
        auto cur = st.cursor();
        const int r = 1 + int(cur.next_below(5)), c = 1 + int(cur.next_below(5));
        const Tensor<double> a = random_uniform<double>({r, c}, st.child("a"), -2.0, 2.0);
        const Tensor<double> b = random_uniform<double>({r, c}, st.child("b"), -2.0, 2.0);
        Tape<double> tape(false);
        GraphContext<double> ctx(tape);
        const double got = mse(ctx.input(a), ctx.input(b)).value()[0];
        track(std::abs(got - oracle::mse(a, b)), "mse", trial);
    }

    for (int trial = 0; trial < 100; ++trial) {
        const RngStream st = root.child("rmse").child(static_cast<std::uint64_t>(trial));
        auto cur = st.cursor();
        const int n = 1 + int(cur.next_below(20));
        std::vector<std::array<double, 2>> p, t;
        for (int i = 0; i < n; ++i) {
            p.push_back({cur.next_uniform() * 400 - 200, cur.next_uniform() * 250 - 125});
            t.push_back({cur.next_uniform() * 400 - 200, cur.next_uniform() * 250 - 125});
        }
        track(std::abs(rmse_mm(p, t) - oracle::rmse_mm(p, t)), "rmse", trial);
    }

    for (int trial = 0; trial < 100; ++trial) {
        const RngStream st = root.child("attn").child(static_cast<std::uint64_t>(trial));
        auto cur = st.cursor();
        const int n = 2 + int(cur.next_below(5)), d = 2 + int(cur.next_below(5));
        MultiHeadAttention<double> attn("a", d, 1, st.child("init"));
        attn.wq.b.value = random_uniform<double>({d}, st.child("bq"), -0.5, 0.5);
        attn.wk.b.value = random_uniform<double>({d}, st.child("bk"), -0.5, 0.5);
        attn.wv.b.value = random_uniform<double>({d}, st.child("bv"), -0.5, 0.5);
        attn.wo.b.value = random_uniform<double>({d}, st.child("bo"), -0.5, 0.5);
        const Tensor<double> x = random_uniform<double>({n, d}, st.child("x"), -1.0, 1.0);
        Tape<double> tape(false);
        GraphContext<double> ctx(tape);
        const Tensor<double> got = attn(ctx, ctx.input(x)).value();
        const Tensor<double> want = oracle::attention_1head(
            x, attn.wq.w.value, attn.wq.b.value, attn.wk.w.value, attn.wk.b.value,
            attn.wv.w.value, attn.wv.b.value, attn.wo.w.value, attn.wo.b.value);
        track(oracle::max_abs_diff(got, want), "attention", trial);
    }
    return "conv/depthwise/tconv/mse/rmse/attention, worst |diff| " + fmt(worst, 3);
}

struct Criterion {
    int id;
    std::string label;
    std::function<std::string()> body;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "full-scale shape chain and forward latency", criterion_shape_chain},
        {2, "gradient checks, layers and end-to-end desk model", criterion_gradients},
        {3, "zero-weight run equals single-task run after 50 steps", criterion_zero_weight},
        {4, "total loss decomposes into its weighted terms", criterion_decomposition},
        {5, "learning-rate plateaus switch at epochs 6 and 12", criterion_schedule},
        {6, "desk model overfits 8 samples within 500 steps", criterion_overfit},
        {7, "trained model beats the constant-mean baseline by 20% on 3 seeds",
         criterion_beats_baseline},
        {8, "some nonzero reconstruction weight beats weight zero in the sweep",
         criterion_sweep_shape},
        {9, "byte-level determinism and checkpoint persistence", criterion_determinism},
        {10, "op forwards match naive loop oracles at 1e-12", criterion_oracles},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        std::string verdict, detail;
        try {
            detail = c.body();
            verdict = "[PASS]";
        } catch (const std::exception& e) {
            detail = e.what();
            verdict = "[FAIL]";
            ++failures;
        }
        std::cout << verdict << " criterion " << c.id << ": " << c.label << " (" << detail << ")"
                  << std::endl;
    }
    std::cout << (failures == 0 ? "acceptance: all criteria passed"
                                : "acceptance: " + std::to_string(failures) + " criterion(s) failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
