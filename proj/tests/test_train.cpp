#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "eegmtl/train.hpp"
#include "oracles.hpp"

using namespace eegmtl;

namespace {

GenConfig desk_gen() {
    GenConfig cfg;
    cfg.channels = 8;
    cfg.timesteps = 64;
    return cfg;
}

TrainConfig quick_train() {
    TrainConfig t;
    t.epochs = 2;
    t.batch_size = 5;
    t.base_lr = 1e-3;
    t.seed = 3;
    return t;
}

Parameter<float>* find_param(MtlTransformer<float>& m, const std::string& name) {
    for (auto* p : m.parameters()) {
        if (p->name == name) return p;
    }
    REQUIRE(false);
    return nullptr;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("learning rate schedule steps down every decay interval") {
    TrainConfig cfg;
    cfg.epochs = 18;
    cfg.base_lr = 1e-4;
    cfg.decay_factor = 0.9;
    cfg.decay_every = 6;

    CHECK(lr_schedule(0, cfg) == 1e-4);
    CHECK(lr_schedule(5, cfg) == 1e-4);
    CHECK(lr_schedule(6, cfg) == 1e-4 * 0.9);
    CHECK(lr_schedule(11, cfg) == 1e-4 * 0.9);
    CHECK(lr_schedule(12, cfg) == 1e-4 * std::pow(0.9, 2));
    CHECK(lr_schedule(12, cfg) == doctest::Approx(8.1e-5).epsilon(1e-12));
    CHECK(lr_schedule(17, cfg) == lr_schedule(12, cfg));

    CHECK_THROWS_AS(lr_schedule(-1, cfg), ShapeError);
    CHECK_THROWS_AS(lr_schedule(18, cfg), ShapeError);
}

TEST_CASE("train config validation") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());

    auto reject = [](TrainConfig c) { CHECK_THROWS_AS(c.validate(), ShapeError); };
    TrainConfig c;
    c.epochs = 0;
    reject(c);
    c = TrainConfig{};
    c.base_lr = 0.0;
    reject(c);
    c = TrainConfig{};
    c.decay_factor = 0.0;
    reject(c);
    c = TrainConfig{};
    c.decay_factor = 1.1;
    reject(c);
    c = TrainConfig{};
    c.batch_size = 0;
    reject(c);
    c = TrainConfig{};
    c.optimizer = "rmsprop";
    reject(c);
    c = TrainConfig{};
    c.max_steps = -1;
    reject(c);

    c = TrainConfig{};
    c.decay_factor = 1.0; // flat schedule is allowed
    CHECK_NOTHROW(c.validate());

    const nlohmann::json j = t;
    CHECK(j.get<TrainConfig>().optimizer == "adam");
}

TEST_CASE("sgd applies lr * grad, clip rescales to the requested norm") {
    Parameter<float> p("p", Tensor<float>::of({1.0f, 2.0f}));
    p.grad[0] = 0.5f;
    p.grad[1] = -1.0f;
    std::vector<Parameter<float>*> params{&p};
    SgdOptimizer<float> sgd(params);
    sgd.step(0.1);
    CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-7));
    CHECK(p.value[1] == doctest::Approx(2.1).epsilon(1e-7));

    p.grad[0] = 3.0f;
    p.grad[1] = 4.0f;
    const double pre = clip_grad_norm(params, 1.0);
    CHECK(pre == doctest::Approx(5.0).epsilon(1e-7));
    CHECK(p.grad[0] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(p.grad[1] == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-6));

    // below the threshold nothing moves
    const double pre2 = clip_grad_norm(params, 10.0);
    CHECK(pre2 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p.grad[0] == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("adam's first step is close to lr in the gradient direction") {
    Parameter<float> p("p", Tensor<float>::of({1.0f, 1.0f}));
    p.grad[0] = 0.37f;
    p.grad[1] = -2.5f;
    std::vector<Parameter<float>*> params{&p};
    AdamOptimizer<float> adam(params);
    adam.step(0.01);
    // mhat = g, vhat = g^2, so the update is lr * g/(|g| + eps) ~= lr * sign(g)
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
    CHECK(p.value[1] == doctest::Approx(1.0 + 0.01).epsilon(1e-5));

    // constant gradient keeps pushing the same way
    for (int i = 0; i < 5; ++i) {
        p.grad[0] = 0.37f;
        p.grad[1] = -2.5f;
        adam.step(0.01);
    }
    CHECK(p.value[0] < 0.99);
    CHECK(p.value[1] > 1.01);
}

TEST_CASE("optimizers refuse non-finite gradients") {
    Parameter<float> p("p", Tensor<float>::of({1.0f}));
    p.grad[0] = std::numeric_limits<float>::quiet_NaN();
    std::vector<Parameter<float>*> params{&p};
    SgdOptimizer<float> sgd(params);
    CHECK_THROWS_AS(sgd.step(0.1), NumericError);
    AdamOptimizer<float> adam(params);
    CHECK_THROWS_AS(adam.step(0.1), NumericError);
}

TEST_CASE("rmse is the root mean squared euclidean distance") {
    std::vector<std::array<double, 2>> preds{{0.0, 0.0}};
    std::vector<std::array<double, 2>> targets{{3.0, 4.0}};
    CHECK(rmse_mm(preds, targets) == doctest::Approx(5.0).epsilon(1e-12));

    preds = {{0.0, 0.0}, {3.0, 4.0}};
    targets = {{3.0, 4.0}, {3.0, 4.0}};
    CHECK(rmse_mm(preds, targets) == doctest::Approx(5.0 / std::sqrt(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(rmse_mm({}, {}), ShapeError);
    CHECK_THROWS_AS(rmse_mm(preds, std::span<const std::array<double, 2>>(targets.data(), 1)),
                    ShapeError);

    // agrees with the independent oracle on random pairs
    const RngStream st(0x4E);
    auto cur = st.cursor();
    std::vector<std::array<double, 2>> a, b;
    for (int i = 0; i < 50; ++i) {
        a.push_back({cur.next_uniform() * 100, cur.next_uniform() * 100});
        b.push_back({cur.next_uniform() * 100, cur.next_uniform() * 100});
    }
    CHECK(rmse_mm(a, b) == doctest::Approx(oracle::rmse_mm(a, b)).epsilon(1e-12));
}

TEST_CASE("naive baseline predicts the train-mean gaze") {
    std::vector<std::array<double, 2>> train{{0.0, 0.0}, {10.0, 0.0}};
    std::vector<std::array<double, 2>> eval{{5.0, 12.0}};
    CHECK(naive_baseline(train, eval) == doctest::Approx(12.0).epsilon(1e-12));
    eval = {{5.0, 0.0}};
    CHECK(naive_baseline(train, eval) == doctest::Approx(0.0));
    CHECK_THROWS_AS(naive_baseline({}, eval), ShapeError);
    CHECK_THROWS_AS(naive_baseline(train, {}), ShapeError);
}

TEST_CASE("the decay term shifts each bound gradient by 2*lambda*theta") {
    ModelConfig base = ModelConfig::desk();
    base.dropout_p = 0.0;
    ModelConfig with_l2 = base;
    base.l2_coeff = 0.0;
    with_l2.l2_coeff = 0.01;

    MtlTransformer<float> a(base, 17);
    MtlTransformer<float> b(with_l2, 17);
    const Dataset data = generate_synthetic(2, desk_gen(), 40);
    std::vector<const Tensor<float>*> eeg{&data.samples[0].eeg, &data.samples[1].eeg};
    std::vector<std::array<float, 2>> gaze;
    std::vector<float> pupil;
    for (int i = 0; i < 2; ++i) {
        gaze.push_back({data.samples[i].gaze[0], data.samples[i].gaze[1]});
        pupil.push_back(data.samples[i].pupil);
    }

    auto run = [&](MtlTransformer<float>& m) {
        Tape<float> tape;
        GraphContext<float> ctx(tape);
        const LossVars<float> lv = m.build_losses(ctx, eeg, gaze, pupil, true, RngStream(1));
        m.zero_grads();
        tape.backward(lv.total);
        ctx.accumulate_param_grads();
    };
    run(a);
    run(b);

    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& pa = *a.parameters()[i];
        const auto& pb = *b.parameters()[i];
        for (std::size_t k = 0; k < pa.grad.size(); ++k) {
            const double expected = 2.0 * 0.01 * double(pa.value[k]);
            const double got = double(pb.grad[k]) - double(pa.grad[k]);
            CHECK(std::abs(got - expected) < 1e-5 * (1.0 + std::abs(double(pa.grad[k]))));
        }
    }
}

TEST_CASE("training runs are deterministic per seed and report the schedule") {
    const Dataset data = generate_synthetic(12, desk_gen(), 21);
    const SplitIndices split = split_dataset(data.size(), 21);
    const TrainConfig tcfg = quick_train();
    ModelConfig mcfg = ModelConfig::desk();

    MtlTransformer<float> m1(mcfg, tcfg.seed);
    const RunReport r1 = train_model(m1, data, split, tcfg);
    REQUIRE(r1.epochs.size() == 2);
    CHECK(r1.epochs[0].lr == lr_schedule(0, tcfg));
    CHECK(r1.epochs[1].lr == lr_schedule(1, tcfg));
    CHECK(r1.epochs[0].main > 0.0);
    CHECK(r1.epochs[0].recon > 0.0);
    CHECK(r1.epochs[0].pupil > 0.0);
    CHECK(r1.epochs[0].l2 > 0.0);
    CHECK(r1.best_epoch >= 0);
    CHECK(r1.best_val_rmse ==
          std::min(r1.epochs[0].val_rmse, r1.epochs[1].val_rmse));
    CHECK(r1.test_rmse > 0.0);
    CHECK(r1.naive_test_rmse > 0.0);
    CHECK(r1.config_hash != 0);
    CHECK(r1.wall_seconds > 0.0);

    // per-epoch totals decompose into the weighted terms; the graph total is
    // accumulated in float, so agreement is at single precision
    for (const EpochStats& e : r1.epochs) {
        const double expect = e.main + mcfg.alpha_recon * e.recon + mcfg.alpha_pupil * e.pupil +
                              mcfg.l2_coeff * e.l2;
        CHECK(e.total == doctest::Approx(expect).epsilon(1e-6));
    }

    MtlTransformer<float> m2(mcfg, tcfg.seed);
    RunReport r2 = train_model(m2, data, split, tcfg);
    r2.wall_seconds = -1.0; // timing must not participate in equality
    CHECK(r1.same_metrics(r2));
    CHECK(r2.same_metrics(r1));

    TrainConfig other = tcfg;
    other.seed = 4;
    MtlTransformer<float> m3(mcfg, other.seed);
    const RunReport r3 = train_model(m3, data, split, other);
    CHECK(!r1.same_metrics(r3));

    const nlohmann::json js = r1.to_json();
    CHECK(js.at("epochs").size() == 2);
    CHECK(js.at("test_rmse_mm").get<double>() == r1.test_rmse);
    CHECK(r1.text().find("best_epoch") != std::string::npos);
}

TEST_CASE("a step cap stops training mid-schedule") {
    const Dataset data = generate_synthetic(12, desk_gen(), 22);
    const SplitIndices split = split_dataset(data.size(), 22);
    TrainConfig tcfg = quick_train();
    tcfg.epochs = 5;
    tcfg.max_steps = 1;
    MtlTransformer<float> m(ModelConfig::desk(), tcfg.seed);
    const RunReport r = train_model(m, data, split, tcfg);
    CHECK(r.epochs.size() == 1);
}

TEST_CASE("checkpoint reload reproduces the reported metrics exactly") {
    const std::string path = temp_path("eegmtl_test_ckpt.eegw");
    const Dataset data = generate_synthetic(12, desk_gen(), 23);
    const SplitIndices split = split_dataset(data.size(), 23);
    const TrainConfig tcfg = quick_train();

    MtlTransformer<float> m(ModelConfig::desk(), tcfg.seed);
    const RunReport r = train_model(m, data, split, tcfg, path);

    const WeightFile wf = load_weights(path);
    CHECK(wf.config == m.config());
    CHECK(wf.tensors.size() == m.parameters().size());

    MtlTransformer<float> fresh(wf.config, 0);
    apply_weights(fresh.parameters(), wf);
    CHECK(eval_rmse(fresh, data, split.val) == r.best_val_rmse);
    CHECK(eval_rmse(fresh, data, split.test) == r.test_rmse);
    std::remove(path.c_str());
}

TEST_CASE("weight container round trip is bitwise and rejects mismatches") {
    const std::string path = temp_path("eegmtl_test_weights.eegw");
    MtlTransformer<float> m(ModelConfig::desk(), 31);
    save_weights(path, m.config(), m.parameters());

    const WeightFile wf = load_weights(path);
    REQUIRE(wf.tensors.size() == m.parameters().size());
    for (std::size_t i = 0; i < wf.tensors.size(); ++i) {
        CHECK(wf.tensors[i].first == m.parameters()[i]->name);
        CHECK(oracle::max_abs_diff(wf.tensors[i].second.cast<double>(),
                                   m.parameters()[i]->value.cast<double>()) == 0.0);
    }

    // loading into a fresh model restores every value
    MtlTransformer<float> fresh(ModelConfig::desk(), 99);
    apply_weights(fresh.parameters(), wf);
    for (std::size_t i = 0; i < wf.tensors.size(); ++i) {
        CHECK(oracle::max_abs_diff(fresh.parameters()[i]->value.cast<double>(),
                                   m.parameters()[i]->value.cast<double>()) == 0.0);
    }

    // exact-match mode reports missing and extra tensors by name
    WeightFile missing = wf;
    missing.tensors.erase(missing.tensors.begin());
    try {
        apply_weights(fresh.parameters(), missing);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.kind() == IoError::Kind::name_mismatch);
        CHECK(std::string(e.what()).find("stem.w") != std::string::npos);
    }

    WeightFile renamed = wf;
    renamed.tensors[0].first = "stem.weights";
    try {
        apply_weights(fresh.parameters(), renamed);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.kind() == IoError::Kind::name_mismatch);
    }

    WeightFile reshaped = wf;
    reshaped.tensors[0].second = Tensor<float>({1, 2, 3});
    try {
        apply_weights(fresh.parameters(), reshaped);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.kind() == IoError::Kind::shape_mismatch);
        CHECK(std::string(e.what()).find("stem.w") != std::string::npos);
    }

    // corrupted files keep their distinct kinds
    std::vector<std::uint8_t> bytes = detail::read_file(path);
    bytes[0] = 'X';
    const std::string bad = temp_path("eegmtl_test_weights_bad.eegw");
    detail::write_file(bad, bytes);
    try {
        load_weights(bad);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.kind() == IoError::Kind::bad_magic);
    }

    bytes = detail::read_file(path);
    bytes.resize(bytes.size() / 2);
    detail::write_file(bad, bytes);
    try {
        load_weights(bad);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.kind() == IoError::Kind::truncated);
    }

    std::remove(path.c_str());
    std::remove(bad.c_str());
}

TEST_CASE("prefix loading pulls in the encoder and leaves the heads alone") {
    const std::string path = temp_path("eegmtl_test_encoder.eegw");
    MtlTransformer<float> donor(ModelConfig::desk(), 51);
    save_weights(path, donor.config(), donor.parameters());
    const WeightFile wf = load_weights(path);

    MtlTransformer<float> target(ModelConfig::desk(), 52);
    std::vector<Tensor<float>> before;
    for (auto* p : target.parameters()) before.push_back(p->value);

    apply_weights(target.parameters(), wf, encoder_prefixes());

    for (std::size_t i = 0; i < target.parameters().size(); ++i) {
        const auto* p = target.parameters()[i];
        const bool shared = p->name.rfind("stem.", 0) == 0 ||
                            p->name.rfind("depthwise.", 0) == 0 ||
                            p->name.rfind("embed.", 0) == 0 ||
                            p->name.rfind("encoder.", 0) == 0;
        const auto& want = shared ? donor.parameters()[i]->value : before[i];
        CHECK(oracle::max_abs_diff(p->value.cast<double>(), want.cast<double>()) == 0.0);
    }
    std::remove(path.c_str());
}

TEST_CASE("training rejects geometry and target mismatches up front") {
    GenConfig wrong = desk_gen();
    wrong.channels = 4;
    const Dataset narrow = generate_synthetic(12, wrong, 1);
    const SplitIndices split = split_dataset(12, 1);
    MtlTransformer<float> m(ModelConfig::desk(), 1);
    CHECK_THROWS_AS(train_model(m, narrow, split, quick_train()), ShapeError);

    GenConfig dry = desk_gen();
    dry.with_pupil = false;
    const Dataset no_pupil = generate_synthetic(12, dry, 1);
    CHECK_THROWS_AS(train_model(m, no_pupil, split, quick_train()), ShapeError);

    ModelConfig solo = ModelConfig::desk();
    solo.alpha_pupil = 0.0;
    MtlTransformer<float> sm(solo, 1);
    CHECK_NOTHROW(train_model(sm, no_pupil, split, quick_train()));
}

TEST_CASE("a poisoned parameter surfaces as NumericError, not a silent step") {
    const Dataset data = generate_synthetic(12, desk_gen(), 24);
    const SplitIndices split = split_dataset(data.size(), 24);
    MtlTransformer<float> m(ModelConfig::desk(), 1);
    find_param(m, "head.gaze.fc2.b")->value[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(train_model(m, data, split, quick_train()), NumericError);
}
