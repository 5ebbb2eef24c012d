#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegmtl/data.hpp"
#include "eegmtl/model.hpp"
#include "eegmtl/weights.hpp"

namespace eegmtl {

struct TrainConfig {
    int epochs = 15;
    double base_lr = 1e-4;
    double decay_factor = 0.9;
    int decay_every = 6;            // epochs per decay step
    int batch_size = 64;
    std::string optimizer = "adam"; // or "sgd"
    std::uint64_t seed = 1;
    double clip_norm = 1.0;         // global-norm gradient clip; <= 0 disables
    int max_steps = 0;              // stop after this many optimizer steps; 0 = no cap

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ShapeError("train config: " + what);
        };
        require(epochs >= 1, "epochs must be >= 1");
        require(base_lr > 0.0, "base learning rate must be > 0");
        require(decay_factor > 0.0 && decay_factor <= 1.0, "decay factor must be in (0,1]");
        require(decay_every >= 1, "decay interval must be >= 1");
        require(batch_size >= 1, "batch size must be >= 1");
        require(optimizer == "adam" || optimizer == "sgd", "optimizer must be adam or sgd");
        require(max_steps >= 0, "step cap must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"base_lr", c.base_lr},
                       {"decay_factor", c.decay_factor},
                       {"decay_every", c.decay_every},
                       {"batch_size", c.batch_size},
                       {"optimizer", c.optimizer},
                       {"seed", c.seed},
                       {"clip_norm", c.clip_norm},
                       {"max_steps", c.max_steps}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("base_lr").get_to(c.base_lr);
    j.at("decay_factor").get_to(c.decay_factor);
    j.at("decay_every").get_to(c.decay_every);
    j.at("batch_size").get_to(c.batch_size);
    j.at("optimizer").get_to(c.optimizer);
    j.at("seed").get_to(c.seed);
    j.at("clip_norm").get_to(c.clip_norm);
    j.at("max_steps").get_to(c.max_steps);
}

/// base_lr * decay_factor^floor(epoch / decay_every)
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) {
        throw ShapeError("epoch " + std::to_string(epoch) + " outside schedule of " +
                         std::to_string(cfg.epochs));
    }
    return cfg.base_lr * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

// ---- optimizers -------------------------------------------------------------

template <class S>
inline void require_finite_grads(const std::vector<Parameter<S>*>& params) {
    for (const Parameter<S>* p : params) {
        if (!p->grad.all_finite()) {
            throw NumericError("non-finite gradient in parameter " + p->name);
        }
    }
}

template <class S>
inline double global_grad_norm(const std::vector<Parameter<S>*>& params) {
    double sq = 0.0;
    for (const Parameter<S>* p : params) {
        for (std::size_t i = 0; i < p->grad.size(); ++i) {
            const double g = static_cast<double>(p->grad[i]);
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

/// Scales all grads so their global norm is at most max_norm. Returns the
/// pre-clip norm.
template <class S>
inline double clip_grad_norm(const std::vector<Parameter<S>*>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (max_norm > 0.0 && norm > max_norm) {
        const S factor = static_cast<S>(max_norm / norm);
        for (Parameter<S>* p : params) {
            for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= factor;
        }
    }
    return norm;
}

template <class S>
class SgdOptimizer {
public:
    explicit SgdOptimizer(const std::vector<Parameter<S>*>& params) : params_(params) {}

    void step(double lr) {
        require_finite_grads(params_);
        for (Parameter<S>* p : params_) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                p->value[i] -= static_cast<S>(lr) * p->grad[i];
            }
        }
    }

private:
    std::vector<Parameter<S>*> params_;
};

template <class S>
class AdamOptimizer {
public:
    explicit AdamOptimizer(const std::vector<Parameter<S>*>& params, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8)
        : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Parameter<S>* p : params) {
            m_.emplace_back(p->value.dims());
            v_.emplace_back(p->value.dims());
        }
    }

    void step(double lr) {
        require_finite_grads(params_);
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Parameter<S>& p = *params_[pi];
            Tensor<S>& m = m_[pi];
            Tensor<S>& v = v_[pi];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = static_cast<double>(p.grad[i]);
                const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * g;
                const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * g * g;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                p.value[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    std::vector<Parameter<S>*> params_;
    std::vector<Tensor<S>> m_, v_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// ---- metrics -----------------------------------------------------------------

/// Root mean squared Euclidean distance (mm) between prediction and target pairs.
inline double rmse_mm(std::span<const std::array<double, 2>> preds,
                      std::span<const std::array<double, 2>> targets) {
    if (preds.empty() || preds.size() != targets.size()) {
        throw ShapeError("rmse needs matching nonempty prediction/target counts, got " +
                         std::to_string(preds.size()) + " and " + std::to_string(targets.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double dx = preds[i][0] - targets[i][0];
        const double dy = preds[i][1] - targets[i][1];
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / static_cast<double>(preds.size()));
}

/// RMSE of the constant predictor that always answers the train-set mean gaze.
inline double naive_baseline(std::span<const std::array<double, 2>> train_targets,
                             std::span<const std::array<double, 2>> eval_targets) {
    if (train_targets.empty() || eval_targets.empty()) {
        throw ShapeError("naive baseline needs nonempty target sets");
    }
    std::array<double, 2> mean{0.0, 0.0};
    for (const auto& t : train_targets) {
        mean[0] += t[0];
        mean[1] += t[1];
    }
    mean[0] /= static_cast<double>(train_targets.size());
    mean[1] /= static_cast<double>(train_targets.size());
    std::vector<std::array<double, 2>> preds(eval_targets.size(), mean);
    return rmse_mm(preds, eval_targets);
}

inline std::vector<std::array<double, 2>> gather_gaze(const Dataset& data,
                                                      std::span<const int> idx) {
    std::vector<std::array<double, 2>> out;
    out.reserve(idx.size());
    for (int i : idx) {
        const auto& g = data.samples[static_cast<std::size_t>(i)].gaze;
        out.push_back({static_cast<double>(g[0]), static_cast<double>(g[1])});
    }
    return out;
}

template <class S>
double eval_rmse(MtlTransformer<S>& model, const Dataset& data, std::span<const int> idx) {
    std::vector<std::array<double, 2>> preds, targets;
    preds.reserve(idx.size());
    targets.reserve(idx.size());
    for (int i : idx) {
        const Sample& s = data.samples[static_cast<std::size_t>(i)];
        Tensor<S> eeg = s.eeg.template cast<S>();
        const Tensor<S> p = model.predict_gaze(eeg);
        preds.push_back({static_cast<double>(p[0]), static_cast<double>(p[1])});
        targets.push_back({static_cast<double>(s.gaze[0]), static_cast<double>(s.gaze[1])});
    }
    return rmse_mm(preds, targets);
}

// ---- run report ----------------------------------------------------------------

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double main = 0.0;
    double recon = 0.0;
    double pupil = 0.0;
    double l2 = 0.0;
    double total = 0.0;
    double val_rmse = 0.0;
};

struct RunReport {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_rmse = 0.0;
    double test_rmse = 0.0;
    double naive_test_rmse = 0.0;
    std::uint64_t config_hash = 0;
    double wall_seconds = 0.0;   // excluded from equality: timing is not a metric

    /// Everything except wall time; two equally seeded runs must agree on this.
    bool same_metrics(const RunReport& other) const {
        if (!(model_cfg == other.model_cfg) || epochs.size() != other.epochs.size() ||
            best_epoch != other.best_epoch || best_val_rmse != other.best_val_rmse ||
            test_rmse != other.test_rmse || naive_test_rmse != other.naive_test_rmse ||
            config_hash != other.config_hash) {
            return false;
        }
        for (std::size_t i = 0; i < epochs.size(); ++i) {
            const EpochStats& a = epochs[i];
            const EpochStats& b = other.epochs[i];
            if (a.epoch != b.epoch || a.lr != b.lr || a.main != b.main || a.recon != b.recon ||
                a.pupil != b.pupil || a.l2 != b.l2 || a.total != b.total ||
                a.val_rmse != b.val_rmse) {
                return false;
            }
        }
        return true;
    }

    std::string text() const {
        std::ostringstream os;
        os.setf(std::ios::scientific);
        os.precision(6);
        os << "epoch  lr            main          recon         pupil         l2            total"
              "         val_rmse_mm\n";
        for (const EpochStats& e : epochs) {
            os << e.epoch << "      " << e.lr << "  " << e.main << "  " << e.recon << "  "
               << e.pupil << "  " << e.l2 << "  " << e.total << "  " << e.val_rmse << "\n";
        }
        os << "best_epoch " << best_epoch << "\n";
        os << "best_val_rmse_mm " << best_val_rmse << "\n";
        os << "test_rmse_mm " << test_rmse << "\n";
        os << "naive_test_rmse_mm " << naive_test_rmse << "\n";
        os << "config_hash " << config_hash << "\n";
        os << "seed " << train_cfg.seed << "\n";
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json eps = nlohmann::json::array();
        for (const EpochStats& e : epochs) {
            eps.push_back({{"epoch", e.epoch},
                           {"lr", e.lr},
                           {"main", e.main},
                           {"recon", e.recon},
                           {"pupil", e.pupil},
                           {"l2", e.l2},
                           {"total", e.total},
                           {"val_rmse_mm", e.val_rmse}});
        }
        return {{"model", model_cfg},
                {"train", train_cfg},
                {"epochs", eps},
                {"best_epoch", best_epoch},
                {"best_val_rmse_mm", best_val_rmse},
                {"test_rmse_mm", test_rmse},
                {"naive_test_rmse_mm", naive_test_rmse},
                {"config_hash", config_hash},
                {"wall_seconds", wall_seconds}};
    }
};

inline std::uint64_t config_hash(const ModelConfig& mc, const TrainConfig& tc) {
    const std::string s = nlohmann::json(mc).dump() + "|" + nlohmann::json(tc).dump();
    return detail::fnv1a64(s);
}

// ---- training loop ---------------------------------------------------------------

/// Full training run: shuffled batches, total-loss backward, clipped optimizer
/// steps, per-epoch eval-mode validation RMSE, best-val checkpointing. Test
/// RMSE is computed with the best-validation weights. Deterministic given the
/// config seed. Throws NumericError with epoch/batch coordinates if the loss
/// goes non-finite.
template <class S>
RunReport train_model(MtlTransformer<S>& model, const Dataset& data, const SplitIndices& split,
                      const TrainConfig& tcfg, const std::string& checkpoint_path = "") {
    tcfg.validate();
    if (data.channels != model.config().channels || data.timesteps != model.config().timesteps) {
        throw ShapeError("dataset geometry " + std::to_string(data.channels) + "x" +
                         std::to_string(data.timesteps) + " does not match model " +
                         std::to_string(model.config().channels) + "x" +
                         std::to_string(model.config().timesteps));
    }
    if (model.config().pupil_enabled() && !data.has_pupil) {
        throw ShapeError("pupil head enabled but dataset has-pupil flag is off");
    }
    const auto t0 = std::chrono::steady_clock::now();

    auto& params = model.parameters();
    SgdOptimizer<S> sgd(params);
    AdamOptimizer<S> adam(params);
    const bool use_adam = tcfg.optimizer == "adam";

    RunReport report;
    report.model_cfg = model.config();
    report.train_cfg = tcfg;
    report.config_hash = config_hash(model.config(), tcfg);

    const RngStream drop_root = RngStream(tcfg.seed).child("dropout");
    std::vector<Tensor<S>> best_values;
    int steps = 0;
    bool stopped = false;

    for (int epoch = 0; epoch < tcfg.epochs && !stopped; ++epoch) {
        const double lr = lr_schedule(epoch, tcfg);
        BatchIter batches(split.train, tcfg.batch_size, tcfg.seed, epoch);

        double sum_main = 0, sum_recon = 0, sum_pupil = 0, sum_l2 = 0, sum_total = 0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < batches.batch_count(); ++b) {
            const std::span<const int> idx = batches.batch(b);
            std::vector<const Tensor<S>*> eeg;
            std::vector<std::array<S, 2>> gaze;
            std::vector<S> pupil;
            eeg.reserve(idx.size());
            for (int i : idx) {
                const Sample& s = data.samples[static_cast<std::size_t>(i)];
                if constexpr (std::is_same_v<S, float>) {
                    eeg.push_back(&s.eeg);
                } else {
                    static_assert(std::is_same_v<S, float>, "training runs on float tensors");
                }
                gaze.push_back({static_cast<S>(s.gaze[0]), static_cast<S>(s.gaze[1])});
                if (data.has_pupil) pupil.push_back(static_cast<S>(s.pupil));
            }

            Tape<S> tape;
            GraphContext<S> ctx(tape);
            LossVars<S> loss = model.build_losses(ctx, eeg, gaze, pupil, true,
                                                  drop_root.child(static_cast<std::uint64_t>(steps)));
            if (!std::isfinite(loss.values.total)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(b));
            }
            model.zero_grads();
            tape.backward(loss.total);
            ctx.accumulate_param_grads();
            clip_grad_norm(params, tcfg.clip_norm);
            if (use_adam) {
                adam.step(lr);
            } else {
                sgd.step(lr);
            }

            const double w = static_cast<double>(idx.size());
            sum_main += loss.values.main * w;
            sum_recon += loss.values.recon * w;
            sum_pupil += loss.values.pupil * w;
            sum_l2 += loss.values.l2 * w;
            sum_total += loss.values.total * w;
            seen += idx.size();

            ++steps;
            if (tcfg.max_steps > 0 && steps >= tcfg.max_steps) {
                stopped = true;
                break;
            }
        }

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        const double inv = seen > 0 ? 1.0 / static_cast<double>(seen) : 0.0;
        es.main = sum_main * inv;
        es.recon = sum_recon * inv;
        es.pupil = sum_pupil * inv;
        es.l2 = sum_l2 * inv;
        es.total = sum_total * inv;
        es.val_rmse = eval_rmse(model, data, split.val);
        report.epochs.push_back(es);

        if (report.best_epoch < 0 || es.val_rmse < report.best_val_rmse) {
            report.best_epoch = epoch;
            report.best_val_rmse = es.val_rmse;
            best_values.clear();
            best_values.reserve(params.size());
            for (const Parameter<S>* p : params) best_values.push_back(p->value);
            if (!checkpoint_path.empty()) {
                save_weights(checkpoint_path, model.config(), params);
            }
        }
    }

    // test metrics use the best-validation weights
    if (!best_values.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    }
    report.test_rmse = eval_rmse(model, data, split.test);
    const auto train_gaze = gather_gaze(data, split.train);
    const auto test_gaze = gather_gaze(data, split.test);
    report.naive_test_rmse = naive_baseline(train_gaze, test_gaze);

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace eegmtl
