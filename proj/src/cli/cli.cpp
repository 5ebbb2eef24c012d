#include "eegmtl/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eegmtl/check_suite.hpp"
#include "eegmtl/data.hpp"
#include "eegmtl/model.hpp"
#include "eegmtl/svg.hpp"
#include "eegmtl/sweep.hpp"
#include "eegmtl/train.hpp"
#include "eegmtl/weights.hpp"

namespace eegmtl {
namespace {

namespace fs = std::filesystem;

std::string default_out_dir() {
    const char* e = std::getenv("EEGMTL_OUT");
    return (e != nullptr && *e != '\0') ? std::string(e) : std::string(".");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(IoError::Kind::write_failed, "cannot create directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
    os.flush();
    if (!os) throw IoError(IoError::Kind::write_failed, "cannot write " + path);
}

ModelConfig preset_config(const std::string& preset) {
    return preset == "paper" ? ModelConfig::paper() : ModelConfig::desk();
}

/// Re-derives the patch grid after retargeting a preset to the dataset's
/// geometry; validate() then rejects kernels the data cannot support.
ModelConfig fit_geometry(ModelConfig cfg, int channels, int timesteps) {
    cfg.channels = channels;
    cfg.timesteps = timesteps;
    cfg.patch_grid_h = cfg.derived_grid_h();
    cfg.patch_grid_w = cfg.derived_grid_w();
    cfg.validate();
    return cfg;
}

std::vector<int> split_selection(const SplitIndices& split, const std::string& which,
                                 std::size_t n) {
    if (which == "train") return split.train;
    if (which == "val") return split.val;
    if (which == "test") return split.test;
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
    return all;
}

struct LoadedModel {
    ModelConfig cfg;
    std::unique_ptr<MtlTransformer<float>> model;
};

LoadedModel load_model(const std::string& weights_path) {
    WeightFile wf = load_weights(weights_path);
    auto model = std::make_unique<MtlTransformer<float>>(wf.config, 0);
    apply_weights(model->parameters(), wf);
    return LoadedModel{wf.config, std::move(model)};
}

void check_geometry(const ModelConfig& cfg, const Dataset& data) {
    if (data.channels != cfg.channels || data.timesteps != cfg.timesteps) {
        throw ShapeError("dataset geometry " + std::to_string(data.channels) + "x" +
                         std::to_string(data.timesteps) + " does not match checkpoint " +
                         std::to_string(cfg.channels) + "x" + std::to_string(cfg.timesteps));
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

// ---- gen ---------------------------------------------------------------------

struct GenArgs {
    int n = 0;
    std::uint64_t seed = 1;
    std::string preset = "desk";
    std::string out;
    int channels = 0;   // 0 = preset default
    int timesteps = 0;
    bool no_pupil = false;
    GenConfig gen;
};

int cmd_gen(const GenArgs& a) {
    GenConfig cfg = a.gen;
    if (a.preset == "paper") {
        cfg.channels = 128;
        cfg.timesteps = 500;
    }
    if (a.channels > 0) cfg.channels = a.channels;
    if (a.timesteps > 0) cfg.timesteps = a.timesteps;
    cfg.with_pupil = !a.no_pupil;

    const std::string out = a.out.empty() ? default_out_dir() + "/data.eegc" : a.out;
    const Dataset data = generate_synthetic(a.n, cfg, a.seed);
    write_container(data, out);
    std::cout << "wrote " << out << ": n=" << data.size() << " channels=" << data.channels
              << " timesteps=" << data.timesteps << " pupil=" << (data.has_pupil ? "yes" : "no")
              << " seed=" << data.seed << "\n";
    return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data_path;
    std::string variant = "mtl1";
    std::string preset = "desk";
    std::string out;
    std::string init_encoder;
    double alpha_recon = -1.0; // <0 = keep preset default
    double alpha_pupil = -1.0;
    double dropout = -1.0;
    double l2 = -1.0;
    TrainConfig tcfg;
};

ModelConfig configure_variant(ModelConfig cfg, const TrainArgs& a) {
    if (a.alpha_recon >= 0.0) cfg.alpha_recon = a.alpha_recon;
    if (a.alpha_pupil >= 0.0) cfg.alpha_pupil = a.alpha_pupil;
    if (a.dropout >= 0.0) cfg.dropout_p = a.dropout;
    if (a.l2 >= 0.0) cfg.l2_coeff = a.l2;
    if (a.variant == "base") {
        cfg.alpha_recon = 0.0;
        cfg.alpha_pupil = 0.0;
    } else if (a.variant == "mtl1") {
        cfg.alpha_pupil = 0.0;
    } else { // mtl2
        cfg.alpha_recon = 0.0;
    }
    return cfg;
}

int cmd_train(const TrainArgs& a) {
    const Dataset data = read_container(a.data_path);
    ModelConfig cfg = configure_variant(
        fit_geometry(preset_config(a.preset), data.channels, data.timesteps), a);

    const std::string out = a.out.empty() ? default_out_dir() : a.out;
    ensure_dir(out);

    MtlTransformer<float> model(cfg, a.tcfg.seed);
    if (!a.init_encoder.empty()) {
        const WeightFile wf = load_weights(a.init_encoder);
        apply_weights(model.parameters(), wf, encoder_prefixes());
    }

    const SplitIndices split = split_dataset(data.size(), a.tcfg.seed);
    const RunReport report = train_model(model, data, split, a.tcfg, out + "/model.eegw");

    write_text(out + "/report.txt", report.text());
    write_text(out + "/report.json", report.to_json().dump(2) + "\n");
    std::cout << report.text();
    std::cout << "wrote " << out << "/model.eegw\n";
    return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string data_path;
    std::string weights;
    std::string split = "test";
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    LoadedModel lm = load_model(a.weights);
    const Dataset data = read_container(a.data_path);
    check_geometry(lm.cfg, data);

    const SplitIndices split = split_dataset(data.size(), a.seed);
    const std::vector<int> idx = split_selection(split, a.split, data.size());
    const double rmse = eval_rmse(*lm.model, data, idx);
    const double naive = naive_baseline(gather_gaze(data, split.train), gather_gaze(data, idx));

    std::ostringstream line;
    line << "split=" << a.split << " n=" << idx.size() << " rmse_mm=" << fmt(rmse)
         << " naive_rmse_mm=" << fmt(naive) << "\n";
    std::cout << line.str();
    if (!a.out.empty()) {
        ensure_dir(a.out);
        nlohmann::json j{{"split", a.split},
                         {"n", idx.size()},
                         {"rmse_mm", rmse},
                         {"naive_rmse_mm", naive}};
        write_text(a.out + "/eval.json", j.dump(2) + "\n");
    }
    return kExitOk;
}

// ---- sweep -------------------------------------------------------------------

struct SweepArgs {
    std::string data_path;
    std::string preset = "desk";
    std::string out;
    SweepSpec spec;
    TrainConfig tcfg;
};

int cmd_sweep(const SweepArgs& a) {
    const Dataset data = read_container(a.data_path);
    const ModelConfig cfg = fit_geometry(preset_config(a.preset), data.channels, data.timesteps);

    const std::string out = a.out.empty() ? default_out_dir() : a.out;
    ensure_dir(out);

    const SweepResult result = run_sweep(cfg, a.tcfg, data, a.spec);
    write_text(out + "/sweep_rows.csv", result.rows_csv());
    write_text(out + "/sweep_summary.csv", result.summary_csv());
    std::cout << result.summary_csv();
    std::cout << "wrote " << out << "/sweep_rows.csv and " << out << "/sweep_summary.csv\n";
    return kExitOk;
}

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
    std::string preset = "desk";
    double tolerance = 1e-4;
    double eps = 1e-5;
    std::size_t coord_cap = 0;
    bool skip_model = false;
    bool inject_bug = false;
};

void print_check(const CheckCase& c) {
    const bool ok = c.report.pass();
    std::size_t coords = 0;
    for (const auto& e : c.report.entries) coords += e.coords_checked;
    std::ostringstream os;
    os << (ok ? "[ ok ]" : "[FAIL]") << " " << c.name << " max_rel_err=" << fmt(c.report.max_rel_err())
       << " coords=" << coords;
    if (!ok) {
        for (const auto& e : c.report.entries) {
            if (e.flagged) {
                os << " worst=" << e.param << "[" << e.worst_coord << "]"
                   << " analytic=" << fmt(e.analytic) << " numeric=" << fmt(e.numeric);
                break;
            }
        }
    }
    std::cout << os.str() << "\n";
}

int cmd_gradcheck(const GradcheckArgs& a) {
    std::vector<CheckCase> cases = run_layer_gradient_checks(a.eps, a.tolerance, a.inject_bug);
    if (!a.skip_model) {
        cases.push_back(
            run_model_gradient_check(preset_config(a.preset), a.eps, a.tolerance, a.coord_cap));
    }
    bool all_ok = true;
    for (const CheckCase& c : cases) {
        print_check(c);
        all_ok = all_ok && c.report.pass();
    }
    std::cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << " (" << cases.size()
              << " checks, eps=" << fmt(a.eps) << ", tol=" << fmt(a.tolerance) << ")\n";
    return all_ok ? kExitOk : kExitCheckFailed;
}

// ---- plot --------------------------------------------------------------------

struct PlotArgs {
    std::string data_path;
    std::string weights;
    std::string split = "train";
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_plot(const PlotArgs& a) {
    LoadedModel lm = load_model(a.weights);
    const Dataset data = read_container(a.data_path);
    check_geometry(lm.cfg, data);

    const SplitIndices split = split_dataset(data.size(), a.seed);
    const std::vector<int> idx = split_selection(split, a.split, data.size());

    std::vector<std::array<double, 2>> truth, pred;
    truth.reserve(idx.size());
    pred.reserve(idx.size());
    std::ostringstream csv;
    csv << "true_x_mm,true_y_mm,pred_x_mm,pred_y_mm\n";
    for (int i : idx) {
        const Sample& s = data.samples[static_cast<std::size_t>(i)];
        Tensor<float> eeg = s.eeg;
        const Tensor<float> p = lm.model->predict_gaze(eeg);
        truth.push_back({double(s.gaze[0]), double(s.gaze[1])});
        pred.push_back({double(p[0]), double(p[1])});
        csv << fmt(truth.back()[0]) << "," << fmt(truth.back()[1]) << "," << fmt(pred.back()[0])
            << "," << fmt(pred.back()[1]) << "\n";
    }

    const std::string out = a.out.empty() ? default_out_dir() : a.out;
    ensure_dir(out);
    write_text(out + "/scatter.csv", csv.str());
    write_text(out + "/scatter.svg", scatter_svg(truth, pred));
    std::cout << "wrote " << out << "/scatter.csv and " << out << "/scatter.svg rows="
              << idx.size() << "\n";
    return kExitOk;
}

// ---- app wiring ----------------------------------------------------------------

void add_train_config_flags(CLI::App* sub, TrainConfig& t) {
    sub->add_option("--seed", t.seed, "run seed (init, split, shuffle, dropout)")
        ->capture_default_str();
    sub->add_option("--epochs", t.epochs, "training epochs")->check(CLI::Range(1, 100000))
        ->capture_default_str();
    sub->add_option("--lr", t.base_lr, "base learning rate")->capture_default_str();
    sub->add_option("--batch-size", t.batch_size, "samples per step")
        ->check(CLI::Range(1, 1 << 20))
        ->capture_default_str();
    sub->add_option("--optimizer", t.optimizer, "optimizer")
        ->check(CLI::IsMember({"adam", "sgd"}))
        ->capture_default_str();
    sub->add_option("--clip-norm", t.clip_norm, "global gradient-norm clip (<=0 disables)")
        ->capture_default_str();
    sub->add_option("--max-steps", t.max_steps, "stop after this many steps (0 = no cap)")
        ->capture_default_str();
    sub->add_option("--decay-every", t.decay_every, "epochs per learning-rate step")
        ->check(CLI::Range(1, 100000))
        ->capture_default_str();
    sub->add_option("--decay-factor", t.decay_factor, "multiplicative learning-rate decay")
        ->capture_default_str();
}

void add_model_override_flags(CLI::App* sub, TrainArgs& a) {
    sub->add_option("--alpha-recon", a.alpha_recon,
                    "reconstruction weight (variant may zero it)");
    sub->add_option("--alpha-pupil", a.alpha_pupil, "pupil weight (variant may zero it)");
    sub->add_option("--dropout", a.dropout, "prediction-head dropout probability");
    sub->add_option("--l2", a.l2, "l2 penalty coefficient");
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"synthetic-EEG gaze regression: data generation, training, evaluation"};
    app.require_subcommand(1);
    // one config file for the whole tool, with a [section] per subcommand;
    // explicit flags override file values, which override built-in defaults
    app.set_config("--config", "", "configuration file with one section per subcommand");

    int rc = kExitOk;

    GenArgs gen;
    CLI::App* sub_gen = app.add_subcommand("gen", "generate a synthetic dataset container");
    sub_gen->add_option("-n,--count", gen.n, "number of samples")
        ->required()
        ->check(CLI::Range(1, 1 << 26));
    sub_gen->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    sub_gen->add_option("--preset", gen.preset, "geometry preset")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    sub_gen->add_option("--out", gen.out, "output container path (default <out-dir>/data.eegc)");
    sub_gen->add_option("--channels", gen.channels, "override channel count");
    sub_gen->add_option("--timesteps", gen.timesteps, "override window length");
    sub_gen->add_flag("--no-pupil", gen.no_pupil, "omit pupil targets");
    sub_gen->add_option("--signal-gain", gen.gen.signal_gain, "planted component amplitude")
        ->capture_default_str();
    sub_gen->add_option("--noise-gain", gen.gen.noise_gain, "AR(1) noise amplitude")
        ->capture_default_str();
    sub_gen->add_option("--noise-rho", gen.gen.noise_rho, "AR(1) coefficient")
        ->capture_default_str();
    sub_gen->add_option("--artifact-rate", gen.gen.artifact_rate, "expected blink bursts per sample")
        ->capture_default_str();
    sub_gen->callback([&]() { rc = cmd_gen(gen); });

    TrainArgs train;
    CLI::App* sub_train = app.add_subcommand("train", "train a model on a dataset container");
    sub_train->add_option("--data", train.data_path, "dataset container path")->required();
    sub_train->add_option("--variant", train.variant,
                          "base (no aux), mtl1 (reconstruction), mtl2 (pupil)")
        ->check(CLI::IsMember({"base", "mtl1", "mtl2"}))
        ->capture_default_str();
    sub_train->add_option("--preset", train.preset, "model preset, retargeted to the data")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    sub_train->add_option("--out", train.out, "output directory")->envname("EEGMTL_OUT");
    sub_train->add_option("--init-encoder", train.init_encoder,
                          "load stem/depthwise/embed/encoder weights from this checkpoint");
    add_model_override_flags(sub_train, train);
    add_train_config_flags(sub_train, train.tcfg);
    sub_train->callback([&]() { rc = cmd_train(train); });

    EvalArgs ev;
    CLI::App* sub_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    sub_eval->add_option("--data", ev.data_path, "dataset container path")->required();
    sub_eval->add_option("--weights", ev.weights, "checkpoint path")->required();
    sub_eval->add_option("--split", ev.split, "which split to score")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    sub_eval->add_option("--seed", ev.seed, "split seed (match the training run)")
        ->capture_default_str();
    sub_eval->add_option("--out", ev.out, "optional directory for eval.json")
        ->envname("EEGMTL_OUT");
    sub_eval->callback([&]() { rc = cmd_eval(ev); });

    SweepArgs sweep;
    CLI::App* sub_sweep =
        app.add_subcommand("sweep", "train across reconstruction weights with paired seeds");
    sub_sweep->add_option("--data", sweep.data_path, "dataset container path")->required();
    sub_sweep->add_option("--preset", sweep.preset, "model preset, retargeted to the data")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    sub_sweep->add_option("--out", sweep.out, "output directory")->envname("EEGMTL_OUT");
    sub_sweep->add_option("--alpha-grid", sweep.spec.weights,
                          "reconstruction weights to sweep (strictly increasing)")
        ->capture_default_str();
    sub_sweep->add_option("--seeds", sweep.spec.seeds, "seeds, paired across weights")
        ->capture_default_str();
    add_train_config_flags(sub_sweep, sweep.tcfg);
    sub_sweep->callback([&]() { rc = cmd_sweep(sweep); });

    GradcheckArgs gc;
    CLI::App* sub_gc =
        app.add_subcommand("gradcheck", "finite-difference gradient checks, layers plus full model");
    sub_gc->add_option("--preset", gc.preset, "model preset for the end-to-end check")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    sub_gc->add_option("--tolerance", gc.tolerance, "max allowed relative error")
        ->capture_default_str();
    sub_gc->add_option("--eps", gc.eps, "finite-difference step")->capture_default_str();
    sub_gc->add_option("--coord-cap", gc.coord_cap,
                       "coordinates probed per parameter in the model check (0 = all)")
        ->capture_default_str();
    sub_gc->add_flag("--skip-model", gc.skip_model, "layer checks only");
    sub_gc->add_flag("--inject-bug", gc.inject_bug,
                     "add a deliberately wrong backward rule (harness self-test)");
    sub_gc->callback([&]() { rc = cmd_gradcheck(gc); });

    PlotArgs plot;
    CLI::App* sub_plot =
        app.add_subcommand("plot", "true-vs-predicted gaze scatter as CSV and SVG");
    sub_plot->add_option("--data", plot.data_path, "dataset container path")->required();
    sub_plot->add_option("--weights", plot.weights, "checkpoint path")->required();
    sub_plot->add_option("--split", plot.split, "which split to plot")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    sub_plot->add_option("--seed", plot.seed, "split seed (match the training run)")
        ->capture_default_str();
    sub_plot->add_option("--out", plot.out, "output directory")->envname("EEGMTL_OUT");
    sub_plot->callback([&]() { rc = cmd_plot(plot); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int cli_rc = app.exit(e);
        return cli_rc == 0 ? kExitOk : kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return rc;
}

} // namespace eegmtl
