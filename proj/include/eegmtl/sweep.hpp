#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "eegmtl/train.hpp"

namespace eegmtl {

/// Reconstruction-weight sweep: one full training run per (weight, seed),
/// with seeds shared across weights so comparisons are paired (same split,
/// same init, same shuffle for a given seed).
struct SweepSpec {
    std::vector<double> weights = {0.0, 17.5, 35.0, 70.0, 140.0, 280.0, 560.0};
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ShapeError("sweep spec: " + what);
        };
        require(!weights.empty(), "needs at least one weight");
        require(!seeds.empty(), "needs at least one seed");
        for (std::size_t i = 0; i < weights.size(); ++i) {
            require(weights[i] >= 0.0, "weights must be >= 0");
            if (i > 0) require(weights[i] > weights[i - 1], "weights must be strictly increasing");
        }
    }
};

struct SweepRow {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    double test_rmse = 0.0;
    bool ok = false;
    std::string error;
};

struct SweepSummary {
    double alpha = 0.0;
    int n_ok = 0;
    double mean_rmse = 0.0;
    double std_rmse = 0.0;   // sample std; 0 when n_ok < 2
};

struct SweepResult {
    std::vector<SweepRow> rows;          // sorted by (alpha, seed)
    std::vector<SweepSummary> summary;   // sorted by alpha

    std::string rows_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << "alpha_recon,seed,test_rmse_mm,status\n";
        for (const SweepRow& r : rows) {
            os << r.alpha << "," << r.seed << ",";
            if (r.ok) os << r.test_rmse;
            os << "," << (r.ok ? "ok" : "failed") << "\n";
        }
        return os.str();
    }

    std::string summary_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << "alpha_recon,n_ok,mean_rmse_mm,std_rmse_mm\n";
        for (const SweepSummary& s : summary) {
            os << s.alpha << "," << s.n_ok << "," << s.mean_rmse << "," << s.std_rmse << "\n";
        }
        return os.str();
    }
};

/// An aborted run (non-finite loss, io failure) becomes a failed row and the
/// sweep continues; nothing else is shared between runs.
inline SweepResult run_sweep(const ModelConfig& base_cfg, const TrainConfig& base_tcfg,
                             const Dataset& data, const SweepSpec& spec) {
    spec.validate();
    SweepResult out;
    for (double w : spec.weights) {
        for (std::uint64_t seed : spec.seeds) {
            SweepRow row;
            row.alpha = w;
            row.seed = seed;
            try {
                ModelConfig cfg = base_cfg;
                cfg.alpha_recon = w;
                cfg.alpha_pupil = 0.0;
                TrainConfig tcfg = base_tcfg;
                tcfg.seed = seed;
                MtlTransformer<float> model(cfg, seed);
                const SplitIndices split = split_dataset(data.size(), seed);
                const RunReport rep = train_model(model, data, split, tcfg);
                row.test_rmse = rep.test_rmse;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            out.rows.push_back(std::move(row));
        }
    }

    for (double w : spec.weights) {
        SweepSummary s;
        s.alpha = w;
        double sum = 0.0;
        for (const SweepRow& r : out.rows) {
            if (r.alpha == w && r.ok) {
                ++s.n_ok;
                sum += r.test_rmse;
            }
        }
        if (s.n_ok > 0) {
            s.mean_rmse = sum / s.n_ok;
            double sq = 0.0;
            for (const SweepRow& r : out.rows) {
                if (r.alpha == w && r.ok) sq += (r.test_rmse - s.mean_rmse) * (r.test_rmse - s.mean_rmse);
            }
            s.std_rmse = s.n_ok > 1 ? std::sqrt(sq / (s.n_ok - 1)) : 0.0;
        }
        out.summary.push_back(s);
    }
    return out;
}

} // namespace eegmtl
