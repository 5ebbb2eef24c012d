#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eegmtl/io_detail.hpp"
#include "eegmtl/rng.hpp"
#include "eegmtl/tensor.hpp"

namespace eegmtl {

struct Sample {
    Tensor<float> eeg;           // [C,T], z-normalized per sample
    std::array<float, 2> gaze;   // screen position, mm
    float pupil = 0.0f;          // z-scored; meaningful iff Dataset::has_pupil
};

struct Dataset {
    int channels = 0;
    int timesteps = 0;
    bool has_pupil = false;
    std::uint64_t seed = 0;      // generator seed, echoed in the container
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
};

// ---- container -------------------------------------------------------------
// Layout (little-endian, no padding): "EEGC", u16 version=1, u32 count,
// u16 C, u16 T, u8 flags (bit0 has-pupil), u64 seed; then per sample
// C*T f32 eeg (channel-major rows), 2 f32 gaze, 1 f32 pupil when flagged.

inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_container(const Dataset& ds) {
    std::vector<std::uint8_t> buf;
    const std::size_t ct = static_cast<std::size_t>(ds.channels) * ds.timesteps;
    buf.reserve(23 + ds.size() * (ct + 3) * 4);
    buf.push_back('E');
    buf.push_back('E');
    buf.push_back('G');
    buf.push_back('C');
    detail::put_u16(buf, kDatasetVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(ds.size()));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.channels));
    detail::put_u16(buf, static_cast<std::uint16_t>(ds.timesteps));
    detail::put_u8(buf, ds.has_pupil ? 1 : 0);
    detail::put_u64(buf, ds.seed);
    for (const Sample& s : ds.samples) {
        if (s.eeg.size() != ct) {
            throw ShapeError("sample eeg " + dims_str(s.eeg.dims()) + " does not match header " +
                             std::to_string(ds.channels) + "x" + std::to_string(ds.timesteps));
        }
        for (std::size_t i = 0; i < ct; ++i) detail::put_f32(buf, s.eeg[i]);
        detail::put_f32(buf, s.gaze[0]);
        detail::put_f32(buf, s.gaze[1]);
        if (ds.has_pupil) detail::put_f32(buf, s.pupil);
    }
    return buf;
}

inline void write_container(const Dataset& ds, const std::string& path) {
    detail::write_file(path, encode_container(ds));
}

inline Dataset decode_container(const std::uint8_t* data, std::size_t size,
                                const std::string& what) {
    detail::ByteReader r(data, size, what);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::string_view(magic, 4) != "EEGC") {
        throw IoError(IoError::Kind::bad_magic, what + ": not a dataset container");
    }
    const std::uint16_t version = r.u16();
    if (version != kDatasetVersion) {
        throw IoError(IoError::Kind::bad_version,
                      what + ": unsupported dataset version " + std::to_string(version));
    }
    Dataset ds;
    const std::uint32_t count = r.u32();
    ds.channels = r.u16();
    ds.timesteps = r.u16();
    ds.has_pupil = (r.u8() & 1) != 0;
    ds.seed = r.u64();
    if (ds.channels < 1 || ds.timesteps < 1) {
        throw IoError(IoError::Kind::truncated, what + ": degenerate geometry in header");
    }

    const std::size_t ct = static_cast<std::size_t>(ds.channels) * ds.timesteps;
    const std::size_t record = (ct + 2 + (ds.has_pupil ? 1 : 0)) * 4;
    const std::size_t payload = r.remaining();
    if (payload % record != 0) {
        throw IoError(IoError::Kind::truncated, what + ": payload ends mid-record");
    }
    if (payload / record != count) {
        throw IoError(IoError::Kind::count_mismatch,
                      what + ": header declares " + std::to_string(count) + " samples, payload holds " +
                          std::to_string(payload / record));
    }

    ds.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Sample s;
        s.eeg = Tensor<float>({ds.channels, ds.timesteps});
        for (std::size_t k = 0; k < ct; ++k) s.eeg[k] = r.f32();
        s.gaze[0] = r.f32();
        s.gaze[1] = r.f32();
        if (ds.has_pupil) s.pupil = r.f32();
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline Dataset read_container(const std::string& path) {
    const std::vector<std::uint8_t> buf = detail::read_file(path);
    return decode_container(buf.data(), buf.size(), path);
}

// ---- synthetic generation ----------------------------------------------------

/// Knobs for the planted-structure generator. Gaze targets sit on a grid of
/// fixation dots; the EEG mixes gaze-dependent rank-1 spatial x temporal
/// patterns with AR(1) noise and occasional blink-like bursts, then is
/// z-normalized per sample. Pupil size falls with gaze eccentricity.
struct GenConfig {
    int channels = 8;
    int timesteps = 64;
    bool with_pupil = true;
    int grid_nx = 5;
    int grid_ny = 5;
    double screen_x_mm = 200.0;   // dots span [-screen_x_mm, screen_x_mm]
    double screen_y_mm = 125.0;
    double signal_gain = 2.0;
    double noise_rho = 0.95;
    double noise_gain = 1.0;
    double artifact_rate = 0.1;   // expected bursts per sample
    double artifact_gain = 3.0;
    double pupil_noise = 0.1;

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw ShapeError("generator config: " + what);
        };
        require(channels >= 1 && timesteps >= 2, "geometry too small");
        require(grid_nx >= 1 && grid_ny >= 1, "grid extents must be positive");
        require(screen_x_mm > 0 && screen_y_mm > 0, "screen extents must be positive");
        require(noise_rho >= 0 && noise_rho < 1, "AR coefficient must be in [0,1)");
        require(artifact_rate >= 0, "artifact rate must be >= 0");
    }
};

namespace detail {

// DCT-II rows: mutually orthogonal across k, so the planted components do not
// mask one another spatially.
inline double planted_spatial(int k, int c, int channels) {
    return std::cos(M_PI * (k + 1) * (2.0 * c + 1.0) / (2.0 * channels));
}

inline double planted_temporal(int k, int t, int timesteps) {
    const double freq = k + 2.0;
    const double phase = k * (M_PI / 4.0);
    return std::sin(2.0 * M_PI * freq * (t + 0.5) / timesteps + phase);
}

struct GridMoments {
    double mean = 0.0;
    double sd = 1.0;
};

// Exact moments of -eccentricity over the uniform dot grid (plus independent
// noise variance), so pupil z-scoring needs no dataset-wide pass.
inline GridMoments pupil_moments(const GenConfig& cfg) {
    double sum = 0.0, sumsq = 0.0;
    for (int ix = 0; ix < cfg.grid_nx; ++ix) {
        for (int iy = 0; iy < cfg.grid_ny; ++iy) {
            const double gx = cfg.grid_nx == 1 ? 0.0 : -1.0 + 2.0 * ix / (cfg.grid_nx - 1.0);
            const double gy = cfg.grid_ny == 1 ? 0.0 : -1.0 + 2.0 * iy / (cfg.grid_ny - 1.0);
            const double v = -std::sqrt(gx * gx + gy * gy);
            sum += v;
            sumsq += v * v;
        }
    }
    const double n = static_cast<double>(cfg.grid_nx) * cfg.grid_ny;
    GridMoments m;
    m.mean = sum / n;
    const double var = sumsq / n - m.mean * m.mean;
    m.sd = std::sqrt(var + cfg.pupil_noise * cfg.pupil_noise);
    if (m.sd < 1e-12) m.sd = 1.0;
    return m;
}

} // namespace detail

inline Dataset generate_synthetic(int n, const GenConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (n < 1) throw ShapeError("sample count must be >= 1, got " + std::to_string(n));

    const int C = cfg.channels, T = cfg.timesteps;
    const detail::GridMoments pm = detail::pupil_moments(cfg);
    const RngStream root = RngStream(seed).child("synthetic");

    Dataset ds;
    ds.channels = C;
    ds.timesteps = T;
    ds.has_pupil = cfg.with_pupil;
    ds.seed = seed;
    ds.samples.reserve(static_cast<std::size_t>(n));

    std::vector<double> eeg(static_cast<std::size_t>(C) * T);
    for (int i = 0; i < n; ++i) {
        const RngStream st = root.child(static_cast<std::uint64_t>(i));

        auto dot = st.child("dot").cursor();
        const int ix = static_cast<int>(dot.next_below(static_cast<std::uint64_t>(cfg.grid_nx)));
        const int iy = static_cast<int>(dot.next_below(static_cast<std::uint64_t>(cfg.grid_ny)));
        const double gx = cfg.grid_nx == 1 ? 0.0 : -1.0 + 2.0 * ix / (cfg.grid_nx - 1.0);
        const double gy = cfg.grid_ny == 1 ? 0.0 : -1.0 + 2.0 * iy / (cfg.grid_ny - 1.0);

        // normalized gaze drives four orthogonal spatial patterns
        const double coef[4] = {gx, gy, gx * gy, std::sqrt(gx * gx + gy * gy)};
        for (int c = 0; c < C; ++c) {
            for (int t = 0; t < T; ++t) {
                double v = 0.0;
                for (int k = 0; k < 4; ++k) {
                    v += coef[k] * detail::planted_spatial(k, c, C) *
                         detail::planted_temporal(k, t, T);
                }
                eeg[static_cast<std::size_t>(c) * T + t] = cfg.signal_gain * v;
            }
        }

        // AR(1) noise, stationary variance noise_gain^2
        auto nz = st.child("noise").cursor();
        const double innov = std::sqrt(1.0 - cfg.noise_rho * cfg.noise_rho);
        for (int c = 0; c < C; ++c) {
            double prev = cfg.noise_gain * nz.next_normal();
            eeg[static_cast<std::size_t>(c) * T] += prev;
            for (int t = 1; t < T; ++t) {
                prev = cfg.noise_rho * prev + cfg.noise_gain * innov * nz.next_normal();
                eeg[static_cast<std::size_t>(c) * T + t] += prev;
            }
        }

        // blink-like bursts: frontal-weighted Gaussian envelope in channel and time
        auto art = st.child("artifact").cursor();
        if (art.next_uniform() < cfg.artifact_rate) {
            const int tc = static_cast<int>(art.next_below(static_cast<std::uint64_t>(T)));
            const int cc = static_cast<int>(
                art.next_below(static_cast<std::uint64_t>(std::max(1, C / 4))));
            const double amp = cfg.artifact_gain * (1.0 + std::abs(art.next_normal()));
            const double st_dev = std::max(1.0, T / 16.0);
            const double sc_dev = std::max(1.0, C / 8.0);
            for (int c = 0; c < C; ++c) {
                const double wc = std::exp(-0.5 * (c - cc) * (c - cc) / (sc_dev * sc_dev));
                for (int t = 0; t < T; ++t) {
                    const double wt = std::exp(-0.5 * (t - tc) * (t - tc) / (st_dev * st_dev));
                    eeg[static_cast<std::size_t>(c) * T + t] += amp * wc * wt;
                }
            }
        }

        // per-sample z-normalization over all C*T values
        double mean = 0.0;
        for (double v : eeg) mean += v;
        mean /= static_cast<double>(eeg.size());
        double var = 0.0;
        for (double v : eeg) var += (v - mean) * (v - mean);
        var /= static_cast<double>(eeg.size());
        const double inv_sd = 1.0 / std::sqrt(var + 1e-12);

        Sample s;
        s.eeg = Tensor<float>({C, T});
        for (std::size_t k = 0; k < eeg.size(); ++k) {
            s.eeg[k] = static_cast<float>((eeg[k] - mean) * inv_sd);
        }
        s.gaze[0] = static_cast<float>(gx * cfg.screen_x_mm);
        s.gaze[1] = static_cast<float>(gy * cfg.screen_y_mm);
        if (cfg.with_pupil) {
            const double raw = -std::sqrt(gx * gx + gy * gy) +
                               cfg.pupil_noise * st.child("pupil").normal(0);
            s.pupil = static_cast<float>((raw - pm.mean) / pm.sd);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---- splits ------------------------------------------------------------------

struct SplitIndices {
    std::vector<int> train, val, test;
};

/// Seed-deterministic permutation split; sizes are floor(n*f) with the
/// remainder going to train. Rejects fractions that leave any part empty.
inline SplitIndices split_dataset(std::size_t n, std::uint64_t seed, double f_train = 0.70,
                                  double f_val = 0.15, double f_test = 0.15) {
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
        throw ShapeError("split fractions must sum to 1");
    }
    const auto n_val = static_cast<std::size_t>(std::floor(f_val * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(f_test * static_cast<double>(n)));
    const auto n_train_floor =
        static_cast<std::size_t>(std::floor(f_train * static_cast<double>(n)));
    if (n_train_floor == 0 || n_val == 0 || n_test == 0) {
        throw ShapeError("split of " + std::to_string(n) + " samples leaves an empty part");
    }
    const std::size_t n_train = n - n_val - n_test;

    const std::vector<int> perm =
        random_permutation(static_cast<int>(n), RngStream(seed).child("split"));
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return s;
}

// ---- batching ------------------------------------------------------------------

/// One epoch's batch order over a list of dataset indices. The permutation is
/// a pure function of (shuffle_seed, epoch); the last partial batch is kept.
class BatchIter {
public:
    BatchIter(std::span<const int> indices, int batch_size, std::uint64_t shuffle_seed, int epoch)
        : batch_size_(batch_size) {
        if (batch_size < 1) {
            throw ShapeError("batch size must be >= 1, got " + std::to_string(batch_size));
        }
        const std::vector<int> perm = random_permutation(
            static_cast<int>(indices.size()),
            RngStream(shuffle_seed).child("shuffle").child(static_cast<std::uint64_t>(epoch)));
        order_.resize(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            order_[i] = indices[static_cast<std::size_t>(perm[i])];
        }
    }

    std::size_t batch_count() const noexcept {
        return (order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
               static_cast<std::size_t>(batch_size_);
    }

    std::span<const int> batch(std::size_t b) const {
        const std::size_t lo = b * static_cast<std::size_t>(batch_size_);
        const std::size_t hi = std::min(order_.size(), lo + static_cast<std::size_t>(batch_size_));
        return {order_.data() + lo, hi - lo};
    }

private:
    std::vector<int> order_;
    int batch_size_;
};

} // namespace eegmtl
