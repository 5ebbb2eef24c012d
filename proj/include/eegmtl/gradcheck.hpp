#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "eegmtl/autodiff.hpp"
#include "eegmtl/rng.hpp"

namespace eegmtl {

/// Builds a scalar loss from parameters bound through the context. Called
/// repeatedly with fresh tapes; must be a pure function of the parameter
/// values (fix dropout streams, inputs, targets in the closure).
using LossBuilder = std::function<Var<double>(GraphContext<double>&)>;

struct GradCheckEntry {
    std::string param;
    std::size_t coords_checked = 0;
    std::size_t worst_coord = 0;
    double max_rel_err = 0.0;
    double analytic = 0.0;   // at worst_coord
    double numeric = 0.0;    // at worst_coord
    bool finite = true;      // false if any perturbed evaluation was non-finite
    bool flagged = false;
};

struct GradCheckReport {
    double eps = 0.0;
    double tol = 0.0;
    std::vector<GradCheckEntry> entries;

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_err);
        return m;
    }
    bool pass() const {
        for (const auto& e : entries) {
            if (e.flagged || !e.finite) return false;
        }
        return true;
    }
};

namespace detail {

// Denominator floor for the relative error. Below it the comparison is
// absolute with tolerance tol * kGradFloor, which keeps structurally zero
// gradients (for example a key bias under softmax shift invariance) from
// being judged against pure finite-difference rounding noise.
inline constexpr double kGradFloor = 1e-4;

inline double grad_rel_err(double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), kGradFloor});
    return std::abs(a - n) / denom;
}

} // namespace detail

/// Compares autodiff gradients of f against central differences
/// (f(x+eps) - f(x-eps)) / 2eps, coordinate by coordinate. If coord_cap > 0,
/// at most that many coordinates per parameter are probed (a deterministic
/// sample drawn from pick); otherwise every coordinate is probed. Non-finite
/// evaluations at perturbed points are reported in the entry, never thrown.
inline GradCheckReport grad_check(const LossBuilder& f,
                                  const std::vector<Parameter<double>*>& params, double eps,
                                  double tol, std::size_t coord_cap = 0,
                                  RngStream pick = RngStream(0x67726463)) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw ShapeError("grad_check step must be in [1e-7, 1e-3], got " + std::to_string(eps));
    }

    for (Parameter<double>* p : params) p->zero_grad();
    {
        Tape<double> tape;
        GraphContext<double> ctx(tape);
        Var<double> loss = f(ctx);
        tape.backward(loss);
        ctx.accumulate_param_grads();
    }

    auto eval = [&](bool& finite) -> double {
        Tape<double> tape(false);
        GraphContext<double> ctx(tape);
        const double v = f(ctx).value()[0];
        if (!std::isfinite(v)) finite = false;
        return v;
    };

    GradCheckReport report;
    report.eps = eps;
    report.tol = tol;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<double>& p = *params[pi];
        GradCheckEntry entry;
        entry.param = p.name;

        std::vector<std::size_t> coords;
        const std::size_t n = p.value.size();
        if (coord_cap == 0 || n <= coord_cap) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            // deterministic sample without replacement
            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            RngStream st = pick.child(p.name).child(pi);
            auto cur = st.cursor();
            for (std::size_t i = 0; i < coord_cap; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(
                    cur.next_below(static_cast<std::uint64_t>(n - i)));
                std::swap(perm[i], perm[j]);
            }
            coords.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(coord_cap));
        }

        for (std::size_t idx : coords) {
            const double saved = p.value[idx];
            bool finite = true;
            p.value[idx] = saved + eps;
            const double fp = eval(finite);
            p.value[idx] = saved - eps;
            const double fm = eval(finite);
            p.value[idx] = saved;

            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = p.grad[idx];
            const double rel = finite ? detail::grad_rel_err(analytic, numeric)
                                      : std::numeric_limits<double>::infinity();
            if (!finite) entry.finite = false;
            if (rel >= entry.max_rel_err || entry.coords_checked == 0) {
                entry.max_rel_err = rel;
                entry.worst_coord = idx;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
            ++entry.coords_checked;
        }
        entry.flagged = !(entry.max_rel_err < tol) || !entry.finite;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace eegmtl
