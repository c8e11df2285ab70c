#pragma once

// Test-only oracles. Nothing here shares code paths with the library's reverse pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "resp/rng.hpp"
#include "resp/tape.hpp"
#include "resp/tensor.hpp"

namespace resp::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = scale * (2.0 * rng.uniform() - 1.0);
    return t;
}

inline std::vector<double> random_signal(std::size_t n, Rng& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    return x;
}

using LossFn = std::function<Var(Tape&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

// Element-wise relative error |a - n| / max(|a|, |n|, floor). Gradients smaller than
// the floor are effectively compared in absolute terms.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double evaluate_loss(const LossFn& fn) {
    Tape tape;
    return tape.value(fn(tape)).item();
}

/// Central finite differences over every element of every parameter.
inline GradCheckResult finite_difference_check(const std::vector<Parameter*>& params, const LossFn& fn,
                                               double step = 1e-4) {
    Gradients analytic;
    {
        Tape tape;
        Var loss = fn(tape);
        analytic = tape.backward(loss);
    }
    GradCheckResult result;
    for (Parameter* p : params) {
        const Tensor& grad = analytic.of(*p);
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double original = p->value[i];
            p->value[i] = original + step;
            const double up = evaluate_loss(fn);
            p->value[i] = original - step;
            const double down = evaluate_loss(fn);
            p->value[i] = original;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(grad[i], numeric);
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst = p->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(grad[i]) +
                               " numeric=" + std::to_string(numeric);
            }
        }
    }
    return result;
}

/// sum(x ⊙ w) with fixed random weights: a generic scalar readout for op gradient checks.
inline Var weighted_readout(Tape& tape, Var x, std::uint64_t seed = 99) {
    Rng rng(seed);
    Tensor w(tape.value(x).shape());
    for (auto& v : w.data()) v = rng.normal();
    return tape.sum(tape.mul(x, tape.constant(std::move(w))));
}

}  // namespace resp::testing

namespace resp::testing {

/// Single-bin discrete Fourier transform amplitude at `freq_hz` (direct summation,
/// identical to an FFT bin when freq_hz lies on the bin grid).
inline double dft_amplitude(std::span<const double> x, double sample_rate_hz, double freq_hz) {
    long double re = 0.0L, im = 0.0L;
    const long double w = 2.0L * 3.14159265358979323846264338327950288L * freq_hz / sample_rate_hz;
    for (std::size_t t = 0; t < x.size(); ++t) {
        re += x[t] * std::cos(w * static_cast<long double>(t));
        im -= x[t] * std::sin(w * static_cast<long double>(t));
    }
    return static_cast<double>(2.0L * std::sqrt(re * re + im * im) / static_cast<long double>(x.size()));
}

/// Least-squares line through x; returns the fitted values.
inline std::vector<double> linear_fit(std::span<const double> x) {
    const std::size_t n = x.size();
    long double st = 0, sx = 0, stt = 0, stx = 0;
    for (std::size_t t = 0; t < n; ++t) {
        st += t;
        sx += x[t];
        stt += (long double)t * t;
        stx += t * (long double)x[t];
    }
    const long double slope = (n * stx - st * sx) / (n * stt - st * st);
    const long double icpt = (sx - slope * st) / n;
    std::vector<double> fit(n);
    for (std::size_t t = 0; t < n; ++t) fit[t] = static_cast<double>(icpt + slope * t);
    return fit;
}

/// Frequency of the largest DFT amplitude on a fine grid within [lo, hi] after removing
/// the least-squares linear trend.
inline double dft_peak_hz(std::span<const double> x, double sample_rate_hz, double lo, double hi,
                          double step = 0.002) {
    const auto trend = linear_fit(x);
    std::vector<double> detrended(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) detrended[t] = x[t] - trend[t];
    double best_f = lo, best_a = -1.0;
    for (double f = lo; f <= hi + 1e-12; f += step) {
        const double a = dft_amplitude(detrended, sample_rate_hz, f);
        if (a > best_a) {
            best_a = a;
            best_f = f;
        }
    }
    return best_f;
}

inline double energy(std::span<const double> x) {
    long double e = 0;
    for (double v : x) e += (long double)v * v;
    return static_cast<double>(e);
}

}  // namespace resp::testing
