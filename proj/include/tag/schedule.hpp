#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tag/errors.hpp"

namespace tag {

// Coefficients of one deterministic denoising transition written in
// incremental form. For a transition from training index t_src (noisier)
// to t_dst (cleaner):
//   a           = sqrt(alpha_bar[t_dst] / alpha_bar[t_src])
//   alpha_tilde = sigma_dst - a * sigma_src      (<= 0)
//   b           = alpha_tilde                    (noise-prediction multiplier)
//   beta        = a - 1                          (>= 0)
// so that next = a * x + b * eps and equivalently
// next = x + alpha_tilde * eps + beta * x.
struct StepCoeffs {
    double a;
    double b;
    double alpha_tilde;
    double beta;
};

// Pure helper: coefficients from a pair of signal levels. alpha_bar_dst is
// the cleaner (larger) level. Equal levels give the identity transition
// (a = 1, alpha_tilde = beta = 0).
inline StepCoeffs step_coeffs_from_alpha_bars(double alpha_bar_dst,
                                              double alpha_bar_src) {
    if (!(alpha_bar_dst > 0.0) || alpha_bar_dst > 1.0 ||
        !(alpha_bar_src > 0.0) || alpha_bar_src > 1.0) {
        throw ScheduleError("step_coeffs: alpha_bar values must lie in (0, 1]");
    }
    if (alpha_bar_dst < alpha_bar_src) {
        throw ScheduleError(
            "step_coeffs: destination level must be at least as clean as the "
            "source (alpha_bar_dst >= alpha_bar_src)");
    }
    StepCoeffs c;
    c.a = std::sqrt(alpha_bar_dst / alpha_bar_src);
    double sigma_dst = std::sqrt(1.0 - alpha_bar_dst);
    double sigma_src = std::sqrt(1.0 - alpha_bar_src);
    c.alpha_tilde = sigma_dst - c.a * sigma_src;
    c.b = c.alpha_tilde;
    c.beta = c.a - 1.0;
    return c;
}

// Discrete variance-preserving noise schedule plus the subset of training
// indices visited at inference time, stored noisiest first.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> alpha_bar, std::vector<int> inference_indices)
        : alpha_bar_(std::move(alpha_bar)),
          inference_indices_(std::move(inference_indices)) {
        if (alpha_bar_.empty()) throw ScheduleError("schedule: alpha_bar is empty");
        for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
            double v = alpha_bar_[i];
            if (!(v > 0.0) || v > 1.0) {
                throw ScheduleError("schedule: alpha_bar[" + std::to_string(i) +
                                    "] outside (0, 1]");
            }
            if (i > 0 && !(alpha_bar_[i] < alpha_bar_[i - 1])) {
                throw ScheduleError(
                    "schedule: alpha_bar must be strictly decreasing");
            }
        }
        if (inference_indices_.size() < 2) {
            throw ScheduleError("schedule: need at least two inference indices");
        }
        int prev = -1;
        for (std::size_t i = 0; i < inference_indices_.size(); ++i) {
            int t = inference_indices_[i];
            if (t < 0 || t >= num_train_steps()) {
                throw ScheduleError("schedule: inference index " +
                                    std::to_string(t) + " out of range");
            }
            if (i > 0 && t >= prev) {
                throw ScheduleError(
                    "schedule: inference indices must be strictly descending");
            }
            prev = t;
        }
    }

    int num_train_steps() const { return static_cast<int>(alpha_bar_.size()); }

    double alpha_bar_at(int t) const {
        check_index(t);
        return alpha_bar_[static_cast<std::size_t>(t)];
    }

    // Noise magnitude sqrt(1 - alpha_bar) at a training index.
    double sigma_at(int t) const {
        check_index(t);
        return std::sqrt(1.0 - alpha_bar_[static_cast<std::size_t>(t)]);
    }

    const std::vector<int>& inference_indices() const { return inference_indices_; }

    // Number of transitions along the inference path.
    int num_steps() const { return static_cast<int>(inference_indices_.size()) - 1; }

    // Inference index by position, 0 = noisiest.
    int index_at(int position) const {
        if (position < 0 || position >= static_cast<int>(inference_indices_.size())) {
            throw IndexError("schedule: position " + std::to_string(position) +
                             " out of range");
        }
        return inference_indices_[static_cast<std::size_t>(position)];
    }

    // Coefficients of inference transition k, counted from the clean end:
    // k = 0 lands on the final (cleanest) index.
    StepCoeffs ddim_coeffs(int k) const {
        int m = static_cast<int>(inference_indices_.size());
        if (k < 0 || k > m - 2) {
            throw IndexError("ddim_coeffs: step " + std::to_string(k) +
                             " out of range [0, " + std::to_string(m - 2) + "]");
        }
        int t_dst = inference_indices_[static_cast<std::size_t>(m - 1 - k)];
        int t_src = inference_indices_[static_cast<std::size_t>(m - 2 - k)];
        return step_coeffs_from_alpha_bars(alpha_bar_at(t_dst), alpha_bar_at(t_src));
    }

private:
    void check_index(int t) const {
        if (t < 0 || t >= num_train_steps()) {
            throw IndexError("schedule: training index " + std::to_string(t) +
                             " out of range [0, " +
                             std::to_string(num_train_steps()) + ")");
        }
    }

    std::vector<double> alpha_bar_;
    std::vector<int> inference_indices_;
};

// Linear-beta schedule with an evenly strided inference path. The stride is
// num_train_steps / num_inference_steps (integer division) and the noisiest
// training index is always included, so the path covers the full noise range.
inline NoiseSchedule make_schedule(int num_train_steps, int num_inference_steps,
                                   double beta_start = 1e-4,
                                   double beta_end = 0.02) {
    if (num_train_steps < 2) {
        throw ConfigError("make_schedule: num_train_steps must be >= 2");
    }
    if (num_inference_steps < 1 || num_inference_steps > num_train_steps) {
        throw ConfigError(
            "make_schedule: num_inference_steps must lie in [1, num_train_steps]");
    }
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
        throw ConfigError("make_schedule: need 0 < beta_start <= beta_end < 1");
    }

    std::vector<double> alpha_bar(static_cast<std::size_t>(num_train_steps));
    double prod = 1.0;
    for (int i = 0; i < num_train_steps; ++i) {
        double beta = beta_start +
                      (beta_end - beta_start) * static_cast<double>(i) /
                          static_cast<double>(num_train_steps - 1);
        prod *= 1.0 - beta;
        alpha_bar[static_cast<std::size_t>(i)] = prod;
    }

    int stride = num_train_steps / num_inference_steps;
    std::vector<int> indices;
    indices.reserve(static_cast<std::size_t>(num_inference_steps) + 1);
    for (int k = 0; k < num_inference_steps; ++k) indices.push_back(k * stride);
    indices.push_back(num_train_steps - 1);
    std::sort(indices.begin(), indices.end(), std::greater<int>());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

    return NoiseSchedule(std::move(alpha_bar), std::move(indices));
}

}  // namespace tag
