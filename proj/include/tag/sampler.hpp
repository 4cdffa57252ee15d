#pragma once

#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "tag/errors.hpp"
#include "tag/guidance.hpp"
#include "tag/rng.hpp"
#include "tag/schedule.hpp"
#include "tag/scoremodel.hpp"
#include "tag/vec.hpp"

namespace tag {

// One sampled denoising path. With full recording, states holds every
// visited state (noisiest first) and the increment lists hold one entry per
// transition; without it, only the initial and final states are kept and
// the increment lists stay empty. Either way
// states[j + 1] = states[j] + guided_increments[j] holds exactly as
// computed, with no recomputation on the recording path.
struct Trajectory {
    std::vector<int> state_indices;
    std::vector<Vec> states;
    std::vector<Vec> base_increments;
    std::vector<Vec> guided_increments;
    std::vector<int> ctag_fallback_steps;

    const Vec& final_state() const {
        if (states.empty()) throw EmptyBatch("trajectory: no states recorded");
        return states.back();
    }
    int final_index() const {
        if (state_indices.empty()) throw EmptyBatch("trajectory: no states recorded");
        return state_indices.back();
    }
};

struct ScheduleParams {
    int num_train_steps = 1000;
    int num_inference_steps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    NoiseSchedule make() const {
        return make_schedule(num_train_steps, num_inference_steps, beta_start,
                             beta_end);
    }
};

// Data distribution the run samples from: either the built-in branching
// tree or an explicit component list (which forms a single class).
struct DistributionSpec {
    enum class Kind { branching, gmm };

    Kind kind = Kind::branching;
    BranchSpec branch;
    std::vector<GmmComponent> components;
    std::uint64_t build_seed = 0;

    ConditionalMixture build() const {
        if (kind == Kind::branching) {
            return build_branching_gmm(branch, build_seed);
        }
        if (components.empty()) {
            throw ConfigError("distribution: explicit mixture has no components");
        }
        std::vector<GaussianMixture> classes;
        classes.emplace_back(components);
        return ConditionalMixture::from_classes(std::move(classes), {1.0});
    }

    std::size_t dim() const {
        if (kind == Kind::branching) return 2;
        if (components.empty()) {
            throw ConfigError("distribution: explicit mixture has no components");
        }
        return components.front().mean.size();
    }
};

// Everything that determines a run's outputs. Timing and thread count are
// deliberately excluded: they must not influence results.
struct RunManifest {
    std::uint64_t seed = 0;
    ScheduleParams schedule;
    DistributionSpec distribution;
    GuidanceConfig guidance;
    int batch_size = 1;
    bool record_trajectories = false;

    void validate() const {
        if (batch_size < 1) throw ConfigError("manifest: batch_size must be >= 1");
        guidance.validate();
        if (distribution.kind == DistributionSpec::Kind::branching) {
            distribution.branch.validate();
        } else if (distribution.components.empty()) {
            throw ConfigError("distribution: explicit mixture has no components");
        }
        // Surfaces range errors in the schedule parameters early.
        ScheduleParams p = schedule;
        if (p.num_train_steps < 2) {
            throw ConfigError("manifest: num_train_steps must be >= 2");
        }
        if (p.num_inference_steps < 1 ||
            p.num_inference_steps > p.num_train_steps) {
            throw ConfigError(
                "manifest: num_inference_steps must lie in [1, num_train_steps]");
        }
        if (!(p.beta_start > 0.0) || !(p.beta_end < 1.0) ||
            p.beta_start > p.beta_end) {
            throw ConfigError("manifest: need 0 < beta_start <= beta_end < 1");
        }
    }
};

// Standard normal draw conditioned on ||z|| <= radius * sqrt(d), by
// rejection. The acceptance probability is known in closed form through the
// chi-square law of ||z||^2; radii that would make it impractically small
// are rejected up front rather than looping forever.
inline Vec truncated_init_draw(CounterRng& rng, std::size_t d, double radius) {
    if (d == 0) throw ConfigError("truncated_init: dimension must be >= 1");
    if (!(radius > 0.0)) throw ConfigError("truncated_init: radius must be > 0");
    double dd = static_cast<double>(d);
    double cap2 = radius * radius * dd;
    double accept = boost::math::gamma_p(dd / 2.0, cap2 / 2.0);
    if (!(accept >= 1e-6)) {
        throw ConfigError("truncated_init: acceptance probability " +
                          std::to_string(accept) + " below 1e-6 at radius " +
                          std::to_string(radius));
    }
    for (;;) {
        Vec v = rng.normal_vec(d);
        if (dot(v, v) <= cap2) return v;
    }
}

inline Vec truncated_init(std::uint64_t seed, std::size_t d, double radius) {
    CounterRng rng(seed, 0);
    return truncated_init_draw(rng, d, radius);
}

namespace detail {

struct BatchContext {
    const RunManifest* manifest;
    const ConditionalMixture* mixture;
    const NoiseSchedule* schedule;
    // Noisy marginals cached per inference position (0 = noisiest). The
    // conditional list is filled only for label-dependent modes.
    std::vector<GaussianMixture> marginal_by_pos;
    std::vector<GaussianMixture> conditional_by_pos;
    std::vector<StepCoeffs> coeffs_by_step;  // indexed by source position j
    bool conditional = false;
};

inline Trajectory run_single(const BatchContext& ctx, int sample_index) {
    const RunManifest& mf = *ctx.manifest;
    const NoiseSchedule& sched = *ctx.schedule;
    const GuidanceConfig& g = mf.guidance;
    int m = static_cast<int>(sched.inference_indices().size());
    std::size_t d = ctx.mixture->dim();

    CounterRng rng(mf.seed, static_cast<std::uint64_t>(sample_index));
    Trajectory traj;
    int j = -1;
    try {
        Vec x;
        if (g.mode == GuidanceMode::truncation) {
            x = truncated_init_draw(rng, d, *g.truncation_radius);
        } else {
            x = rng.normal_vec(d);
        }

        if (mf.record_trajectories) {
            traj.state_indices.reserve(static_cast<std::size_t>(m));
            traj.states.reserve(static_cast<std::size_t>(m));
            traj.base_increments.reserve(static_cast<std::size_t>(m) - 1);
            traj.guided_increments.reserve(static_cast<std::size_t>(m) - 1);
        }
        traj.state_indices.push_back(sched.index_at(0));
        traj.states.push_back(x);

        for (j = 0; j < m - 1; ++j) {
            int t_src = sched.index_at(j);
            const StepCoeffs& c = ctx.coeffs_by_step[static_cast<std::size_t>(j)];
            const GaussianMixture& marg =
                ctx.marginal_by_pos[static_cast<std::size_t>(j)];
            double sigma = sched.sigma_at(t_src);
            if (!(sigma > 0.0)) {
                throw DegenerateNoiseLevel("sigma is zero at training index " +
                                           std::to_string(t_src));
            }

            Vec eps_u = scale(marg.score(x), -sigma);
            Vec base;
            Vec guided;
            bool fallback = false;

            switch (g.mode) {
                case GuidanceMode::none:
                case GuidanceMode::truncation: {
                    base = base_increment(x, eps_u, c);
                    guided = base;
                    break;
                }
                case GuidanceMode::tag: {
                    base = base_increment(x, eps_u, c);
                    guided = tangential_amplified_increment(x, base, g.eta);
                    break;
                }
                case GuidanceMode::normal_amp: {
                    base = base_increment(x, eps_u, c);
                    guided = normal_amplified_increment(x, base, g.eta);
                    break;
                }
                case GuidanceMode::cfg: {
                    const GaussianMixture& cond =
                        ctx.conditional_by_pos[static_cast<std::size_t>(j)];
                    Vec eps_c = scale(cond.score(x), -sigma);
                    Vec eps_mix = cfg_eps(eps_c, eps_u, g.omega);
                    guided = base_increment(x, eps_mix, c);
                    if (mf.record_trajectories) {
                        base = base_increment(x, eps_c, c);
                    }
                    break;
                }
                case GuidanceMode::ctag: {
                    const GaussianMixture& cond =
                        ctx.conditional_by_pos[static_cast<std::size_t>(j)];
                    Vec eps_c = scale(cond.score(x), -sigma);
                    Vec eps_mix =
                        g.ctag_form == CtagForm::standard
                            ? ctag_eps(x, eps_c, eps_u, g.omega, g.eta, &fallback)
                            : ctag_eps_sigma_scaled(x, eps_c, eps_u, g.omega,
                                                    g.eta, sigma, &fallback);
                    guided = base_increment(x, eps_mix, c);
                    if (mf.record_trajectories) {
                        Vec eps_plain =
                            g.ctag_form == CtagForm::standard
                                ? ctag_eps(x, eps_c, eps_u, g.omega, 0.0)
                                : ctag_eps_sigma_scaled(x, eps_c, eps_u, g.omega,
                                                        0.0, sigma);
                        base = base_increment(x, eps_plain, c);
                    }
                    break;
                }
            }

            if (fallback) traj.ctag_fallback_steps.push_back(j);

            Vec next = add(x, guided);
            if (!all_finite(next)) {
                throw SamplingError("state became non-finite");
            }
            x = std::move(next);
            if (mf.record_trajectories) {
                traj.state_indices.push_back(sched.index_at(j + 1));
                traj.states.push_back(x);
                traj.base_increments.push_back(std::move(base));
                traj.guided_increments.push_back(std::move(guided));
            }
        }
        if (!mf.record_trajectories) {
            traj.state_indices.push_back(sched.index_at(m - 1));
            traj.states.push_back(std::move(x));
        }
    } catch (const Error& e) {
        throw SamplingError("sample " + std::to_string(sample_index) + ", step " +
                            std::to_string(j) + ": " + e.what());
    }
    return traj;
}

}  // namespace detail

// Runs the whole batch. Each sample draws from its own counter-based
// stream keyed by (seed, sample index), so results are identical for every
// thread count, including 1.
inline std::vector<Trajectory> sample_batch(const RunManifest& manifest,
                                            const ConditionalMixture& mixture,
                                            const NoiseSchedule& schedule,
                                            int threads = 1) {
    manifest.validate();
    const GuidanceConfig& g = manifest.guidance;
    bool conditional =
        g.mode == GuidanceMode::cfg || g.mode == GuidanceMode::ctag;
    if (conditional) {
        mixture.class_at(*g.condition_label);  // validates the label
    }

    detail::BatchContext ctx;
    ctx.manifest = &manifest;
    ctx.mixture = &mixture;
    ctx.schedule = &schedule;
    ctx.conditional = conditional;
    int m = static_cast<int>(schedule.inference_indices().size());
    for (int j = 0; j < m - 1; ++j) {
        int t = schedule.index_at(j);
        ctx.marginal_by_pos.push_back(
            marginal_at_noise(mixture.marginal(), schedule, t));
        if (conditional) {
            ctx.conditional_by_pos.push_back(
                marginal_at_noise(mixture.class_at(*g.condition_label), schedule, t));
        }
        // Transition from position j to j + 1, counted from the clean end.
        ctx.coeffs_by_step.push_back(schedule.ddim_coeffs(m - 2 - j));
    }

    int n = manifest.batch_size;
    std::vector<Trajectory> out(static_cast<std::size_t>(n));

    if (threads <= 0) {
        unsigned hc = std::thread::hardware_concurrency();
        threads = hc > 0 ? static_cast<int>(hc) : 1;
    }
    if (threads > n) threads = n;

    if (threads <= 1) {
        for (int i = 0; i < n; ++i) {
            out[static_cast<std::size_t>(i)] = detail::run_single(ctx, i);
        }
        return out;
    }

    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += threads) {
                    out[static_cast<std::size_t>(i)] = detail::run_single(ctx, i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (std::thread& t : workers) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace tag
