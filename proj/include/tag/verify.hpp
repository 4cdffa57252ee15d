#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "tag/analysis.hpp"
#include "tag/geometry.hpp"
#include "tag/guidance.hpp"
#include "tag/rng.hpp"
#include "tag/sampler.hpp"
#include "tag/schedule.hpp"
#include "tag/scoremodel.hpp"
#include "tag/vec.hpp"

namespace tag {

struct CheckResult {
    std::string name;
    bool pass = true;
    std::size_t cases = 0;
    std::string detail;  // first failure, empty when passing
};

struct VerifyOptions {
    std::uint64_t seed = 1234567;
    int tuple_count = 1000;   // algebraic identity checks
    int point_count = 100;    // oracle comparisons
    // Fault-injection hook: flips the sign of the noise multiplier in every
    // transition before checking, which must make the gain identity fail.
    bool negate_alpha_tilde = false;
};

namespace verify_detail {

inline std::string fmt(const char* spec, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

inline void fail(CheckResult* r, const std::string& detail) {
    if (r->pass) {
        r->pass = false;
        r->detail = detail;
    }
}

// Random step off the default schedule: position j is the source state,
// the transition leads to position j + 1.
struct StepDraw {
    StepCoeffs coeffs;
    double sigma;  // at the source state
};

inline StepDraw draw_step(const NoiseSchedule& sched, CounterRng& rng,
                          bool noisy_half = false) {
    int m = static_cast<int>(sched.inference_indices().size());
    int span = noisy_half ? m / 2 : m - 1;
    int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(span));
    StepDraw d;
    d.coeffs = sched.ddim_coeffs(m - 2 - j);
    d.sigma = sched.sigma_at(sched.index_at(j));
    return d;
}

inline std::size_t draw_dim(CounterRng& rng) {
    static const std::size_t dims[] = {2, 8, 64};
    return dims[rng.next_u64() % 3];
}

inline GaussianMixture random_gmm(CounterRng& rng, std::size_t d,
                                  int n_comps) {
    std::vector<GmmComponent> comps;
    for (int i = 0; i < n_comps; ++i) {
        GmmComponent c;
        c.weight = 1.0 / static_cast<double>(n_comps);
        c.mean = rng.normal_vec(d);
        c.stdev = 0.25 + 0.5 * rng.uniform();
        comps.push_back(std::move(c));
    }
    return GaussianMixture(std::move(comps));
}

}  // namespace verify_detail

// Projection identities: reconstruction, orthogonality, the Pythagorean
// split, scale invariance in the basis, and idempotence.
inline CheckResult check_projection_identities(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"projection-identities"};
    CounterRng rng(opts.seed, 101);
    const std::size_t dims[] = {2, 8, 64, 4096};
    for (std::size_t d : dims) {
        for (int it = 0; it < 50; ++it) {
            ++res.cases;
            Vec x = rng.normal_vec(d);
            Vec v = rng.normal_vec(d);
            Decomposition dec = decompose(v, x);

            double vn = norm(v);
            double tol = 1e-10 * std::max(1.0, vn);
            Vec rebuilt = add(dec.parallel, dec.tangential);
            double rec_err = norm(sub(rebuilt, v));
            double ortho = std::abs(dot(dec.parallel, dec.tangential));
            double pyth = std::abs(dot(v, v) - dot(dec.parallel, dec.parallel) -
                                   dot(dec.tangential, dec.tangential));
            Vec p1 = project_parallel(v, x);
            Vec p2 = project_parallel(v, scale(x, 3.5));
            double scale_err = norm(sub(p1, p2));
            Vec pp = project_parallel(p1, x);
            double idem_err = norm(sub(pp, p1));

            if (rec_err > tol) {
                fail(&res, "d=" + std::to_string(d) +
                               ": reconstruction error " + fmt("%.3g", rec_err));
            } else if (ortho > 1e-10 * std::max(1.0, vn * vn)) {
                fail(&res, "d=" + std::to_string(d) + ": overlap " +
                               fmt("%.3g", ortho));
            } else if (pyth > 1e-10 * std::max(1.0, vn * vn)) {
                fail(&res, "d=" + std::to_string(d) + ": norm split off by " +
                               fmt("%.3g", pyth));
            } else if (scale_err > tol) {
                fail(&res, "d=" + std::to_string(d) +
                               ": basis scaling changed projection by " +
                               fmt("%.3g", scale_err));
            } else if (idem_err > tol) {
                fail(&res, "d=" + std::to_string(d) +
                               ": repeated projection moved by " +
                               fmt("%.3g", idem_err));
            }
        }
    }
    return res;
}

// Sign conventions and dual-form agreement of the transition coefficients
// over the whole default schedule.
inline CheckResult check_step_coefficients(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"step-coefficient-signs"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 102);
    for (int k = 0; k < sched.num_steps(); ++k) {
        ++res.cases;
        StepCoeffs c = sched.ddim_coeffs(k);
        if (!(c.alpha_tilde <= 0.0)) {
            fail(&res, "step " + std::to_string(k) + ": noise multiplier " +
                           fmt("%.3g", c.alpha_tilde) + " is positive");
        }
        if (!(c.beta >= 0.0)) {
            fail(&res, "step " + std::to_string(k) + ": state multiplier " +
                           fmt("%.3g", c.beta) + " is negative");
        }
        if (c.b != c.alpha_tilde) {
            fail(&res, "step " + std::to_string(k) + ": b != alpha_tilde");
        }
        // The incremental and closed forms must agree on random operands.
        Vec x = rng.normal_vec(4);
        Vec eps = rng.normal_vec(4);
        Vec delta = base_increment(x, eps, c);
        for (std::size_t i = 0; i < x.size(); ++i) {
            double closed = (c.a * x[i] + c.b * eps[i]) - x[i];
            if (std::abs(delta[i] - closed) > 1e-12) {
                fail(&res,
                     "step " + std::to_string(k) + ": forms differ by " +
                         fmt("%.3g", std::abs(delta[i] - closed)));
            }
        }
    }
    return res;
}

// Score of the noisy marginal against a central finite difference of its
// log density. The difference route never touches the score code.
inline CheckResult check_score_oracle(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"score-gradient-oracle"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 103);
    const double h = 1e-5;
    const std::size_t dims[] = {2, 8};
    for (int it = 0; it < opts.point_count; ++it) {
        ++res.cases;
        std::size_t d = dims[it % 2];
        GaussianMixture gmm = random_gmm(rng, d, 5);
        int pos = static_cast<int>(rng.next_u64() % 40);  // skip cleanest tail
        int t = sched.index_at(pos);
        GaussianMixture marg = marginal_at_noise(gmm, sched, t);
        Vec x = rng.normal_vec(d);
        Vec s = score(gmm, sched, t, x);
        for (std::size_t i = 0; i < d; ++i) {
            Vec xp = x;
            Vec xm = x;
            xp[i] += h;
            xm[i] -= h;
            double fd = (marg.log_density(xp) - marg.log_density(xm)) / (2.0 * h);
            double err = std::abs(s[i] - fd);
            if (err > 1e-5) {
                fail(&res, "point " + std::to_string(it) + ", coord " +
                               std::to_string(i) + ": error " + fmt("%.3g", err));
            }
        }
    }
    return res;
}

// Posterior clean-state mean against the conjugate-Gaussian closed form,
// computed from responsibilities without going through the score.
inline CheckResult check_posterior_mean_oracle(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"posterior-mean-oracle"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 104);
    const std::size_t dims[] = {2, 8};
    for (int it = 0; it < opts.point_count; ++it) {
        ++res.cases;
        std::size_t d = dims[it % 2];
        GaussianMixture gmm = random_gmm(rng, d, 5);
        int pos = static_cast<int>(rng.next_u64() % 40);
        int t = sched.index_at(pos);
        Vec x = rng.normal_vec(d);
        Vec got = tweedie_mean(gmm, sched, t, x);

        double ab = sched.alpha_bar_at(t);
        double root_ab = std::sqrt(ab);
        double sigma2 = 1.0 - ab;
        // Responsibilities under the noisy marginal.
        const auto& comps = gmm.components();
        std::vector<double> logp(comps.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < comps.size(); ++c) {
            double var = ab * comps[c].stdev * comps[c].stdev + sigma2;
            double dist2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                double dd = x[i] - root_ab * comps[c].mean[i];
                dist2 += dd * dd;
            }
            logp[c] = std::log(comps[c].weight) -
                      0.5 * static_cast<double>(d) *
                          std::log(6.283185307179586 * var) -
                      0.5 * dist2 / var;
            mx = std::max(mx, logp[c]);
        }
        double total = 0.0;
        for (double lp : logp) total += std::exp(lp - mx);
        Vec expect(d, 0.0);
        for (std::size_t c = 0; c < comps.size(); ++c) {
            double r = std::exp(logp[c] - mx) / total;
            double s2 = comps[c].stdev * comps[c].stdev;
            double var = ab * s2 + sigma2;
            // Conditional mean of the clean state under component c.
            for (std::size_t i = 0; i < d; ++i) {
                double m = (sigma2 * comps[c].mean[i] +
                            root_ab * s2 * x[i]) / var;
                expect[i] += r * m;
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            double err = std::abs(got[i] - expect[i]);
            if (err > 1e-8 * std::max(1.0, std::abs(expect[i]))) {
                fail(&res, "point " + std::to_string(it) + ", coord " +
                               std::to_string(i) + ": error " + fmt("%.3g", err));
            }
        }
    }
    return res;
}

// The gain difference between amplified and base increments, evaluated
// directly and through the closed form, must agree and be nonnegative.
inline CheckResult check_gain_identity(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"gain-identity"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 105);
    for (int it = 0; it < opts.tuple_count; ++it) {
        ++res.cases;
        std::size_t d = draw_dim(rng);
        Vec x = rng.normal_vec(d);
        Vec eps = rng.normal_vec(d);
        StepDraw sd = draw_step(sched, rng);
        if (opts.negate_alpha_tilde) {
            sd.coeffs.alpha_tilde = -sd.coeffs.alpha_tilde;
            sd.coeffs.b = sd.coeffs.alpha_tilde;
        }
        double eta = 1.0 + 4.0 * rng.uniform();
        GainReport rep = gain_report(x, eps, sd.coeffs, sd.sigma, eta);
        if (!rep.passes()) {
            fail(&res,
                 "tuple " + std::to_string(it) + ": d=" + std::to_string(d) +
                     " eta=" + fmt("%.3g", eta) + " direct=" +
                     fmt("%.6g", rep.gain_diff_direct) + " formula=" +
                     fmt("%.6g", rep.gain_diff_formula));
        }
    }
    return res;
}

// Gain is non-decreasing in the amplification over an ascending grid, and
// exactly flat when the amplification is 1 or the noise prediction is
// radial.
inline CheckResult check_gain_monotonicity(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"gain-monotonicity"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 106);
    const std::vector<double> grid = {1.0, 1.05, 1.15, 1.5, 2.0, 5.0};
    for (int it = 0; it < opts.tuple_count; ++it) {
        ++res.cases;
        std::size_t d = draw_dim(rng);
        Vec x = rng.normal_vec(d);
        Vec eps = rng.normal_vec(d);
        StepDraw sd = draw_step(sched, rng);
        GainScan scan = gain_monotonicity_scan(x, eps, sd.coeffs, sd.sigma, grid);
        if (!scan.monotone) {
            fail(&res, "tuple " + std::to_string(it) +
                           ": gain decreased along the eta grid");
        }
    }
    // Radial noise prediction: amplification must change nothing.
    for (int it = 0; it < 50; ++it) {
        ++res.cases;
        std::size_t d = draw_dim(rng);
        Vec x = rng.normal_vec(d);
        StepDraw sd = draw_step(sched, rng, /*noisy_half=*/true);
        double c = -1.5 + 3.0 * rng.uniform();
        if (std::abs(c) < 0.1) c = 0.5;
        Vec eps = scale(unit(x), c);
        GainReport rep = gain_report(x, eps, sd.coeffs, sd.sigma, 3.0);
        if (std::abs(rep.gain_diff_direct) > 1e-12) {
            fail(&res, "radial case " + std::to_string(it) + ": diff " +
                           fmt("%.3g", rep.gain_diff_direct));
        }
    }
    return res;
}

// Amplifying the tangential part must leave the radial component of the
// increment untouched; amplifying the radial part scales it exactly.
inline CheckResult check_radius_preservation(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"radius-preservation"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 107);
    for (int it = 0; it < opts.tuple_count; ++it) {
        ++res.cases;
        std::size_t d = draw_dim(rng);
        Vec x = rng.normal_vec(d);
        Vec eps = rng.normal_vec(d);
        StepDraw sd = draw_step(sched, rng);
        double eta = 1.0 + 4.0 * rng.uniform();
        Vec delta = base_increment(x, eps, sd.coeffs);
        Vec xhat = unit(x);
        double radial_base = dot(xhat, delta);

        Vec amp = tangential_amplified_increment(x, delta, eta);
        double err_t = std::abs(dot(xhat, amp) - radial_base);

        double kappa = 0.5 + 2.0 * rng.uniform();
        Vec ramp = normal_amplified_increment(x, delta, kappa);
        double err_r = std::abs(dot(xhat, ramp) - kappa * radial_base);

        if (err_t > 1e-12) {
            fail(&res, "tuple " + std::to_string(it) +
                           ": radial component moved by " + fmt("%.3g", err_t));
        } else if (err_r > 1e-12) {
            fail(&res, "tuple " + std::to_string(it) +
                           ": radial scaling off by " + fmt("%.3g", err_r));
        }
    }
    return res;
}

// Post-step norm identity:
// ||x + amplified||^2 = ||x + base||^2 + (eta^2 - 1) ||tangential part||^2.
inline CheckResult check_norm_identity(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"norm-identity"};
    NoiseSchedule sched = make_schedule(1000, 50);
    CounterRng rng(opts.seed, 108);
    for (int it = 0; it < opts.tuple_count; ++it) {
        ++res.cases;
        std::size_t d = draw_dim(rng);
        Vec x = rng.normal_vec(d);
        Vec eps = rng.normal_vec(d);
        StepDraw sd = draw_step(sched, rng);
        double eta = 1.0 + 4.0 * rng.uniform();
        Vec delta = base_increment(x, eps, sd.coeffs);
        Vec amp = tangential_amplified_increment(x, delta, eta);
        Vec t = project_tangential(delta, x);

        Vec post_base = add(x, delta);
        Vec post_amp = add(x, amp);
        double lhs = dot(post_amp, post_amp);
        double rhs = dot(post_base, post_base) + (eta * eta - 1.0) * dot(t, t);
        double err = std::abs(lhs - rhs);
        if (err > 1e-10 * std::max(1.0, std::abs(rhs))) {
            fail(&res, "tuple " + std::to_string(it) + ": " + fmt("%.6g", lhs) +
                           " vs " + fmt("%.6g", rhs));
        }
    }
    return res;
}

// Degenerate settings must reduce to the unguided sampler: amplification 1
// reproduces it bit for bit, and the conditional variant at eta = 0 matches
// plain classifier-free guidance with the shifted scale.
inline CheckResult check_reduction_lattice(const VerifyOptions& opts) {
    using namespace verify_detail;
    CheckResult res{"reduction-lattice"};

    RunManifest base;
    base.seed = opts.seed;
    base.batch_size = 8;
    base.record_trajectories = true;
    base.schedule.num_inference_steps = 10;
    base.distribution.kind = DistributionSpec::Kind::branching;
    base.distribution.branch.depth = 2;
    base.distribution.branch.points_per_segment = 4;
    ConditionalMixture mixture = base.distribution.build();
    NoiseSchedule sched = base.schedule.make();

    base.guidance.mode = GuidanceMode::none;
    std::vector<Trajectory> plain = sample_batch(base, mixture, sched);

    RunManifest amp1 = base;
    amp1.guidance.mode = GuidanceMode::tag;
    amp1.guidance.eta = 1.0;
    std::vector<Trajectory> tag1 = sample_batch(amp1, mixture, sched);

    RunManifest ramp1 = base;
    ramp1.guidance.mode = GuidanceMode::normal_amp;
    ramp1.guidance.eta = 1.0;
    std::vector<Trajectory> norm1 = sample_batch(ramp1, mixture, sched);

    for (std::size_t s = 0; s < plain.size(); ++s) {
        ++res.cases;
        for (std::size_t j = 0; j < plain[s].states.size(); ++j) {
            for (std::size_t i = 0; i < plain[s].states[j].size(); ++i) {
                if (tag1[s].states[j][i] != plain[s].states[j][i]) {
                    fail(&res, "tangential amplification at 1 is not bitwise "
                               "identical to the plain path");
                }
                if (norm1[s].states[j][i] != plain[s].states[j][i]) {
                    fail(&res, "radial amplification at 1 is not bitwise "
                               "identical to the plain path");
                }
            }
        }
    }

    RunManifest ct = base;
    ct.guidance.mode = GuidanceMode::ctag;
    ct.guidance.eta = 0.0;
    ct.guidance.omega = 2.5;
    ct.guidance.condition_label = 0;
    std::vector<Trajectory> ctag0 = sample_batch(ct, mixture, sched);

    RunManifest cf = base;
    cf.guidance.mode = GuidanceMode::cfg;
    cf.guidance.omega = 1.5;
    cf.guidance.condition_label = 0;
    std::vector<Trajectory> cfg = sample_batch(cf, mixture, sched);

    for (std::size_t s = 0; s < ctag0.size(); ++s) {
        ++res.cases;
        double sup = 0.0;
        for (std::size_t j = 0; j < ctag0[s].states.size(); ++j) {
            for (std::size_t i = 0; i < ctag0[s].states[j].size(); ++i) {
                sup = std::max(sup, std::abs(ctag0[s].states[j][i] -
                                             cfg[s].states[j][i]));
            }
        }
        if (sup > 1e-12) {
            fail(&res, "conditional variant at eta=0 deviates from shifted "
                       "classifier-free guidance by " + fmt("%.3g", sup));
        }
    }
    return res;
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& opts = {}) {
    std::vector<CheckResult> all;
    all.push_back(check_projection_identities(opts));
    all.push_back(check_step_coefficients(opts));
    all.push_back(check_score_oracle(opts));
    all.push_back(check_posterior_mean_oracle(opts));
    all.push_back(check_gain_identity(opts));
    all.push_back(check_gain_monotonicity(opts));
    all.push_back(check_radius_preservation(opts));
    all.push_back(check_norm_identity(opts));
    all.push_back(check_reduction_lattice(opts));
    return all;
}

}  // namespace tag
