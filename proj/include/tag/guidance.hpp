#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "tag/errors.hpp"
#include "tag/geometry.hpp"
#include "tag/schedule.hpp"
#include "tag/vec.hpp"

namespace tag {

enum class GuidanceMode { none, tag, normal_amp, cfg, ctag, truncation };

inline const char* to_string(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::none: return "none";
        case GuidanceMode::tag: return "tag";
        case GuidanceMode::normal_amp: return "normal_amp";
        case GuidanceMode::cfg: return "cfg";
        case GuidanceMode::ctag: return "ctag";
        case GuidanceMode::truncation: return "truncation";
    }
    return "?";
}

inline GuidanceMode guidance_mode_from_string(const std::string& s) {
    if (s == "none") return GuidanceMode::none;
    if (s == "tag") return GuidanceMode::tag;
    if (s == "normal_amp") return GuidanceMode::normal_amp;
    if (s == "cfg") return GuidanceMode::cfg;
    if (s == "ctag") return GuidanceMode::ctag;
    if (s == "truncation") return GuidanceMode::truncation;
    throw ConfigError("unknown guidance mode '" + s + "'");
}

// Two published forms of the conditional tangential correction. The
// standard form starts from the unconditional prediction and adds the
// amplified term as-is; the sigma_scaled form starts from the conditional
// prediction and divides the amplified term by the current noise level.
enum class CtagForm { standard, sigma_scaled };

inline const char* to_string(CtagForm f) {
    return f == CtagForm::standard ? "standard" : "sigma_scaled";
}

inline CtagForm ctag_form_from_string(const std::string& s) {
    if (s == "standard") return CtagForm::standard;
    if (s == "sigma_scaled") return CtagForm::sigma_scaled;
    throw ConfigError("unknown ctag form '" + s + "'");
}

// Amplification values that worked well in practice for the tangential
// mode (first three) and for the conditional variant under
// classifier-free guidance (last).
namespace eta_presets {
inline constexpr double kDefault = 1.15;
inline constexpr double kStrong = 1.2;
inline constexpr double kStronger = 1.25;
inline constexpr double kConditional = 2.5;
}  // namespace eta_presets

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::none;
    double eta = 1.0;
    double omega = 0.0;
    std::optional<double> truncation_radius;
    std::optional<int> condition_label;
    // Permits eta (or kappa) below 1 for attenuation studies.
    bool allow_sub_unit = false;
    CtagForm ctag_form = CtagForm::standard;

    void validate() const {
        if (!std::isfinite(eta) || !std::isfinite(omega)) {
            throw ConfigError("guidance: eta and omega must be finite");
        }
        if (eta < 0.0) throw ConfigError("guidance: eta must be >= 0");
        if ((mode == GuidanceMode::tag || mode == GuidanceMode::normal_amp) &&
            eta < 1.0 && !allow_sub_unit) {
            throw ConfigError(
                "guidance: eta < 1 attenuates; set allow_sub_unit to permit it");
        }
        if (mode == GuidanceMode::cfg || mode == GuidanceMode::ctag) {
            if (!condition_label.has_value()) {
                throw ConfigError("guidance: mode '" + std::string(to_string(mode)) +
                                  "' requires condition_label");
            }
            if (omega < 0.0) throw ConfigError("guidance: omega must be >= 0");
        }
        if (mode == GuidanceMode::truncation) {
            if (!truncation_radius.has_value() || !(*truncation_radius > 0.0)) {
                throw ConfigError(
                    "guidance: mode 'truncation' requires truncation_radius > 0");
            }
        }
    }
};

// Increment of one deterministic denoising transition:
//   delta = alpha_tilde * eps + beta * x.
// The equivalent closed form (a * x + b * eps) - x is evaluated as a
// cross-check; the two disagree only when the coefficient struct itself is
// inconsistent.
inline Vec base_increment(const Vec& x, const Vec& eps, const StepCoeffs& c) {
    check_same_dim(x, eps, "base_increment");
    Vec delta(x.size());
    double scale_ref = 0.0;
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        delta[i] = c.alpha_tilde * eps[i] + c.beta * x[i];
        double closed = (c.a * x[i] + c.b * eps[i]) - x[i];
        err = std::max(err, std::abs(delta[i] - closed));
        scale_ref = std::max({scale_ref, std::abs(x[i]), std::abs(eps[i])});
    }
    if (err > 1e-12 * std::max(1.0, scale_ref)) {
        throw ScheduleError("base_increment: coefficient forms disagree by " +
                            std::to_string(err));
    }
    return delta;
}

// Increment with the tangential part amplified: parallel + eta * tangential
// relative to the current state direction. eta = 1 returns delta unchanged
// (bit for bit), so the amplified path reduces exactly to the base path.
inline Vec tangential_amplified_increment(const Vec& x, const Vec& delta,
                                          double eta) {
    check_same_dim(x, delta, "tangential_amplified_increment");
    if (eta == 1.0) return delta;
    Decomposition d = decompose(delta, x);
    Vec r(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        r[i] = d.parallel[i] + eta * d.tangential[i];
    }
    return r;
}

// Increment with the radial part amplified instead (over-smoothing probe):
// kappa * parallel + tangential.
inline Vec normal_amplified_increment(const Vec& x, const Vec& delta,
                                      double kappa) {
    check_same_dim(x, delta, "normal_amplified_increment");
    if (kappa == 1.0) return delta;
    Decomposition d = decompose(delta, x);
    Vec r(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        r[i] = kappa * d.parallel[i] + d.tangential[i];
    }
    return r;
}

// One amplified transition applied to the state.
inline Vec tag_step(const Vec& x, const Vec& delta, double eta) {
    Vec inc = tangential_amplified_increment(x, delta, eta);
    return add(x, inc);
}

inline Vec normal_amp_step(const Vec& x, const Vec& delta, double kappa) {
    Vec inc = normal_amplified_increment(x, delta, kappa);
    return add(x, inc);
}

// Classifier-free combination: eps_c + omega * (eps_c - eps_u).
inline Vec cfg_eps(const Vec& eps_c, const Vec& eps_u, double omega) {
    check_same_dim(eps_c, eps_u, "cfg_eps");
    Vec r(eps_c.size());
    for (std::size_t i = 0; i < eps_c.size(); ++i) {
        r[i] = eps_c[i] + omega * (eps_c[i] - eps_u[i]);
    }
    return r;
}

// Projection of z onto the line spanned by v: (<z, v> / <v, v>) v.
// Invariant under positive rescaling of v.
inline Vec line_projection(const Vec& z, const Vec& v) {
    check_same_dim(z, v, "line_projection");
    double vv = dot(v, v);
    if (!(vv > kNormFloor * kNormFloor)) {
        throw DegenerateState("line_projection: direction norm below floor");
    }
    return scale(v, dot(z, v) / vv);
}

namespace detail {

// Shared core of both conditional-guidance forms. base is the prediction
// the amplified term is added to; amp_scale multiplies the term.
inline Vec ctag_core(const Vec& x, const Vec& eps_c, const Vec& eps_u,
                     double omega, double eta, const Vec& base, double amp_scale,
                     bool* fallback) {
    check_same_dim(eps_c, eps_u, "ctag_eps");
    check_same_dim(x, eps_c, "ctag_eps");
    Vec g = sub(eps_c, eps_u);
    Vec g_perp = project_tangential(g, x);
    double gp2 = dot(g_perp, g_perp);
    Vec r(x.size());
    if (!(std::sqrt(gp2) > kNormFloor)) {
        // No tangential content in the guidance direction; fall back to the
        // plain classifier-free combination on the same base.
        if (fallback) *fallback = true;
        for (std::size_t i = 0; i < x.size(); ++i) {
            r[i] = base[i] + omega * g[i];
        }
        return r;
    }
    if (fallback) *fallback = false;
    double coef = dot(eps_c, g_perp) / gp2;
    for (std::size_t i = 0; i < x.size(); ++i) {
        r[i] = base[i] + omega * g[i] + eta * amp_scale * coef * g_perp[i];
    }
    return r;
}

}  // namespace detail

// Conditional tangential amplification, standard form:
//   eps = eps_u + omega * (eps_c - eps_u)
//         + eta * (<eps_c, g_perp> / ||g_perp||^2) * g_perp
// where g_perp is the part of (eps_c - eps_u) orthogonal to the state
// direction. When g_perp vanishes the term is dropped and *fallback is set.
inline Vec ctag_eps(const Vec& x, const Vec& eps_c, const Vec& eps_u,
                    double omega, double eta, bool* fallback = nullptr) {
    return detail::ctag_core(x, eps_c, eps_u, omega, eta, eps_u, 1.0, fallback);
}

// Sigma-scaled form: the base is the conditional prediction and the
// amplified term is divided by the current noise level.
inline Vec ctag_eps_sigma_scaled(const Vec& x, const Vec& eps_c, const Vec& eps_u,
                                 double omega, double eta, double sigma,
                                 bool* fallback = nullptr) {
    if (!(sigma > 0.0)) {
        throw DegenerateNoiseLevel("ctag_eps_sigma_scaled: sigma must be positive");
    }
    return detail::ctag_core(x, eps_c, eps_u, omega, eta, eps_c, 1.0 / sigma,
                             fallback);
}

}  // namespace tag
