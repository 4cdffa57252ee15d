#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tag/errors.hpp"
#include "tag/geometry.hpp"
#include "tag/guidance.hpp"
#include "tag/schedule.hpp"
#include "tag/scoremodel.hpp"
#include "tag/vec.hpp"

namespace tag {

// First-order alignment of an increment with the density gradient, using
// the noise prediction as a stand-in for the score: <delta, -eps / sigma>.
inline double first_order_gain(const Vec& delta, const Vec& eps, double sigma) {
    check_same_dim(delta, eps, "first_order_gain");
    if (!(sigma > 0.0)) {
        throw DegenerateNoiseLevel("first_order_gain: sigma must be positive");
    }
    return -dot(delta, eps) / sigma;
}

struct GainReport {
    double eta = 1.0;
    double gain = 0.0;            // amplified increment
    double gain_base = 0.0;       // unamplified increment
    double gain_diff_direct = 0.0;
    double gain_diff_formula = 0.0;

    // The two routes to the gain difference must agree, and the difference
    // must be nonnegative up to rounding.
    bool passes(double rel_tol = 1e-9, double neg_slack = 1e-12) const {
        double err = std::abs(gain_diff_direct - gain_diff_formula);
        if (err > rel_tol * std::max(1.0, std::abs(gain_diff_formula))) return false;
        if (gain_diff_direct < -neg_slack) return false;
        if (gain_diff_formula < -neg_slack) return false;
        return true;
    }
};

// Evaluates the gain difference between the amplified and base increments
// two independent ways: directly from the two gains, and from the closed
// form -(alpha_tilde * (eta - 1) / sigma) * ||tangential part of eps||^2.
inline GainReport gain_report(const Vec& x, const Vec& eps,
                                 const StepCoeffs& coeffs, double sigma,
                                 double eta) {
    Vec delta = base_increment(x, eps, coeffs);
    Vec amplified = tangential_amplified_increment(x, delta, eta);

    GainReport r;
    r.eta = eta;
    r.gain_base = first_order_gain(delta, eps, sigma);
    r.gain = first_order_gain(amplified, eps, sigma);
    r.gain_diff_direct = r.gain - r.gain_base;

    Vec eps_perp = project_tangential(eps, x);
    r.gain_diff_formula =
        -(coeffs.alpha_tilde * (eta - 1.0) / sigma) * dot(eps_perp, eps_perp);
    return r;
}

struct GainScan {
    std::vector<GainReport> reports;
    bool monotone = true;
};

// Gain as a function of eta over an ascending grid. The gain is linear in
// eta with nonnegative slope, so the sequence must be non-decreasing up to
// a small slack.
inline GainScan gain_monotonicity_scan(const Vec& x, const Vec& eps,
                                       const StepCoeffs& coeffs, double sigma,
                                       const std::vector<double>& etas,
                                       double slack = 1e-12) {
    if (etas.empty()) throw ConfigError("gain scan: empty eta grid");
    for (std::size_t i = 1; i < etas.size(); ++i) {
        if (!(etas[i] > etas[i - 1])) {
            throw ConfigError("gain scan: eta grid must be strictly ascending");
        }
    }
    GainScan scan;
    for (double eta : etas) {
        scan.reports.push_back(gain_report(x, eps, coeffs, sigma, eta));
    }
    for (std::size_t i = 1; i < scan.reports.size(); ++i) {
        if (scan.reports[i].gain < scan.reports[i - 1].gain - slack) {
            scan.monotone = false;
        }
    }
    return scan;
}

namespace detail {

// Deterministic evenly spaced subsample, stable across runs and platforms.
inline std::vector<const Vec*> subsample(const std::vector<Vec>& points,
                                         std::size_t cap) {
    std::vector<const Vec*> out;
    std::size_t n = points.size();
    if (n <= cap) {
        out.reserve(n);
        for (const Vec& p : points) out.push_back(&p);
        return out;
    }
    out.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        out.push_back(&points[i * n / cap]);
    }
    return out;
}

inline double distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline void check_points_dim(const std::vector<Vec>& pts, std::size_t dim,
                             const char* where) {
    for (const Vec& p : pts) {
        if (p.size() != dim) {
            throw DimensionError(std::string(where) + ": point dimension " +
                                 std::to_string(p.size()) + ", expected " +
                                 std::to_string(dim));
        }
    }
}

}  // namespace detail

inline constexpr std::size_t kPairwiseCap = 2000;
inline constexpr double kDefaultOodMultiplier = 3.0;

// Fraction of samples that are far from every component of the reference
// mixture, measured in units of each component's own stdev: a sample is
// out of distribution when min_i dist_i / stdev_i > multiplier.
inline double ood_fraction(const std::vector<Vec>& samples,
                           const GaussianMixture& reference,
                           double multiplier = kDefaultOodMultiplier) {
    if (samples.empty()) throw EmptyBatch("ood_fraction: no samples");
    if (!(multiplier > 0.0)) {
        throw ConfigError("ood_fraction: multiplier must be positive");
    }
    detail::check_points_dim(samples, reference.dim(), "ood_fraction");
    std::size_t count = 0;
    for (const Vec& s : samples) {
        double best = std::numeric_limits<double>::infinity();
        for (const GmmComponent& c : reference.components()) {
            double r = detail::distance(s, c.mean) / c.stdev;
            if (r < best) best = r;
        }
        if (best > multiplier) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(samples.size());
}

// Mean distance from each sample to the nearest component mean.
inline double mean_manifold_distance(const std::vector<Vec>& samples,
                                     const GaussianMixture& reference) {
    if (samples.empty()) throw EmptyBatch("mean_manifold_distance: no samples");
    detail::check_points_dim(samples, reference.dim(), "mean_manifold_distance");
    double total = 0.0;
    for (const Vec& s : samples) {
        double best = std::numeric_limits<double>::infinity();
        for (const GmmComponent& c : reference.components()) {
            double r = detail::distance(s, c.mean);
            if (r < best) best = r;
        }
        total += best;
    }
    return total / static_cast<double>(samples.size());
}

// Energy distance between two point sets, V-statistic form:
//   2 E||A - B|| - E||A - A'|| - E||B - B'||
// with the diagonal included, so identical sets give exactly zero. Sets
// larger than the cap are reduced by an evenly spaced subsample.
inline double energy_distance(const std::vector<Vec>& a,
                              const std::vector<Vec>& b,
                              std::size_t cap = kPairwiseCap) {
    if (a.empty() || b.empty()) throw EmptyBatch("energy_distance: empty set");
    if (a.front().size() != b.front().size()) {
        throw DimensionError("energy_distance: sets have different dimensions");
    }
    detail::check_points_dim(a, a.front().size(), "energy_distance");
    detail::check_points_dim(b, a.front().size(), "energy_distance");

    std::vector<const Vec*> sa = detail::subsample(a, cap);
    std::vector<const Vec*> sb = detail::subsample(b, cap);
    double na = static_cast<double>(sa.size());
    double nb = static_cast<double>(sb.size());

    double cross = 0.0;
    for (const Vec* pa : sa) {
        for (const Vec* pb : sb) cross += detail::distance(*pa, *pb);
    }
    double within_a = 0.0;
    for (const Vec* p : sa) {
        for (const Vec* q : sa) within_a += detail::distance(*p, *q);
    }
    double within_b = 0.0;
    for (const Vec* p : sb) {
        for (const Vec* q : sb) within_b += detail::distance(*p, *q);
    }
    return 2.0 * cross / (na * nb) - within_a / (na * na) - within_b / (nb * nb);
}

// Mean pairwise distance over unordered pairs. A collapse toward a ridge
// or point shows up as a drop in this value.
inline double dispersion(const std::vector<Vec>& points,
                         std::size_t cap = kPairwiseCap) {
    if (points.size() < 2) {
        throw EmptyBatch("dispersion: need at least 2 points");
    }
    detail::check_points_dim(points, points.front().size(), "dispersion");
    std::vector<const Vec*> s = detail::subsample(points, cap);
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            total += detail::distance(*s[i], *s[j]);
        }
    }
    double n = static_cast<double>(s.size());
    return 2.0 * total / (n * (n - 1.0));
}

struct QualityReport {
    double ood_fraction = 0.0;
    double mean_manifold_distance = 0.0;
    double energy_distance = 0.0;
    double dispersion = 0.0;
};

inline QualityReport compute_quality(const std::vector<Vec>& samples,
                                     const GaussianMixture& reference,
                                     const std::vector<Vec>& reference_draws,
                                     double multiplier = kDefaultOodMultiplier) {
    QualityReport q;
    q.ood_fraction = ood_fraction(samples, reference, multiplier);
    q.mean_manifold_distance = mean_manifold_distance(samples, reference);
    q.energy_distance = energy_distance(samples, reference_draws);
    q.dispersion = dispersion(samples);
    return q;
}

}  // namespace tag
