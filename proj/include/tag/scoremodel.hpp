#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tag/errors.hpp"
#include "tag/rng.hpp"
#include "tag/schedule.hpp"
#include "tag/vec.hpp"

namespace tag {

struct GmmComponent {
    double weight;
    Vec mean;
    double stdev;
};

// Isotropic Gaussian mixture with validated weights. Density and score are
// evaluated through log-space accumulation so widely separated components
// cannot underflow to a zero total.
class GaussianMixture {
public:
    explicit GaussianMixture(std::vector<GmmComponent> components)
        : components_(std::move(components)) {
        if (components_.empty()) {
            throw ConfigError("mixture: needs at least one component");
        }
        dim_ = components_.front().mean.size();
        if (dim_ == 0) throw ConfigError("mixture: zero-dimensional mean");
        double wsum = 0.0;
        for (std::size_t i = 0; i < components_.size(); ++i) {
            const GmmComponent& c = components_[i];
            if (c.mean.size() != dim_) {
                throw DimensionError("mixture: component " + std::to_string(i) +
                                     " has mismatched dimension");
            }
            if (!(c.weight > 0.0) || c.weight > 1.0) {
                throw ConfigError("mixture: component " + std::to_string(i) +
                                  " weight outside (0, 1]");
            }
            if (!(c.stdev > 0.0)) {
                throw ConfigError("mixture: component " + std::to_string(i) +
                                  " stdev must be positive");
            }
            if (!all_finite(c.mean)) {
                throw ConfigError("mixture: component " + std::to_string(i) +
                                  " mean is not finite");
            }
            wsum += c.weight;
        }
        if (std::abs(wsum - 1.0) > 1e-12) {
            throw ConfigError("mixture: weights sum to " + std::to_string(wsum) +
                              ", expected 1");
        }
    }

    std::size_t dim() const { return dim_; }
    const std::vector<GmmComponent>& components() const { return components_; }

    double log_density(const Vec& x) const {
        check_point(x);
        double mx = max_component_logpdf(x);
        double total = 0.0;
        for (const GmmComponent& c : components_) {
            total += std::exp(component_logpdf(c, x) - mx);
        }
        return mx + std::log(total);
    }

    // Gradient of log density. Responsibilities are formed against the
    // largest component log-pdf, never against raw densities.
    Vec score(const Vec& x) const {
        check_point(x);
        double mx = max_component_logpdf(x);
        Vec grad(dim_, 0.0);
        double total = 0.0;
        for (const GmmComponent& c : components_) {
            double r = std::exp(component_logpdf(c, x) - mx);
            total += r;
            double coef = r / (c.stdev * c.stdev);
            for (std::size_t i = 0; i < dim_; ++i) {
                grad[i] += coef * (c.mean[i] - x[i]);
            }
        }
        for (std::size_t i = 0; i < dim_; ++i) grad[i] /= total;
        return grad;
    }

private:
    void check_point(const Vec& x) const {
        if (x.size() != dim_) {
            throw DimensionError("mixture: point has dimension " +
                                 std::to_string(x.size()) + ", expected " +
                                 std::to_string(dim_));
        }
    }

    static double component_logpdf(const GmmComponent& c, const Vec& x) {
        double dist2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double d = x[i] - c.mean[i];
            dist2 += d * d;
        }
        double d = static_cast<double>(x.size());
        return std::log(c.weight) - d * std::log(c.stdev) -
               0.5 * d * 1.8378770664093454836 -  // log(2*pi)
               0.5 * dist2 / (c.stdev * c.stdev);
    }

    double max_component_logpdf(const Vec& x) const {
        double mx = -std::numeric_limits<double>::infinity();
        for (const GmmComponent& c : components_) {
            double v = component_logpdf(c, x);
            if (v > mx) mx = v;
        }
        return mx;
    }

    std::vector<GmmComponent> components_;
    std::size_t dim_;
};

// Class-labelled mixture. The marginal is assembled from the classes with
// prior-scaled weights, so its density equals the prior-weighted sum of
// class densities by construction.
class ConditionalMixture {
public:
    static ConditionalMixture from_classes(std::vector<GaussianMixture> classes,
                                           std::vector<double> priors) {
        if (classes.empty()) {
            throw ConfigError("conditional mixture: needs at least one class");
        }
        if (classes.size() != priors.size()) {
            throw ConfigError("conditional mixture: class/prior count mismatch");
        }
        double psum = 0.0;
        for (double p : priors) {
            if (!(p > 0.0) || p > 1.0) {
                throw ConfigError("conditional mixture: priors must lie in (0, 1]");
            }
            psum += p;
        }
        if (std::abs(psum - 1.0) > 1e-12) {
            throw ConfigError("conditional mixture: priors sum to " +
                              std::to_string(psum) + ", expected 1");
        }
        std::vector<GmmComponent> all;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            if (classes[c].dim() != classes[0].dim()) {
                throw DimensionError("conditional mixture: class dimensions differ");
            }
            for (const GmmComponent& comp : classes[c].components()) {
                GmmComponent scaled = comp;
                scaled.weight = comp.weight * priors[c];
                all.push_back(std::move(scaled));
            }
        }
        return ConditionalMixture(std::move(classes), std::move(priors),
                                  GaussianMixture(std::move(all)));
    }

    std::size_t dim() const { return marginal_.dim(); }
    int class_count() const { return static_cast<int>(classes_.size()); }

    const GaussianMixture& class_at(int label) const {
        if (label < 0 || label >= class_count()) {
            throw ConfigError("conditional mixture: class label " +
                              std::to_string(label) + " out of range [0, " +
                              std::to_string(class_count()) + ")");
        }
        return classes_[static_cast<std::size_t>(label)];
    }

    double prior_at(int label) const {
        class_at(label);
        return priors_[static_cast<std::size_t>(label)];
    }

    const GaussianMixture& marginal() const { return marginal_; }

private:
    ConditionalMixture(std::vector<GaussianMixture> classes,
                       std::vector<double> priors, GaussianMixture marginal)
        : classes_(std::move(classes)),
          priors_(std::move(priors)),
          marginal_(std::move(marginal)) {}

    std::vector<GaussianMixture> classes_;
    std::vector<double> priors_;
    GaussianMixture marginal_;
};

// Parameters of the planar branching tree. Level l holds
// branching_factor^l segments whose length decays by 0.75 per level; the
// fan is centered on the +y axis and each segment carries
// points_per_segment equally spaced component means.
struct BranchSpec {
    int depth = 4;
    int branching_factor = 2;
    double segment_length = 0.25;
    double spread_angle = 1.55;
    int points_per_segment = 8;
    double component_stdev = 0.02;

    void validate() const {
        if (depth < 1) throw ConfigError("branch spec: depth must be >= 1");
        if (branching_factor < 1) {
            throw ConfigError("branch spec: branching_factor must be >= 1");
        }
        if (!(segment_length > 0.0)) {
            throw ConfigError("branch spec: segment_length must be positive");
        }
        if (!(spread_angle >= 0.0) || spread_angle > 1.5707963267948966) {
            throw ConfigError("branch spec: spread_angle must lie in [0, pi/2]");
        }
        if (points_per_segment < 1) {
            throw ConfigError("branch spec: points_per_segment must be >= 1");
        }
        if (!(component_stdev > 0.0)) {
            throw ConfigError("branch spec: component_stdev must be positive");
        }
        double total = 0.0;
        double level = 1.0;
        for (int l = 1; l <= depth; ++l) {
            level *= static_cast<double>(branching_factor);
            total += level * static_cast<double>(points_per_segment);
            if (total > 1e5) {
                throw ConfigError("branch spec: more than 100000 components");
            }
        }
    }
};

namespace detail {

inline void grow_branch(const BranchSpec& spec, int level, double x0, double y0,
                        double angle, std::vector<GmmComponent>* out) {
    double len = spec.segment_length * std::pow(0.75, level - 1);
    // Angle measured from the +y axis, positive toward +x.
    double dx = std::sin(angle);
    double dy = std::cos(angle);
    int m = spec.points_per_segment;
    for (int j = 1; j <= m; ++j) {
        double frac = static_cast<double>(j) / static_cast<double>(m);
        GmmComponent c;
        c.weight = 1.0;  // normalized by the caller
        c.mean = {x0 + frac * len * dx, y0 + frac * len * dy};
        c.stdev = spec.component_stdev;
        out->push_back(std::move(c));
    }
    if (level < spec.depth) {
        double ex = x0 + len * dx;
        double ey = y0 + len * dy;
        for (int b = 0; b < spec.branching_factor; ++b) {
            double off = 0.0;
            if (spec.branching_factor > 1) {
                off = spec.spread_angle *
                      (-1.0 + 2.0 * static_cast<double>(b) /
                                  static_cast<double>(spec.branching_factor - 1));
            }
            grow_branch(spec, level + 1, ex, ey, angle + off, out);
        }
    }
}

}  // namespace detail

// Deterministic 2-d branching mixture. One class per level-1 segment
// (subtree); priors are proportional to component counts, so the marginal
// weights all components uniformly. The seed parameter is accepted for
// interface stability but unused: construction involves no randomness.
inline ConditionalMixture build_branching_gmm(const BranchSpec& spec,
                                              std::uint64_t /*seed*/ = 0) {
    spec.validate();
    std::vector<GaussianMixture> classes;
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    for (int b = 0; b < spec.branching_factor; ++b) {
        double angle = 0.0;
        if (spec.branching_factor > 1) {
            angle = spec.spread_angle *
                    (-1.0 + 2.0 * static_cast<double>(b) /
                                static_cast<double>(spec.branching_factor - 1));
        }
        std::vector<GmmComponent> comps;
        detail::grow_branch(spec, 1, 0.0, 0.0, angle, &comps);
        for (GmmComponent& c : comps) {
            c.weight = 1.0 / static_cast<double>(comps.size());
        }
        counts.push_back(comps.size());
        total += comps.size();
        classes.emplace_back(std::move(comps));
    }
    std::vector<double> priors;
    for (std::size_t n : counts) {
        priors.push_back(static_cast<double>(n) / static_cast<double>(total));
    }
    return ConditionalMixture::from_classes(std::move(classes), std::move(priors));
}

// Mixture of the noisy state at training index t under the
// variance-preserving forward process: means shrink by sqrt(alpha_bar),
// component variance becomes alpha_bar * stdev^2 + (1 - alpha_bar).
inline GaussianMixture marginal_at_noise(const GaussianMixture& mix,
                                         const NoiseSchedule& schedule, int t) {
    double ab = schedule.alpha_bar_at(t);
    double root_ab = std::sqrt(ab);
    double noise_var = 1.0 - ab;
    std::vector<GmmComponent> comps;
    comps.reserve(mix.components().size());
    for (const GmmComponent& c : mix.components()) {
        GmmComponent nc;
        nc.weight = c.weight;
        nc.mean = scale(c.mean, root_ab);
        nc.stdev = std::sqrt(ab * c.stdev * c.stdev + noise_var);
        comps.push_back(std::move(nc));
    }
    return GaussianMixture(std::move(comps));
}

// Score of the noisy marginal at training index t.
inline Vec score(const GaussianMixture& mix, const NoiseSchedule& schedule, int t,
                 const Vec& x) {
    return marginal_at_noise(mix, schedule, t).score(x);
}

// Noise prediction implied by the score: eps = -sigma * score.
inline Vec eps_pred(const GaussianMixture& mix, const NoiseSchedule& schedule,
                    int t, const Vec& x) {
    double sigma = schedule.sigma_at(t);
    if (!(sigma > 0.0)) {
        throw DegenerateNoiseLevel("eps_pred: sigma is zero at index " +
                                   std::to_string(t));
    }
    Vec s = score(mix, schedule, t, x);
    return scale(s, -sigma);
}

// Posterior mean of the clean state given the noisy one:
// (x + sigma^2 * score(x)) / sqrt(alpha_bar).
inline Vec tweedie_mean(const GaussianMixture& mix, const NoiseSchedule& schedule,
                        int t, const Vec& x) {
    double ab = schedule.alpha_bar_at(t);
    if (!(ab > 1e-300)) {
        throw DegenerateNoiseLevel("tweedie_mean: alpha_bar is zero at index " +
                                   std::to_string(t));
    }
    double sigma2 = 1.0 - ab;
    Vec s = score(mix, schedule, t, x);
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        r[i] = (x[i] + sigma2 * s[i]) / std::sqrt(ab);
    }
    return r;
}

// Exact draw from the mixture: multinomial component pick, then an
// isotropic Gaussian around its mean.
inline Vec sample_from(const GaussianMixture& mix, CounterRng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    const std::vector<GmmComponent>& comps = mix.components();
    std::size_t pick = comps.size() - 1;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        acc += comps[i].weight;
        if (u < acc) {
            pick = i;
            break;
        }
    }
    const GmmComponent& c = comps[pick];
    Vec v(mix.dim());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = c.mean[i] + c.stdev * rng.normal();
    }
    return v;
}

// One line per component: weight, mean coordinates, stdev.
inline void dump_components(const GaussianMixture& mix, std::ostream& os) {
    char buf[40];
    for (const GmmComponent& c : mix.components()) {
        std::snprintf(buf, sizeof(buf), "%.17g", c.weight);
        os << buf;
        for (double m : c.mean) {
            std::snprintf(buf, sizeof(buf), "%.17g", m);
            os << ' ' << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", c.stdev);
        os << ' ' << buf << '\n';
    }
}

// Inverse of dump_components.
inline GaussianMixture load_components(std::istream& is) {
    std::vector<GmmComponent> comps;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        double v = 0.0;
        while (ls >> v) vals.push_back(v);
        if (vals.size() < 3) {
            throw ConfigError("component list: line with fewer than 3 fields");
        }
        GmmComponent c;
        c.weight = vals.front();
        c.stdev = vals.back();
        c.mean.assign(vals.begin() + 1, vals.end() - 1);
        comps.push_back(std::move(c));
    }
    return GaussianMixture(std::move(comps));
}

}  // namespace tag
