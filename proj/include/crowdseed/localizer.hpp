#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "crowdseed/core.hpp"
#include "crowdseed/segmenter.hpp"

namespace crowdseed {

/// Symmetric 2×2 covariance.
struct Cov2 {
    double xx = 1.0;
    double xy = 0.0;
    double yy = 1.0;

    double det() const { return xx * yy - xy * xy; }
    /// Eigenvalues, smaller first.
    std::array<double, 2> eigenvalues() const;
    /// Raises eigenvalues below `floor` to `floor`, keeping eigenvectors.
    Cov2 clamped(double floor) const;
    bool operator==(const Cov2&) const = default;
};

struct GaussianComponent {
    double weight = 0.5;
    Point mean;
    Cov2 cov;
    bool operator==(const GaussianComponent&) const = default;
};

/// Two-component mixture fitted to a soft mask.
struct GmmParams {
    std::array<GaussianComponent, 2> comp;

    /// Weights sum to 1 within 1e-9 and covariances are SPD with eigenvalues >= floor.
    bool valid(double cov_floor = 0.0) const;
    bool operator==(const GmmParams&) const = default;
};

/// Per-pixel soft assignments over a mask window, row-major.
struct Responsibilities {
    Rect window;
    std::vector<std::array<double, 2>> z;
};

struct LocalizerConfig {
    int k = 4;
    int em_max_iters = 100;
    double em_tol = 1e-6;
    double cov_floor = 1e-4;

    void validate() const;
    bool operator==(const LocalizerConfig&) const = default;
};

/// log N(p | mean, cov) for a 2-D Gaussian.
double log_gaussian(const Point& p, const Point& mean, const Cov2& cov);

/// E-step: z_ij = pi_j N(x_i|mu_j,S_j) / sum_k pi_k N(x_i|mu_k,S_k), evaluated in log space.
/// Pixels where both components underflow get (0.5, 0.5).
Responsibilities em_e_step(const SoftMask& mask, const GmmParams& g);

/// M-step with scores s_i as sample weights; covariances clamped to cov_floor.
/// Throws ComponentCollapse when a component's mass falls below 1e-12 of the total.
GmmParams em_m_step(const SoftMask& mask, const Responsibilities& z, double cov_floor = 1e-4);

/// sum_i s_i log sum_j pi_j N(x_i | mu_j, S_j)
double weighted_log_likelihood(const SoftMask& mask, const GmmParams& g);

/// Split at the weighted median along the principal axis of the mask (vertical for upright
/// or isotropic masks), then per-half centroids and scatter.
GmmParams initial_gmm(const SoftMask& mask, double cov_floor);

struct EmTrace {
    std::vector<double> log_likelihood;
    int iterations = 0;
    bool converged = false;
};

GmmParams fit_weighted_gmm(const SoftMask& mask, const LocalizerConfig& cfg, EmTrace* trace = nullptr);

/// Mean of the component with smaller y; ties go to the larger weight.
Point head_point(const GmmParams& g);

/// x = centroid of the binarized mask, y = top + gamma * bounding-box height.
Point naive_head_point(const SoftMask& mask, double gamma);

struct SoftMaskStats {
    int prompted = 0;
    int skipped = 0;
};

/// Averages m0 with the person masks obtained by prompting at K seeded points of m0.
/// Prompts that return no person overlapping m0 are skipped.
SoftMask soft_mask_distribution(const SoftMask& m0, const RasterImage& image, Segmenter& segmenter, int k,
                                std::uint64_t seed, const std::string& image_id = {},
                                SoftMaskStats* stats = nullptr);

/// soft_mask_distribution -> fit_weighted_gmm -> head_point, kept inside m0's window.
Point localize_head(const SoftMask& m0, const RasterImage& image, Segmenter& segmenter, const LocalizerConfig& cfg,
                    std::uint64_t seed, const std::string& image_id = {});

}  // namespace crowdseed
