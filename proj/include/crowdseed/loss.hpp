#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdseed/core.hpp"

namespace crowdseed {

/// Verbatim: C = exp(-d²/eps), as printed. Attractive: C = 1 - exp(-d²/eps), which
/// pulls mass toward the head when minimized.
enum class KernelMode { Attractive, Verbatim };

const char* to_string(KernelMode mode);
KernelMode parse_kernel_mode(const std::string& text);

struct LossConfig {
    double omega = 100.0;
    double beta = 0.01;
    /// Kernel bandwidth in px².
    double epsilon = 64.0;
    KernelMode kernel = KernelMode::Attractive;

    void validate() const;
    bool operator==(const LossConfig&) const = default;
};

struct DistanceKernel {
    Rect window;
    std::vector<double> values;
};

DistanceKernel distance_kernel(const Rect& window, Point head, double epsilon, KernelMode mode);

/// <D, M_b>
double background_loss(const DensityGrid& d, const BinaryMask& background);

/// (1/N) sum_i [ |S_i - 1| + omega <(D∘M_i)/S_i, C_i> ], S_i = <D, M_i>; 0 when N == 0.
double individual_loss(const DensityGrid& d, const std::vector<PersonInstance>& persons, const LossConfig& cfg);

/// L_idv + beta L_bkg. Uncertain pixels never enter either term.
double total_loss(const DensityGrid& d, const RegionPartition& partition, const LossConfig& cfg);

/// dL/dD as an image-sized row-major grid; zero on uncertain pixels.
std::vector<double> loss_gradient(const DensityGrid& d, const RegionPartition& partition, const LossConfig& cfg);

/// Flattened loss terms of one partition; the fitter evaluates this many times.
class LossProblem {
public:
    LossProblem(const RegionPartition& partition, const LossConfig& cfg);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t person_count() const { return persons_.size(); }

    /// Loss at density `d` (image-sized); fills `grad` with dL/dD when non-null.
    double evaluate(std::span<const double> d, std::vector<double>* grad) const;
    /// Pixel indices that some loss term touches.
    const std::vector<std::uint32_t>& active_pixels() const { return active_; }
    /// Active pixels touched only by the background term.
    const std::vector<std::uint32_t>& background_only_pixels() const { return background_only_; }
    /// S_i for every person.
    std::vector<double> person_masses(std::span<const double> d) const;

private:
    struct PersonTerm {
        std::vector<std::uint32_t> idx;
        std::vector<double> kernel;
    };
    int width_ = 0;
    int height_ = 0;
    LossConfig cfg_;
    std::vector<std::uint32_t> background_;
    std::vector<PersonTerm> persons_;
    std::vector<std::uint32_t> active_;
    std::vector<std::uint32_t> background_only_;
};

struct FitOptions {
    double lr = 1e-2;
    int steps = 2000;
    /// Starting density on every pixel the prior does not set.
    double init_density = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-12;
    /// Reject loss-increasing steps and halve lr; gives up below min_lr.
    bool monotone = false;
    double min_lr = 1e-6;
    /// Per-person |S_i - 1| bound that counts as converged.
    double mass_tol = 0.02;

    void validate() const;
    bool operator==(const FitOptions&) const = default;
};

struct FitReport {
    std::vector<double> loss_trace;
    int rejected_steps = 0;
    double max_mass_error = 0.0;
    /// False means NonConvergence: some |S_i - 1| > mass_tol after the last step.
    bool converged = true;
};

/// Minimizes total_loss over D = softplus(theta) with Adam on theta. Pixels outside
/// every loss term keep their initial value, taken from `prior` when given.
DensityGrid fit_density(const RegionPartition& partition, const LossConfig& cfg, const FitOptions& opt,
                        FitReport* report = nullptr, const DensityGrid* prior = nullptr);

double softplus(double x);
double softplus_inverse(double y);

}  // namespace crowdseed
