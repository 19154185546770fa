#include "crowdseed/loss.hpp"

#include <algorithm>
#include <cmath>

namespace crowdseed {

const char* to_string(KernelMode mode) { return mode == KernelMode::Attractive ? "attractive" : "verbatim"; }

KernelMode parse_kernel_mode(const std::string& text) {
    if (text == "attractive") return KernelMode::Attractive;
    if (text == "verbatim") return KernelMode::Verbatim;
    throw Error(ErrorCode::ValidationError, "kernel mode must be \"attractive\" or \"verbatim\", got \"" + text + "\"");
}

void LossConfig::validate() const {
    if (!(omega >= 0.0)) throw Error(ErrorCode::ValidationError, "loss.omega must be >= 0");
    if (!(beta >= 0.0)) throw Error(ErrorCode::ValidationError, "loss.beta must be >= 0");
    if (!(epsilon > 0.0)) throw Error(ErrorCode::ValidationError, "loss.epsilon must be > 0");
}

void FitOptions::validate() const {
    if (!(lr > 0.0)) throw Error(ErrorCode::ValidationError, "fit.lr must be > 0");
    if (steps < 0) throw Error(ErrorCode::ValidationError, "fit.steps must be >= 0");
    if (!(init_density > 0.0)) throw Error(ErrorCode::ValidationError, "fit.init_density must be > 0");
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
    if (!(y > 0.0)) throw Error(ErrorCode::InvalidArgument, "softplus_inverse needs y > 0");
    return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

namespace {

double kernel_value(double d2, double epsilon, KernelMode mode) {
    const double e = std::exp(-d2 / epsilon);
    return mode == KernelMode::Verbatim ? e : -std::expm1(-d2 / epsilon);
}

}  // namespace

DistanceKernel distance_kernel(const Rect& window, Point head, double epsilon, KernelMode mode) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
    DistanceKernel k{window, std::vector<double>(static_cast<std::size_t>(window.area()))};
    for (int r = 0; r < window.h; ++r) {
        for (int c = 0; c < window.w; ++c) {
            const Point p = pixel_center(window.x + c, window.y + r);
            const double d2 = (p.x - head.x) * (p.x - head.x) + (p.y - head.y) * (p.y - head.y);
            k.values[static_cast<std::size_t>(r) * window.w + c] = kernel_value(d2, epsilon, mode);
        }
    }
    return k;
}

double background_loss(const DensityGrid& d, const BinaryMask& background) {
    if (d.width() != background.width() || d.height() != background.height()) {
        throw Error(ErrorCode::ShapeMismatch, "density and background mask differ in shape");
    }
    const auto v = d.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (background.get_index(i)) sum += v[i];
    }
    return sum;
}

LossProblem::LossProblem(const RegionPartition& partition, const LossConfig& cfg)
    : width_(partition.width()), height_(partition.height()), cfg_(cfg) {
    cfg.validate();
    const auto& unc = partition.uncertain();
    const auto& bg = partition.background();
    // 1 = background term only, 2 = some person term
    std::vector<std::uint8_t> touched(static_cast<std::size_t>(width_) * height_, 0);
    for (std::size_t i = 0; i < bg.size(); ++i) {
        if (bg.get_index(i) && !unc.get_index(i)) {
            background_.push_back(static_cast<std::uint32_t>(i));
            touched[i] = 1;
        }
    }
    for (std::size_t p = 0; p < partition.persons().size(); ++p) {
        const auto& person = partition.persons()[p];
        if (!person.head) {
            throw Error(ErrorCode::InvalidArgument, "person " + std::to_string(p) + " has no head point");
        }
        const Rect& w = person.mask.window();
        PersonTerm term;
        for (int r = 0; r < w.h; ++r) {
            for (int c = 0; c < w.w; ++c) {
                if (person.mask.local(c, r) < kBinarizeThreshold) continue;
                const int x = w.x + c;
                const int y = w.y + r;
                const auto idx = static_cast<std::uint32_t>(y * width_ + x);
                if (unc.get_index(idx)) continue;
                const Point pc = pixel_center(x, y);
                const double d2 = (pc.x - person.head->x) * (pc.x - person.head->x) +
                                  (pc.y - person.head->y) * (pc.y - person.head->y);
                term.idx.push_back(idx);
                term.kernel.push_back(kernel_value(d2, cfg.epsilon, cfg.kernel));
                touched[idx] = 2;
            }
        }
        persons_.push_back(std::move(term));
    }
    for (std::size_t i = 0; i < touched.size(); ++i) {
        if (touched[i]) active_.push_back(static_cast<std::uint32_t>(i));
        if (touched[i] == 1) background_only_.push_back(static_cast<std::uint32_t>(i));
    }
}

std::vector<double> LossProblem::person_masses(std::span<const double> d) const {
    std::vector<double> s;
    s.reserve(persons_.size());
    for (const auto& t : persons_) {
        double m = 0.0;
        for (auto i : t.idx) m += d[i];
        s.push_back(m);
    }
    return s;
}

double LossProblem::evaluate(std::span<const double> d, std::vector<double>* grad) const {
    if (d.size() != static_cast<std::size_t>(width_) * height_) {
        throw Error(ErrorCode::ShapeMismatch, "density size does not match the partition");
    }
    if (grad) grad->assign(d.size(), 0.0);

    double bkg = 0.0;
    for (auto i : background_) bkg += d[i];
    if (grad) {
        for (auto i : background_) (*grad)[i] += cfg_.beta;
    }

    double idv = 0.0;
    const double n = static_cast<double>(persons_.size());
    for (std::size_t p = 0; p < persons_.size(); ++p) {
        const auto& t = persons_[p];
        double s = 0.0;
        double dot = 0.0;
        for (std::size_t k = 0; k < t.idx.size(); ++k) {
            s += d[t.idx[k]];
            dot += d[t.idx[k]] * t.kernel[k];
        }
        if (s < 1e-12) throw Error(ErrorCode::ZeroMass, "person " + std::to_string(p) + " has zero predicted mass");
        const double tval = dot / s;
        idv += std::abs(s - 1.0) + cfg_.omega * tval;
        if (grad) {
            const double sign = s > 1.0 ? 1.0 : (s < 1.0 ? -1.0 : 0.0);
            for (std::size_t k = 0; k < t.idx.size(); ++k) {
                (*grad)[t.idx[k]] += (sign + cfg_.omega * (t.kernel[k] - tval) / s) / n;
            }
        }
    }
    if (n > 0) idv /= n;
    return idv + cfg_.beta * bkg;
}

double individual_loss(const DensityGrid& d, const std::vector<PersonInstance>& persons, const LossConfig& cfg) {
    RegionPartition only_persons(d.width(), d.height(), persons, BinaryMask(d.width(), d.height()),
                                 BinaryMask(d.width(), d.height()));
    LossConfig no_bg = cfg;
    no_bg.beta = 0.0;
    return LossProblem(only_persons, no_bg).evaluate(d.values(), nullptr);
}

double total_loss(const DensityGrid& d, const RegionPartition& partition, const LossConfig& cfg) {
    if (d.width() != partition.width() || d.height() != partition.height()) {
        throw Error(ErrorCode::ShapeMismatch, "density and partition differ in shape");
    }
    return LossProblem(partition, cfg).evaluate(d.values(), nullptr);
}

std::vector<double> loss_gradient(const DensityGrid& d, const RegionPartition& partition, const LossConfig& cfg) {
    if (d.width() != partition.width() || d.height() != partition.height()) {
        throw Error(ErrorCode::ShapeMismatch, "density and partition differ in shape");
    }
    std::vector<double> grad;
    LossProblem(partition, cfg).evaluate(d.values(), &grad);
    return grad;
}

DensityGrid fit_density(const RegionPartition& partition, const LossConfig& cfg, const FitOptions& opt,
                        FitReport* report, const DensityGrid* prior) {
    opt.validate();
    const LossProblem problem(partition, cfg);
    const int width = partition.width();
    const int height = partition.height();
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (prior && (prior->width() != width || prior->height() != height)) {
        throw Error(ErrorCode::ShapeMismatch, "density prior differs in shape from the partition");
    }

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = prior ? std::max(prior->values()[i], 1e-12) : opt.init_density;
    }
    for (auto i : problem.active_pixels()) d[i] = opt.init_density;

    // Background-only pixels start equal and always see the same gradient, so they share
    // one Adam variable stored in the last slot.
    const auto& shared = problem.background_only_pixels();
    std::vector<std::uint32_t> vars;
    {
        std::vector<std::uint8_t> is_shared(n, 0);
        for (auto i : shared) is_shared[i] = 1;
        for (auto i : problem.active_pixels()) {
            if (!is_shared[i]) vars.push_back(i);
        }
    }
    const bool has_shared = !shared.empty();
    const std::size_t nv = vars.size() + (has_shared ? 1 : 0);
    std::vector<double> theta(nv, softplus_inverse(opt.init_density)), m(nv, 0.0), v(nv, 0.0);
    auto pixel_of = [&](std::size_t a) { return a < vars.size() ? vars[a] : shared.front(); };
    std::vector<double> slope(nv);
    auto write_back = [&]() {
        for (std::size_t a = 0; a < nv; ++a) {
            const double t = theta[a];
            double value;
            if (t > 30.0) {
                value = t;
                slope[a] = 1.0;
            } else {
                const double e = std::exp(t);
                value = std::log1p(e);
                slope[a] = e / (1.0 + e);
            }
            if (a < vars.size()) d[vars[a]] = std::max(value, 1e-300);
        }
        if (has_shared) {
            const double value = std::max(softplus(theta.back()), 1e-300);
            for (auto i : shared) d[i] = value;
        }
    };
    write_back();

    FitReport local;
    FitReport& rep = report ? *report : local;
    rep = FitReport{};
    std::vector<double> grad, next_grad;
    double loss = problem.evaluate(d, &grad);
    rep.loss_trace.push_back(loss);

    double lr = opt.lr;
    double b1t = 1.0, b2t = 1.0;
    std::vector<double> saved_theta, saved_m, saved_v;
    for (int step = 0; step < opt.steps; ++step) {
        if (opt.monotone) {
            saved_theta = theta;
            saved_m = m;
            saved_v = v;
        }
        const double prev_b1t = b1t, prev_b2t = b2t;
        b1t *= opt.adam_beta1;
        b2t *= opt.adam_beta2;
        for (std::size_t a = 0; a < nv; ++a) {
            const double g = grad[pixel_of(a)] * slope[a];
            m[a] = opt.adam_beta1 * m[a] + (1.0 - opt.adam_beta1) * g;
            v[a] = opt.adam_beta2 * v[a] + (1.0 - opt.adam_beta2) * g * g;
            const double mhat = m[a] / (1.0 - b1t);
            const double vhat = v[a] / (1.0 - b2t);
            theta[a] -= lr * mhat / (std::sqrt(vhat) + opt.adam_eps);
        }
        write_back();
        const double next_loss = problem.evaluate(d, &next_grad);
        if (opt.monotone && next_loss > loss) {
            theta.swap(saved_theta);
            m.swap(saved_m);
            v.swap(saved_v);
            b1t = prev_b1t;
            b2t = prev_b2t;
            write_back();
            ++rep.rejected_steps;
            lr *= 0.5;
            if (lr < opt.min_lr) break;
            continue;
        }
        loss = next_loss;
        grad.swap(next_grad);
        rep.loss_trace.push_back(loss);
    }

    rep.max_mass_error = 0.0;
    for (double s : problem.person_masses(d)) rep.max_mass_error = std::max(rep.max_mass_error, std::abs(s - 1.0));
    rep.converged = rep.max_mass_error <= opt.mass_tol;
    return DensityGrid(width, height, std::move(d));
}

}  // namespace crowdseed
