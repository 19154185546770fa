#include "crowdseed/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace crowdseed {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:    return "InvalidArgument";
        case ErrorCode::LengthMismatch:     return "LengthMismatch";
        case ErrorCode::OutOfBounds:        return "OutOfBounds";
        case ErrorCode::EmptyRect:          return "EmptyRect";
        case ErrorCode::ShapeMismatch:      return "ShapeMismatch";
        case ErrorCode::ZeroMass:           return "ZeroMass";
        case ErrorCode::ComponentCollapse:  return "ComponentCollapse";
        case ErrorCode::DegenerateMask:     return "DegenerateMask";
        case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::MalformedResponse:  return "MalformedResponse";
        case ErrorCode::PromptFailed:       return "PromptFailed";
        case ErrorCode::PlacementFailure:   return "PlacementFailure";
        case ErrorCode::EmptyInput:         return "EmptyInput";
        case ErrorCode::ParseError:         return "ParseError";
        case ErrorCode::ValidationError:    return "ValidationError";
        case ErrorCode::MissingArtifacts:   return "MissingArtifacts";
        case ErrorCode::Io:                 return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

Rect intersect(const Rect& a, const Rect& b) {
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.right(), b.right());
    const int y1 = std::min(a.bottom(), b.bottom());
    if (x1 <= x0 || y1 <= y0) return Rect{x0, y0, 0, 0};
    return Rect{x0, y0, x1 - x0, y1 - y0};
}

Rect bounding_union(const Rect& a, const Rect& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    const int x0 = std::min(a.x, b.x);
    const int y0 = std::min(a.y, b.y);
    const int x1 = std::max(a.right(), b.right());
    const int y1 = std::max(a.bottom(), b.bottom());
    return Rect{x0, y0, x1 - x0, y1 - y0};
}

// ---------------------------------------------------------------------------
// RasterImage

RasterImage::RasterImage(int width, int height, int channels)
    : RasterImage(width, height, channels,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                            std::max(height, 0) * std::max(channels, 0))) {}

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "image dimensions must be >= 1");
    }
    if (channels != 1 && channels != 3) {
        throw Error(ErrorCode::InvalidArgument, "image must have 1 or 3 channels");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw Error(ErrorCode::LengthMismatch, "image data length does not match width*height*channels");
    }
}

RasterImage RasterImage::to_gray() const {
    if (channels_ == 1) return *this;
    RasterImage out(width_, height_, 1);
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            const double luma = 0.299 * at(x, y, 0) + 0.587 * at(x, y, 1) + 0.114 * at(x, y, 2);
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
        }
    }
    return out;
}

RasterImage RasterImage::crop(const Rect& r) const {
    if (r.empty() || !r.inside(width_, height_)) {
        throw Error(ErrorCode::OutOfBounds, "crop rectangle outside image");
    }
    RasterImage out(r.w, r.h, channels_);
    const std::size_t row_bytes = static_cast<std::size_t>(r.w) * channels_;
    for (int y = 0; y < r.h; ++y) {
        const auto* src = &data_[(static_cast<std::size_t>(r.y + y) * width_ + r.x) * channels_];
        std::copy(src, src + row_bytes, &out.data_[static_cast<std::size_t>(y) * row_bytes]);
    }
    return out;
}

RasterImage RasterImage::resize_bilinear(int new_width, int new_height) const {
    if (new_width == width_ && new_height == height_) return *this;
    RasterImage out(new_width, new_height, channels_);
    const double sx = static_cast<double>(width_) / new_width;
    const double sy = static_cast<double>(height_) / new_height;
    for (int y = 0; y < new_height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(height_ - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, height_ - 1);
        const double wy = fy - y0;
        for (int x = 0; x < new_width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(width_ - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, width_ - 1);
            const double wx = fx - x0;
            for (int c = 0; c < channels_; ++c) {
                const double top = at(x0, y0, c) * (1.0 - wx) + at(x1, y0, c) * wx;
                const double bot = at(x0, y1, c) * (1.0 - wx) + at(x1, y1, c) * wx;
                const double v = top * (1.0 - wy) + bot * wy;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// SoftMask

SoftMask::SoftMask(Rect window)
    : window_(window), values_(static_cast<std::size_t>(std::max<std::int64_t>(window.area(), 0)), 0.0) {
    if (window.w < 0 || window.h < 0) {
        throw Error(ErrorCode::InvalidArgument, "negative mask window");
    }
}

SoftMask::SoftMask(Rect window, std::vector<double> values) : window_(window), values_(std::move(values)) {
    if (window.w < 0 || window.h < 0) {
        throw Error(ErrorCode::InvalidArgument, "negative mask window");
    }
    if (static_cast<std::int64_t>(values_.size()) != window.area()) {
        throw Error(ErrorCode::LengthMismatch, "mask values length does not match window area");
    }
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "mask score outside [0,1]");
        }
    }
}

void SoftMask::set_local(int col, int row, double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "mask score outside [0,1]");
    }
    values_[static_cast<std::size_t>(row) * window_.w + col] = v;
}

double SoftMask::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

std::int64_t SoftMask::count_at_least(double threshold) const {
    return std::count_if(values_.begin(), values_.end(), [&](double v) { return v >= threshold; });
}

SoftMask SoftMask::binarized(double threshold) const {
    std::vector<double> out(values_.size());
    std::transform(values_.begin(), values_.end(), out.begin(),
                   [&](double v) { return v >= threshold ? 1.0 : 0.0; });
    return SoftMask(window_, std::move(out));
}

Rect SoftMask::support_box(double threshold) const {
    int x0 = window_.w, y0 = window_.h, x1 = -1, y1 = -1;
    for (int r = 0; r < window_.h; ++r) {
        for (int c = 0; c < window_.w; ++c) {
            if (local(c, r) >= threshold) {
                x0 = std::min(x0, c);
                y0 = std::min(y0, r);
                x1 = std::max(x1, c);
                y1 = std::max(y1, r);
            }
        }
    }
    if (x1 < 0) return Rect{window_.x, window_.y, 0, 0};
    return Rect{window_.x + x0, window_.y + y0, x1 - x0 + 1, y1 - y0 + 1};
}

SoftMask SoftMask::expanded_to(const Rect& bigger) const {
    if (bounding_union(bigger, window_) != bigger && !window_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "expanded_to target does not contain the mask window");
    }
    SoftMask out(bigger);
    for (int r = 0; r < window_.h; ++r) {
        for (int c = 0; c < window_.w; ++c) {
            out.values_[static_cast<std::size_t>(r + window_.y - bigger.y) * bigger.w + (c + window_.x - bigger.x)] =
                local(c, r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// BinaryMask

BinaryMask::BinaryMask(int width, int height, bool fill)
    : width_(width), height_(height),
      bits_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill ? 1 : 0) {}

std::int64_t BinaryMask::count() const { return std::count(bits_.begin(), bits_.end(), std::uint8_t{1}); }

std::int64_t BinaryMask::count_in(const Rect& r) const {
    const Rect c = intersect(r, Rect{0, 0, width_, height_});
    std::int64_t n = 0;
    for (int y = c.y; y < c.bottom(); ++y) {
        const auto* row = &bits_[static_cast<std::size_t>(y) * width_];
        for (int x = c.x; x < c.right(); ++x) n += row[x];
    }
    return n;
}

// ---------------------------------------------------------------------------
// RegionPartition

RegionPartition::RegionPartition(int width, int height, std::vector<PersonInstance> persons,
                                 BinaryMask background, BinaryMask uncertain)
    : width_(width), height_(height), persons_(std::move(persons)), background_(std::move(background)),
      uncertain_(std::move(uncertain)) {
    if (background_.width() != width || background_.height() != height || uncertain_.width() != width ||
        uncertain_.height() != height) {
        throw Error(ErrorCode::ShapeMismatch, "partition masks must be image-sized");
    }
    for (std::size_t i = 0; i < background_.size(); ++i) {
        if (background_.get_index(i) && uncertain_.get_index(i)) {
            throw Error(ErrorCode::InvalidArgument, "background and uncertain masks overlap");
        }
    }
    for (std::size_t p = 0; p < persons_.size(); ++p) {
        const auto& person = persons_[p];
        const Rect& w = person.mask.window();
        if (!w.inside(width, height)) {
            throw Error(ErrorCode::OutOfBounds, "person mask window outside image");
        }
        if (!(person.score >= 0.0 && person.score <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "person score outside [0,1]");
        }
        if (person.head && !w.contains(*person.head)) {
            std::ostringstream os;
            os << "person " << p << " head lies outside its mask window";
            throw Error(ErrorCode::InvalidArgument, os.str());
        }
        for (int r = 0; r < w.h; ++r) {
            for (int c = 0; c < w.w; ++c) {
                if (person.mask.local(c, r) >= kBinarizeThreshold && uncertain_.get(w.x + c, w.y + r)) {
                    throw Error(ErrorCode::InvalidArgument, "person pixel marked uncertain");
                }
            }
        }
    }
}

RegionPartition RegionPartition::with_persons(std::vector<PersonInstance> persons) const {
    return RegionPartition(width_, height_, std::move(persons), background_, uncertain_);
}

// ---------------------------------------------------------------------------
// DensityGrid

DensityGrid::DensityGrid(int width, int height, double fill)
    : DensityGrid(width, height, std::vector<double>(static_cast<std::size_t>(width) * height, fill)) {}

DensityGrid::DensityGrid(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 0 || height < 0 || values_.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorCode::LengthMismatch, "density values length does not match grid size");
    }
    for (double v : values_) {
        if (!std::isfinite(v) || v < 0.0) {
            throw Error(ErrorCode::InvalidArgument, "density values must be finite and nonnegative");
        }
    }
}

void DensityGrid::set(int x, int y, double v) {
    if (!std::isfinite(v) || v < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "density values must be finite and nonnegative");
    }
    values_[static_cast<std::size_t>(y) * width_ + x] = v;
}

double DensityGrid::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

// ---------------------------------------------------------------------------

double mask_iou(const SoftMask& a, const SoftMask& b, double threshold) {
    const std::int64_t na = a.count_at_least(threshold);
    const std::int64_t nb = b.count_at_least(threshold);
    const Rect overlap = intersect(a.window(), b.window());
    std::int64_t inter = 0;
    for (int y = overlap.y; y < overlap.bottom(); ++y) {
        for (int x = overlap.x; x < overlap.right(); ++x) {
            if (a.at(x, y) >= threshold && b.at(x, y) >= threshold) ++inter;
        }
    }
    const std::int64_t uni = na + nb - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

SoftMask remap_to_global(const SoftMask& mask, int origin_x, int origin_y, int zoom, int image_width,
                         int image_height) {
    if (zoom < 1) throw Error(ErrorCode::InvalidArgument, "zoom must be >= 1");
    const Rect& src = mask.window();
    const int x0 = floor_div(src.x, zoom);
    const int y0 = floor_div(src.y, zoom);
    const int x1 = floor_div(src.right() + zoom - 1, zoom);
    const int y1 = floor_div(src.bottom() + zoom - 1, zoom);
    const Rect out_window{origin_x + x0, origin_y + y0, x1 - x0, y1 - y0};
    if (!out_window.inside(image_width, image_height)) {
        throw Error(ErrorCode::OutOfBounds, "remapped mask window exceeds image bounds");
    }
    std::vector<double> acc(static_cast<std::size_t>(out_window.area()), 0.0);
    for (int r = 0; r < src.h; ++r) {
        const int oy = floor_div(src.y + r, zoom) - y0;
        for (int c = 0; c < src.w; ++c) {
            const int ox = floor_div(src.x + c, zoom) - x0;
            acc[static_cast<std::size_t>(oy) * out_window.w + ox] += mask.local(c, r);
        }
    }
    const double inv = 1.0 / (static_cast<double>(zoom) * zoom);
    for (double& v : acc) v = std::min(1.0, v * inv);
    return SoftMask(out_window, std::move(acc));
}

}  // namespace crowdseed
