#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdseed {

enum class ErrorCode {
    InvalidArgument,
    LengthMismatch,
    OutOfBounds,
    EmptyRect,
    ShapeMismatch,
    ZeroMass,
    ComponentCollapse,
    DegenerateMask,
    NumericalUnderflow,
    BackendUnavailable,
    MalformedResponse,
    PromptFailed,
    PlacementFailure,
    EmptyInput,
    ParseError,
    ValidationError,
    MissingArtifacts,
    Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);
    ErrorCode code() const noexcept { return code_; }
    /// The message without the error-code prefix that what() carries.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

/// Continuous image-plane position. Pixel (col,row) has its center at (col+0.5, row+0.5).
struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

struct ScoredPoint {
    Point pt;
    double score = 1.0;
    bool operator==(const ScoredPoint&) const = default;
};

using PointSet = std::vector<ScoredPoint>;

/// Integer pixel rectangle; covers columns [x, x+w) and rows [y, y+h).
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }
    int bottom() const { return y + h; }
    std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }
    bool empty() const { return w <= 0 || h <= 0; }
    bool contains_pixel(int px, int py) const { return px >= x && px < right() && py >= y && py < bottom(); }
    bool contains(const Point& p) const { return p.x >= x && p.x < right() && p.y >= y && p.y < bottom(); }
    bool inside(int width, int height) const { return x >= 0 && y >= 0 && right() <= width && bottom() <= height; }
    bool operator==(const Rect&) const = default;
};

Rect intersect(const Rect& a, const Rect& b);
Rect bounding_union(const Rect& a, const Rect& b);

class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, int channels);
    RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::span<const std::uint8_t> data() const { return data_; }
    std::span<std::uint8_t> data() { return data_; }

    std::uint8_t at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    /// Luma 0.299R + 0.587G + 0.114B; single-channel images are copied.
    RasterImage to_gray() const;
    RasterImage crop(const Rect& r) const;
    /// Bilinear resampling with pixel-center alignment.
    RasterImage resize_bilinear(int new_width, int new_height) const;

    bool operator==(const RasterImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<std::uint8_t> data_;
};

/// Per-pixel scores in [0,1] over a window in image coordinates.
class SoftMask {
public:
    SoftMask() = default;
    explicit SoftMask(Rect window);
    SoftMask(Rect window, std::vector<double> values);

    const Rect& window() const { return window_; }
    std::span<const double> values() const { return values_; }

    double local(int col, int row) const { return values_[static_cast<std::size_t>(row) * window_.w + col]; }
    void set_local(int col, int row, double v);
    /// Score at image pixel (px,py); 0 outside the window.
    double at(int px, int py) const {
        if (!window_.contains_pixel(px, py)) return 0.0;
        return local(px - window_.x, py - window_.y);
    }

    double sum() const;
    std::int64_t count_at_least(double threshold) const;
    SoftMask binarized(double threshold = 0.5) const;
    /// Tight window around pixels with score >= threshold; empty rect when none.
    Rect support_box(double threshold = 0.5) const;
    /// Copy placed in a window that must contain the current one.
    SoftMask expanded_to(const Rect& bigger) const;

    bool operator==(const SoftMask&) const = default;

private:
    Rect window_;
    std::vector<double> values_;
};

/// Image-sized 0/1 grid.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);

    int width() const { return width_; }
    int height() const { return height_; }
    bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v = true) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    bool get_index(std::size_t i) const { return bits_[i] != 0; }
    void set_index(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
    std::size_t size() const { return bits_.size(); }
    std::int64_t count() const;
    std::int64_t count_in(const Rect& r) const;

    bool operator==(const BinaryMask&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

constexpr double kBinarizeThreshold = 0.5;

struct PersonInstance {
    SoftMask mask;
    double score = 1.0;
    std::optional<Point> head;
    bool operator==(const PersonInstance&) const = default;
};

/// Person instances plus exclusive background/uncertain masks. The constructor
/// enforces: background and uncertain disjoint, no binarized person pixel uncertain.
class RegionPartition {
public:
    RegionPartition() = default;
    RegionPartition(int width, int height, std::vector<PersonInstance> persons, BinaryMask background,
                    BinaryMask uncertain);

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<PersonInstance>& persons() const { return persons_; }
    const BinaryMask& background() const { return background_; }
    const BinaryMask& uncertain() const { return uncertain_; }

    RegionPartition with_persons(std::vector<PersonInstance> persons) const;

    bool operator==(const RegionPartition&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<PersonInstance> persons_;
    BinaryMask background_;
    BinaryMask uncertain_;
};

/// Nonnegative finite density; sum over a region is a count.
class DensityGrid {
public:
    DensityGrid() = default;
    DensityGrid(int width, int height, double fill = 0.0);
    DensityGrid(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    std::span<const double> values() const { return values_; }
    double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int x, int y, double v);
    double sum() const;

    bool operator==(const DensityGrid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Label state of one image as persisted between pipeline stages.
struct PseudoLabelSet {
    std::string image_id;
    RegionPartition partition;
    bool operator==(const PseudoLabelSet&) const = default;
};

/// |A∩B| / |A∪B| over pixels with score >= threshold; 0 when both are empty.
double mask_iou(const SoftMask& a, const SoftMask& b, double threshold = kBinarizeThreshold);

/// Maps a mask produced on a patch upscaled by `zoom` back to image coordinates:
/// zoom×zoom box-filter average, then translation by patch_origin.
SoftMask remap_to_global(const SoftMask& mask, int origin_x, int origin_y, int zoom, int image_width,
                         int image_height);

inline Point pixel_center(int col, int row) { return {col + 0.5, row + 0.5}; }

}  // namespace crowdseed
