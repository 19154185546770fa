#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdseed/core.hpp"
#include "crowdseed/segmenter.hpp"

namespace crowdseed {

struct SceneConfig {
    int width = 512;
    int height = 512;
    int count = 200;
    /// Apparent height at the bottom row, shrinking linearly to h_min at the top row.
    double h_max = 80.0;
    double h_min = 8.0;
    /// When false every person is h_max tall.
    bool ramp = true;
    /// Height density follows h^-size_exponent, so small (far) persons dominate.
    double size_exponent = 1.5;
    /// Largest fraction of either silhouette that may be shared with another person.
    double max_overlap = 0.2;
    int max_attempts = 2000;
    std::uint64_t seed = 7;

    void validate() const;
    bool operator==(const SceneConfig&) const = default;
};

/// Body ellipse plus a head disc of diameter height/4 on top.
struct ScenePerson {
    int id = 0;
    double height = 0.0;
    Point head;
    double head_radius = 0.0;
    Point body_center;
    double body_ax = 0.0;
    double body_ay = 0.0;
    std::uint8_t intensity = 0;

    bool covers(double x, double y) const;
    bool in_head(double x, double y) const;
    /// Pixel bounds of the silhouette, clipped to the image.
    Rect bounds(int width, int height) const;
    /// Bottom of the body.
    double foot_y() const { return body_center.y + body_ay; }

    bool operator==(const ScenePerson&) const = default;
};

/// Person of the given height standing with the body centered at x and feet at foot_y.
/// `aspect` is body half-width over height; `bend` shifts the head sideways by bend*height.
ScenePerson make_person(int id, double x, double foot_y, double height, double aspect, double bend,
                        std::uint8_t intensity);

struct GroundTruthScene {
    std::string id;
    SceneConfig config;
    RasterImage image;
    std::vector<ScenePerson> persons;
    /// Visible person id per pixel, -1 for ground.
    std::vector<std::int32_t> labels;
    std::vector<std::int64_t> visible_area;

    std::int32_t label_at(int x, int y) const { return labels[static_cast<std::size_t>(y) * image.width() + x]; }
    /// Visible silhouette of person `index` as a binary soft mask; empty window when fully hidden.
    SoftMask visible_mask(std::size_t index) const;
    PointSet head_points() const;
};

GroundTruthScene generate_scene(const SceneConfig& cfg, const std::string& id = "scene");

/// Rasterizes persons (far to near) over the seeded ground texture.
GroundTruthScene render_scene(const std::string& id, const SceneConfig& cfg, std::vector<ScenePerson> persons);

/// Single silhouette rasterized over `window`, with pixels inside `occluder` removed.
SoftMask render_silhouette(const ScenePerson& person, const Rect& window, const Rect& occluder = {});

nlohmann::json scene_truth_to_json(const GroundTruthScene& scene);
GroundTruthScene scene_from_truth_json(const nlohmann::json& j);
void save_scene(const GroundTruthScene& scene, const std::string& dir);
GroundTruthScene load_scene_truth(const std::string& truth_path);

/// Fraction of ground-truth persons matched one-to-one by a predicted mask with IoU >= iou.
double mask_recall(const std::vector<PersonInstance>& predicted, const GroundTruthScene& scene, double iou = 0.5);

struct SimSegmenterConfig {
    double h50 = 24.0;
    double slope = 4.0;
    /// Boundary erosion/dilation amplitude in request pixels.
    double jitter = 1.0;
    bool prompt_override = true;
    std::uint64_t seed = 0;
    /// Undetected persons leave their whole clutter cell (request pixels) unlabeled.
    int clutter_cell = 32;
    /// Neighbouring cells (Chebyshev distance) that an undetected person also leaves unlabeled.
    int clutter_halo = 1;
    /// A person counts as in view when this share of its visible pixels lies inside the view.
    double visible_fraction = 0.5;

    void validate() const;
    bool operator==(const SimSegmenterConfig&) const = default;
};

double detection_probability(double apparent_height, const SimSegmenterConfig& cfg);

/// Answers requests about registered scenes using the request context (scene id and
/// view rectangle). Unknown scenes are treated as empty ground.
class SimulatedSegmenter : public Segmenter {
public:
    explicit SimulatedSegmenter(SimSegmenterConfig cfg = {});

    void add_scene(std::shared_ptr<const GroundTruthScene> scene);
    SegmentResponse segment(const SegmentRequest& request) override;
    std::size_t calls() const;

private:
    std::shared_ptr<const GroundTruthScene> find(const std::string& id) const;

    SimSegmenterConfig cfg_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const GroundTruthScene>> scenes_;
    std::size_t calls_ = 0;
};

}  // namespace crowdseed
