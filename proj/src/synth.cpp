#include "crowdseed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>

#include "crowdseed/image_io.hpp"
#include "crowdseed/label_io.hpp"

namespace crowdseed {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct Hasher {
    std::uint64_t state;
    explicit Hasher(std::uint64_t seed) : state(splitmix(seed)) {}
    Hasher& add(std::uint64_t v) {
        state = splitmix(state ^ splitmix(v));
        return *this;
    }
    Hasher& add(std::int64_t v) { return add(static_cast<std::uint64_t>(v)); }
    Hasher& add(int v) { return add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
    Hasher& add(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        return add(bits);
    }
    double uniform() const { return static_cast<double>(state >> 11) * 0x1.0p-53; }
};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

RasterImage ground_texture(int width, int height, std::uint64_t seed) {
    constexpr int kCell = 24;
    const int gw = width / kCell + 2;
    const int gh = height / kCell + 2;
    std::mt19937_64 rng(splitmix(seed ^ 0x7E47u));
    std::uniform_real_distribution<double> lattice(115.0, 165.0);
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    for (auto& g : grid) g = lattice(rng);
    std::uniform_real_distribution<double> grain(-6.0, 6.0);
    RasterImage img(width, height, 1);
    for (int y = 0; y < height; ++y) {
        const double fy = static_cast<double>(y) / kCell;
        const int y0 = static_cast<int>(fy);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = static_cast<double>(x) / kCell;
            const int x0 = static_cast<int>(fx);
            const double tx = fx - x0;
            const auto g = [&](int gx, int gy) { return grid[static_cast<std::size_t>(gy) * gw + gx]; };
            const double v = (1 - ty) * ((1 - tx) * g(x0, y0) + tx * g(x0 + 1, y0)) +
                             ty * ((1 - tx) * g(x0, y0 + 1) + tx * g(x0 + 1, y0 + 1));
            img.at(x, y) = clamp_byte(v + grain(rng));
        }
    }
    return img;
}

}  // namespace

void SceneConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ValidationError, msg); };
    if (width < 1 || height < 1) fail("scene.width and scene.height must be >= 1");
    if (count < 0) fail("scene.count must be >= 0");
    if (!(h_min >= 4.0)) fail("scene.h_min must be >= 4");
    if (!(h_max >= h_min)) fail("scene.h_max must be >= scene.h_min");
    if (!(max_overlap >= 0.0 && max_overlap <= 1.0)) fail("scene.max_overlap must lie in [0, 1]");
    if (max_attempts < 1) fail("scene.max_attempts must be >= 1");
}

void SimSegmenterConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ValidationError, msg); };
    if (!(h50 > 0.0)) fail("sim.h50 must be > 0");
    if (!(slope > 0.0)) fail("sim.slope must be > 0");
    if (!(jitter >= 0.0)) fail("sim.jitter must be >= 0");
    if (clutter_cell < 1) fail("sim.clutter_cell must be >= 1");
    if (clutter_halo < 0) fail("sim.clutter_halo must be >= 0");
    if (!(visible_fraction > 0.0 && visible_fraction <= 1.0)) fail("sim.visible_fraction must lie in (0, 1]");
}

bool ScenePerson::in_head(double x, double y) const {
    const double dx = x - head.x;
    const double dy = y - head.y;
    return dx * dx + dy * dy <= head_radius * head_radius;
}

bool ScenePerson::covers(double x, double y) const {
    if (in_head(x, y)) return true;
    const double dx = (x - body_center.x) / body_ax;
    const double dy = (y - body_center.y) / body_ay;
    return dx * dx + dy * dy <= 1.0;
}

Rect ScenePerson::bounds(int width, int height) const {
    const double x0 = std::min(head.x - head_radius, body_center.x - body_ax);
    const double x1 = std::max(head.x + head_radius, body_center.x + body_ax);
    const double y0 = head.y - head_radius;
    const double y1 = body_center.y + body_ay;
    const int ix0 = static_cast<int>(std::floor(x0));
    const int iy0 = static_cast<int>(std::floor(y0));
    const int ix1 = static_cast<int>(std::ceil(x1));
    const int iy1 = static_cast<int>(std::ceil(y1));
    return intersect(Rect{ix0, iy0, ix1 - ix0 + 1, iy1 - iy0 + 1}, Rect{0, 0, width, height});
}

ScenePerson make_person(int id, double x, double foot_y, double height, double aspect, double bend,
                        std::uint8_t intensity) {
    ScenePerson p;
    p.id = id;
    p.height = height;
    const double top = foot_y - height;
    p.head_radius = height / 8.0;
    p.head = {x + bend * height, top + height / 8.0};
    p.body_ay = 0.36 * height;
    p.body_ax = std::max(aspect * height, 1.0);
    p.body_center = {x, foot_y - p.body_ay};
    p.intensity = intensity;
    return p;
}

SoftMask GroundTruthScene::visible_mask(std::size_t index) const {
    const auto& p = persons.at(index);
    const Rect b = p.bounds(image.width(), image.height());
    SoftMask m(b);
    for (int r = 0; r < b.h; ++r) {
        for (int c = 0; c < b.w; ++c) {
            if (label_at(b.x + c, b.y + r) == p.id) m.set_local(c, r, 1.0);
        }
    }
    const Rect tight = m.support_box();
    if (tight.empty()) return SoftMask(Rect{b.x, b.y, 0, 0});
    SoftMask out(tight);
    for (int r = 0; r < tight.h; ++r) {
        for (int c = 0; c < tight.w; ++c) out.set_local(c, r, m.at(tight.x + c, tight.y + r));
    }
    return out;
}

PointSet GroundTruthScene::head_points() const {
    PointSet pts;
    pts.reserve(persons.size());
    for (const auto& p : persons) pts.push_back({p.head, 1.0});
    return pts;
}

GroundTruthScene render_scene(const std::string& id, const SceneConfig& cfg, std::vector<ScenePerson> persons) {
    GroundTruthScene scene;
    scene.id = id;
    scene.config = cfg;
    scene.image = ground_texture(cfg.width, cfg.height, cfg.seed);
    scene.persons = std::move(persons);
    scene.labels.assign(static_cast<std::size_t>(cfg.width) * cfg.height, -1);

    std::vector<std::size_t> order(scene.persons.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scene.persons[a].foot_y() < scene.persons[b].foot_y();
    });
    std::mt19937_64 grain_rng(splitmix(cfg.seed ^ 0x5EED5u));
    std::uniform_real_distribution<double> grain(-4.0, 4.0);
    for (std::size_t i : order) {
        const auto& p = scene.persons[i];
        const Rect b = p.bounds(cfg.width, cfg.height);
        for (int y = b.y; y < b.bottom(); ++y) {
            for (int x = b.x; x < b.right(); ++x) {
                const Point c = pixel_center(x, y);
                if (!p.covers(c.x, c.y)) continue;
                scene.labels[static_cast<std::size_t>(y) * cfg.width + x] = p.id;
                scene.image.at(x, y) = clamp_byte(p.intensity + grain(grain_rng));
            }
        }
    }
    std::map<std::int32_t, std::size_t> index_of;
    for (std::size_t i = 0; i < scene.persons.size(); ++i) index_of[scene.persons[i].id] = i;
    scene.visible_area.assign(scene.persons.size(), 0);
    for (auto l : scene.labels) {
        if (l >= 0) ++scene.visible_area[index_of.at(l)];
    }
    return scene;
}

GroundTruthScene generate_scene(const SceneConfig& cfg, const std::string& id) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double e = cfg.size_exponent;
    const auto sample_height = [&] {
        if (!cfg.ramp || cfg.h_max == cfg.h_min) return cfg.h_max;
        const double u = unit(rng);
        if (std::abs(e - 1.0) < 1e-12) return cfg.h_min * std::pow(cfg.h_max / cfg.h_min, u);
        const double a = std::pow(cfg.h_min, 1.0 - e);
        const double b = std::pow(cfg.h_max, 1.0 - e);
        return std::pow(a + u * (b - a), 1.0 / (1.0 - e));
    };
    // occupancy: how many silhouettes cover each pixel, and the first one that did
    std::vector<std::uint16_t> cover(static_cast<std::size_t>(cfg.width) * cfg.height, 0);
    std::vector<std::int32_t> first(cover.size(), -1);
    std::vector<std::int64_t> area;
    std::vector<ScenePerson> persons;

    for (int id = 0; id < cfg.count; ++id) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
            const double h = sample_height();
            double foot;
            if (cfg.ramp && cfg.h_max > cfg.h_min) {
                foot = (h - cfg.h_min) / (cfg.h_max - cfg.h_min) * (cfg.height - 1);
            } else {
                foot = h + unit(rng) * (cfg.height - h);
            }
            const double aspect = 0.10 + 0.05 * unit(rng);
            const double bend = -0.06 + 0.12 * unit(rng);
            const bool bright = unit(rng) < 0.3;
            const auto tone = static_cast<std::uint8_t>(bright ? 185 + 55 * unit(rng) : 20 + 55 * unit(rng));
            const double half_w = std::max(aspect * h, h / 8.0 + std::abs(bend) * h) + 1.0;
            if (cfg.width <= 2 * half_w) continue;
            const double x = half_w + unit(rng) * (cfg.width - 2 * half_w);
            if (foot - h < 0.0 || foot > cfg.height) continue;
            ScenePerson cand = make_person(id, x, foot, h, aspect, bend, tone);

            const Rect b = cand.bounds(cfg.width, cfg.height);
            std::vector<std::size_t> pix;
            for (int y = b.y; y < b.bottom(); ++y) {
                for (int xx = b.x; xx < b.right(); ++xx) {
                    const Point c = pixel_center(xx, y);
                    if (cand.covers(c.x, c.y)) pix.push_back(static_cast<std::size_t>(y) * cfg.width + xx);
                }
            }
            if (pix.empty()) continue;
            std::int64_t shared = 0;
            std::map<std::int32_t, std::int64_t> per_owner;
            for (auto i : pix) {
                if (cover[i] > 0) {
                    ++shared;
                    ++per_owner[first[i]];
                }
            }
            bool ok = static_cast<double>(shared) <= cfg.max_overlap * static_cast<double>(pix.size());
            for (const auto& [owner, n] : per_owner) {
                ok = ok && static_cast<double>(n) <= cfg.max_overlap * static_cast<double>(area[owner]);
            }
            if (!ok) continue;
            for (auto i : pix) {
                if (cover[i]++ == 0) first[i] = id;
            }
            area.push_back(static_cast<std::int64_t>(pix.size()));
            persons.push_back(cand);
            placed = true;
        }
        if (!placed) {
            throw Error(ErrorCode::PlacementFailure,
                        "could not place person " + std::to_string(id) + " after " +
                            std::to_string(cfg.max_attempts) + " attempts");
        }
    }
    return render_scene(id, cfg, std::move(persons));
}

SoftMask render_silhouette(const ScenePerson& person, const Rect& window, const Rect& occluder) {
    SoftMask m(window);
    for (int r = 0; r < window.h; ++r) {
        for (int c = 0; c < window.w; ++c) {
            const int x = window.x + c;
            const int y = window.y + r;
            if (occluder.contains_pixel(x, y)) continue;
            const Point p = pixel_center(x, y);
            if (person.covers(p.x, p.y)) m.set_local(c, r, 1.0);
        }
    }
    return m;
}

nlohmann::json scene_truth_to_json(const GroundTruthScene& scene) {
    const auto& c = scene.config;
    nlohmann::json persons = nlohmann::json::array();
    for (const auto& p : scene.persons) {
        persons.push_back({{"id", p.id},
                           {"height", p.height},
                           {"head", {p.head.x, p.head.y}},
                           {"head_radius", p.head_radius},
                           {"body", {{"cx", p.body_center.x}, {"cy", p.body_center.y}, {"ax", p.body_ax}, {"ay", p.body_ay}}},
                           {"intensity", p.intensity}});
    }
    return {{"version", 1},
            {"image", {{"id", scene.id}, {"width", c.width}, {"height", c.height}}},
            {"config",
             {{"count", c.count},
              {"h_max", c.h_max},
              {"h_min", c.h_min},
              {"ramp", c.ramp},
              {"size_exponent", c.size_exponent},
              {"max_overlap", c.max_overlap},
              {"max_attempts", c.max_attempts},
              {"seed", c.seed}}},
            {"persons", persons}};
}

GroundTruthScene scene_from_truth_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != 1) throw Error(ErrorCode::ParseError, "unsupported truth file version");
        SceneConfig cfg;
        const auto& img = j.at("image");
        cfg.width = img.at("width").get<int>();
        cfg.height = img.at("height").get<int>();
        const auto& c = j.at("config");
        cfg.count = c.at("count").get<int>();
        cfg.h_max = c.at("h_max").get<double>();
        cfg.h_min = c.at("h_min").get<double>();
        cfg.ramp = c.at("ramp").get<bool>();
        cfg.size_exponent = c.at("size_exponent").get<double>();
        cfg.max_overlap = c.at("max_overlap").get<double>();
        cfg.max_attempts = c.at("max_attempts").get<int>();
        cfg.seed = c.at("seed").get<std::uint64_t>();
        std::vector<ScenePerson> persons;
        for (const auto& pj : j.at("persons")) {
            ScenePerson p;
            p.id = pj.at("id").get<int>();
            p.height = pj.at("height").get<double>();
            p.head = {pj.at("head").at(0).get<double>(), pj.at("head").at(1).get<double>()};
            p.head_radius = pj.at("head_radius").get<double>();
            const auto& b = pj.at("body");
            p.body_center = {b.at("cx").get<double>(), b.at("cy").get<double>()};
            p.body_ax = b.at("ax").get<double>();
            p.body_ay = b.at("ay").get<double>();
            p.intensity = pj.at("intensity").get<std::uint8_t>();
            persons.push_back(p);
        }
        return render_scene(img.at("id").get<std::string>(), cfg, std::move(persons));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("truth file: ") + e.what());
    }
}

void save_scene(const GroundTruthScene& scene, const std::string& dir) {
    const std::filesystem::path root(dir);
    write_image(scene.image, root / (scene.id + ".png"));
    write_text_file(root / (scene.id + ".truth.json"), dump_json(scene_truth_to_json(scene)));
}

GroundTruthScene load_scene_truth(const std::string& truth_path) {
    const auto bytes = read_file_bytes(truth_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, truth_path + ": " + e.what());
    }
    return scene_from_truth_json(j);
}

double mask_recall(const std::vector<PersonInstance>& predicted, const GroundTruthScene& scene, double iou) {
    struct Cand {
        double iou;
        std::size_t pred;
        std::size_t truth;
    };
    std::vector<SoftMask> truth_masks;
    std::vector<std::size_t> truth_index;
    for (std::size_t i = 0; i < scene.persons.size(); ++i) {
        if (scene.visible_area[i] == 0) continue;
        truth_masks.push_back(scene.visible_mask(i));
        truth_index.push_back(i);
    }
    if (truth_masks.empty()) return 1.0;
    std::vector<Cand> cands;
    for (std::size_t p = 0; p < predicted.size(); ++p) {
        for (std::size_t t = 0; t < truth_masks.size(); ++t) {
            if (intersect(predicted[p].mask.window(), truth_masks[t].window()).empty()) continue;
            const double v = mask_iou(predicted[p].mask, truth_masks[t]);
            if (v >= iou) cands.push_back({v, p, t});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
    std::vector<bool> pu(predicted.size(), false), tu(truth_masks.size(), false);
    std::size_t matched = 0;
    for (const auto& c : cands) {
        if (pu[c.pred] || tu[c.truth]) continue;
        pu[c.pred] = tu[c.truth] = true;
        ++matched;
    }
    return static_cast<double>(matched) / static_cast<double>(truth_masks.size());
}

double detection_probability(double apparent_height, const SimSegmenterConfig& cfg) {
    return 1.0 / (1.0 + std::exp(-(apparent_height - cfg.h50) / cfg.slope));
}

SimulatedSegmenter::SimulatedSegmenter(SimSegmenterConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void SimulatedSegmenter::add_scene(std::shared_ptr<const GroundTruthScene> scene) {
    std::lock_guard lock(mutex_);
    scenes_[scene->id] = std::move(scene);
}

std::size_t SimulatedSegmenter::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::shared_ptr<const GroundTruthScene> SimulatedSegmenter::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = scenes_.find(id);
    return it == scenes_.end() ? nullptr : it->second;
}

namespace {

/// Request-pixel view of a scene.
struct ViewMap {
    const GroundTruthScene* scene;
    Rect view;
    int width;
    int height;
    double sx;
    double sy;
    std::vector<std::int32_t> labels;  // person id under each request pixel

    ViewMap(const GroundTruthScene& s, const Rect& v, int w, int h)
        : scene(&s), view(v), width(w), height(h), sx(static_cast<double>(w) / v.w), sy(static_cast<double>(h) / v.h) {
        labels.resize(static_cast<std::size_t>(w) * h);
        std::vector<int> gx(w);
        for (int c = 0; c < w; ++c) gx[c] = global_x(c);
        for (int r = 0; r < h; ++r) {
            const int gy = global_y(r);
            for (int c = 0; c < w; ++c) labels[static_cast<std::size_t>(r) * w + c] = s.label_at(gx[c], gy);
        }
    }
    int global_x(int c) const { return std::clamp(view.x + static_cast<int>(std::floor((c + 0.5) / sx)), view.x, view.right() - 1); }
    int global_y(int r) const { return std::clamp(view.y + static_cast<int>(std::floor((r + 0.5) / sy)), view.y, view.bottom() - 1); }
    std::int32_t label(int c, int r) const { return labels[static_cast<std::size_t>(r) * width + c]; }

    /// Person bounds in request pixels, clipped to the request.
    Rect request_bounds(const Rect& b) const {
        const int c0 = static_cast<int>(std::floor((b.x - view.x) * sx));
        const int r0 = static_cast<int>(std::floor((b.y - view.y) * sy));
        const int c1 = static_cast<int>(std::ceil((b.right() - view.x) * sx));
        const int r1 = static_cast<int>(std::ceil((b.bottom() - view.y) * sy));
        return intersect(Rect{c0, r0, c1 - c0, r1 - r0}, Rect{0, 0, width, height});
    }
};

std::vector<std::uint8_t> morph(const std::vector<std::uint8_t>& m, int w, int h, bool dilate) {
    std::vector<std::uint8_t> out(m.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto get = [&](int cc, int rr) -> std::uint8_t {
                if (cc < 0 || rr < 0 || cc >= w || rr >= h) return 0;
                return m[static_cast<std::size_t>(rr) * w + cc];
            };
            const std::uint8_t self = get(c, r);
            const int n = get(c - 1, r) + get(c + 1, r) + get(c, r - 1) + get(c, r + 1);
            out[static_cast<std::size_t>(r) * w + c] = dilate ? (self || n > 0) : (self && n == 4);
        }
    }
    return out;
}

double binary_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Jittered soft mask of one person in request coordinates; empty window when nothing is visible.
SoftMask person_mask(const ViewMap& vm, const ScenePerson& p, double jitter, const Hasher& key) {
    const int amp = static_cast<int>(std::lround(jitter));
    const Rect pb = vm.request_bounds(p.bounds(vm.scene->image.width(), vm.scene->image.height()));
    const Rect box = intersect(Rect{pb.x - amp - 1, pb.y - amp - 1, pb.w + 2 * amp + 2, pb.h + 2 * amp + 2},
                               Rect{0, 0, vm.width, vm.height});
    if (box.empty()) return SoftMask(Rect{});
    const int w = box.w;
    const int h = box.h;
    std::vector<std::uint8_t> base(static_cast<std::size_t>(w) * h, 0);
    bool any = false;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const bool on = vm.label(box.x + c, box.y + r) == p.id;
            base[static_cast<std::size_t>(r) * w + c] = on;
            any = any || on;
        }
    }
    if (!any) return SoftMask(Rect{});

    std::vector<std::uint8_t> shape = base;
    const int mode = static_cast<int>(Hasher(key).add(std::uint64_t{0x717}).state % 3);
    if (amp > 0 && mode != 1) {
        std::vector<std::uint8_t> moved = base;
        for (int i = 0; i < amp; ++i) moved = morph(moved, w, h, mode == 2);
        if (binary_iou(moved, base) >= 0.7) shape = std::move(moved);
    }
    const auto on = [&](int c, int r) {
        return c >= 0 && r >= 0 && c < w && r < h && shape[static_cast<std::size_t>(r) * w + c];
    };
    SoftMask full(box);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int n = on(c - 1, r) + on(c + 1, r) + on(c, r - 1) + on(c, r + 1);
            if (on(c, r)) {
                full.set_local(c, r, n == 4 ? 1.0 : 0.75);
            } else if (n > 0) {
                full.set_local(c, r, 0.25);
            }
        }
    }
    const Rect tight = full.support_box(0.25);
    if (full.count_at_least(kBinarizeThreshold) == 0) return SoftMask(Rect{});
    SoftMask out(tight);
    for (int r = 0; r < tight.h; ++r) {
        for (int c = 0; c < tight.w; ++c) out.set_local(c, r, full.at(tight.x + c, tight.y + r));
    }
    return out;
}

}  // namespace

SegmentResponse SimulatedSegmenter::segment(const SegmentRequest& request) {
    validate_request(request);
    {
        std::lock_guard lock(mutex_);
        ++calls_;
    }
    const int rw = request.image.width();
    const int rh = request.image.height();
    SegmentResponse resp;
    const auto scene = find(request.context.image_id);
    if (!scene) {
        if (!request.prompts) resp.segments.push_back({"background", 1.0, SoftMask(Rect{0, 0, rw, rh}, std::vector<double>(static_cast<std::size_t>(rw) * rh, 1.0))});
        return resp;
    }
    const Rect full{0, 0, scene->image.width(), scene->image.height()};
    const Rect view = request.context.view.value_or(full);
    if (view.empty() || !view.inside(full.w, full.h)) {
        throw Error(ErrorCode::InvalidArgument, "request view lies outside the scene");
    }
    const ViewMap vm(*scene, view, rw, rh);
    const Hasher geometry = Hasher(cfg_.seed)
                                .add(fnv1a(scene->id))
                                .add(view.x)
                                .add(view.y)
                                .add(view.w)
                                .add(view.h)
                                .add(rw)
                                .add(rh);
    std::map<std::int32_t, std::size_t> index_of;
    for (std::size_t i = 0; i < scene->persons.size(); ++i) index_of[scene->persons[i].id] = i;

    if (request.prompts) {
        std::vector<std::int32_t> seen;
        for (const auto& pt : *request.prompts) {
            const int c = std::clamp(static_cast<int>(std::floor(pt.x)), 0, rw - 1);
            const int r = std::clamp(static_cast<int>(std::floor(pt.y)), 0, rh - 1);
            const std::int32_t id = vm.label(c, r);
            if (id < 0 || std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
            seen.push_back(id);
            const auto& p = scene->persons[index_of.at(id)];
            const double prob = detection_probability(p.height * vm.sy, cfg_);
            const Hasher key = Hasher(geometry.state).add(id).add(pt.x).add(pt.y);
            if (!cfg_.prompt_override && key.uniform() >= prob) continue;
            SoftMask m = person_mask(vm, p, cfg_.jitter, key);
            if (m.window().empty()) continue;
            resp.segments.push_back({kPersonLabel, std::max(prob, 0.5), std::move(m)});
        }
        return resp;
    }

    const int cell = cfg_.clutter_cell;
    const int cells_x = (rw + cell - 1) / cell;
    const int cells_y = (rh + cell - 1) / cell;
    std::vector<std::uint8_t> seeds(static_cast<std::size_t>(cells_x) * cells_y, 0);

    for (std::size_t i = 0; i < scene->persons.size(); ++i) {
        const auto& p = scene->persons[i];
        if (scene->visible_area[i] == 0) continue;
        const Rect b = intersect(p.bounds(full.w, full.h), view);
        std::int64_t inside = 0;
        for (int y = b.y; y < b.bottom(); ++y) {
            for (int x = b.x; x < b.right(); ++x) inside += scene->label_at(x, y) == p.id;
        }
        if (inside == 0) continue;
        const double frac = static_cast<double>(inside) / static_cast<double>(scene->visible_area[i]);
        const double prob = detection_probability(p.height * vm.sy, cfg_);
        const Hasher key = Hasher(geometry.state).add(p.id);
        const bool detected = frac >= cfg_.visible_fraction && key.uniform() < prob;
        if (detected) {
            SoftMask m = person_mask(vm, p, cfg_.jitter, key);
            if (!m.window().empty()) {
                resp.segments.push_back({kPersonLabel, std::clamp(prob * frac, 0.01, 1.0), std::move(m)});
                continue;
            }
        }
        const Rect rb = vm.request_bounds(p.bounds(full.w, full.h));
        for (int r = rb.y; r < rb.bottom(); ++r) {
            for (int c = rb.x; c < rb.right(); ++c) {
                if (vm.label(c, r) == p.id) seeds[static_cast<std::size_t>(r / cell) * cells_x + c / cell] = 1;
            }
        }
    }

    std::vector<std::uint8_t> clutter(seeds.size(), 0);
    const int halo = cfg_.clutter_halo;
    for (int cy = 0; cy < cells_y; ++cy) {
        for (int cx = 0; cx < cells_x; ++cx) {
            if (!seeds[static_cast<std::size_t>(cy) * cells_x + cx]) continue;
            for (int ny = std::max(0, cy - halo); ny <= std::min(cells_y - 1, cy + halo); ++ny) {
                for (int nx = std::max(0, cx - halo); nx <= std::min(cells_x - 1, cx + halo); ++nx) {
                    clutter[static_cast<std::size_t>(ny) * cells_x + nx] = 1;
                }
            }
        }
    }

    std::vector<double> bg(static_cast<std::size_t>(rw) * rh, 0.0);
    bool any_bg = false;
    for (int r = 0; r < rh; ++r) {
        for (int c = 0; c < rw; ++c) {
            if (vm.label(c, r) >= 0 || clutter[static_cast<std::size_t>(r / cell) * cells_x + c / cell]) continue;
            bg[static_cast<std::size_t>(r) * rw + c] = 1.0;
            any_bg = true;
        }
    }
    if (any_bg) resp.segments.push_back({"background", 1.0, SoftMask(Rect{0, 0, rw, rh}, std::move(bg))});
    return resp;
}

}  // namespace crowdseed
