#include "crowdseed/adaseem.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "crowdseed/parallel.hpp"

namespace crowdseed {

void AdaSeemConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ValidationError, msg); };
    if (!(tau > 0.0 && tau < 1.0)) fail("adaseem.tau must satisfy 0 < tau < 1");
    if (s_min < 1 || !std::has_single_bit(static_cast<unsigned>(s_min))) fail("adaseem.s_min must be a power of two");
    if (s_initial < 1 || !std::has_single_bit(static_cast<unsigned>(s_initial))) {
        fail("adaseem.s_initial must be a power of two");
    }
    if (s_min > s_initial) fail("adaseem.s_min must not exceed adaseem.s_initial");
    if (zoom_factor < 1) fail("adaseem.zoom_factor must be >= 1");
    if (!(nms_iou > 0.0 && nms_iou < 1.0)) fail("adaseem.nms_iou must satisfy 0 < nms_iou < 1");
    if (resegment_side < 1) fail("adaseem.resegment_side must be >= 1");
    if (tile_jobs < 1) fail("adaseem.tile_jobs must be >= 1");
}

int tile_zoom(const AdaSeemConfig& cfg, int side) { return std::max(cfg.zoom_factor, cfg.resegment_side / side); }

double uncertain_ratio(const RegionPartition& partition, const Rect& rect) {
    if (rect.empty()) throw Error(ErrorCode::EmptyRect, "uncertain_ratio over an empty rectangle");
    if (!rect.inside(partition.width(), partition.height())) {
        throw Error(ErrorCode::OutOfBounds, "uncertain_ratio rectangle outside image");
    }
    return static_cast<double>(partition.uncertain().count_in(rect)) / static_cast<double>(rect.area());
}

namespace {

struct NmsEntry {
    const PersonInstance* person;
    std::int64_t support;
};

double binarized_iou(const NmsEntry& a, const NmsEntry& b) {
    const Rect overlap = intersect(a.person->mask.window(), b.person->mask.window());
    if (overlap.empty()) return 0.0;
    std::int64_t inter = 0;
    for (int y = overlap.y; y < overlap.bottom(); ++y) {
        for (int x = overlap.x; x < overlap.right(); ++x) {
            if (a.person->mask.at(x, y) >= kBinarizeThreshold && b.person->mask.at(x, y) >= kBinarizeThreshold) {
                ++inter;
            }
        }
    }
    const std::int64_t uni = a.support + b.support - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<PersonInstance> greedy_nms(const std::vector<NmsEntry>& ordered, double iou_thresh) {
    std::vector<const NmsEntry*> kept;
    for (const auto& cand : ordered) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const NmsEntry* k) {
            return binarized_iou(*k, cand) >= iou_thresh;
        });
        if (!suppressed) kept.push_back(&cand);
    }
    std::vector<PersonInstance> out;
    out.reserve(kept.size());
    for (const auto* k : kept) out.push_back(*k->person);
    return out;
}

std::vector<NmsEntry> entries_by_score(const std::vector<PersonInstance>& persons) {
    std::vector<NmsEntry> v;
    v.reserve(persons.size());
    for (const auto& p : persons) v.push_back({&p, p.mask.count_at_least(kBinarizeThreshold)});
    std::stable_sort(v.begin(), v.end(),
                     [](const NmsEntry& a, const NmsEntry& b) { return a.person->score > b.person->score; });
    return v;
}

}  // namespace

std::vector<PersonInstance> nms_merge(const std::vector<PersonInstance>& existing,
                                      const std::vector<PersonInstance>& incoming, double iou_thresh) {
    std::vector<PersonInstance> all;
    all.reserve(existing.size() + incoming.size());
    all.insert(all.end(), existing.begin(), existing.end());
    all.insert(all.end(), incoming.begin(), incoming.end());
    return greedy_nms(entries_by_score(all), iou_thresh);
}

std::vector<PersonInstance> nms_merge_keep_existing(const std::vector<PersonInstance>& existing,
                                                    const std::vector<PersonInstance>& incoming,
                                                    double iou_thresh) {
    std::vector<NmsEntry> ordered;
    ordered.reserve(existing.size() + incoming.size());
    for (const auto& p : existing) ordered.push_back({&p, p.mask.count_at_least(kBinarizeThreshold)});
    auto rest = entries_by_score(incoming);
    ordered.insert(ordered.end(), rest.begin(), rest.end());
    // Existing instances never suppress each other here.
    std::vector<const NmsEntry*> kept;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const auto& cand = ordered[i];
        const bool suppressed = i >= existing.size() && std::any_of(kept.begin(), kept.end(), [&](const NmsEntry* k) {
                                    return binarized_iou(*k, cand) >= iou_thresh;
                                });
        if (!suppressed) kept.push_back(&cand);
    }
    std::vector<PersonInstance> out;
    out.reserve(kept.size());
    for (const auto* k : kept) out.push_back(*k->person);
    return out;
}

namespace {

struct TileResult {
    std::vector<PersonInstance> persons;
    BinaryMask other;  // binarized non-person coverage in image coordinates
};

void mark_binarized(const SoftMask& mask, BinaryMask& target) {
    const Rect& w = mask.window();
    for (int r = 0; r < w.h; ++r) {
        for (int c = 0; c < w.w; ++c) {
            if (mask.local(c, r) >= kBinarizeThreshold) target.set(w.x + c, w.y + r);
        }
    }
}

TileResult segment_tile(const RasterImage& image, Segmenter& segmenter, const Rect& tile, int zoom,
                        const std::string& image_id) {
    SegmentRequest req;
    req.image = image.crop(tile).resize_bilinear(tile.w * zoom, tile.h * zoom);
    req.context = RequestContext{image_id, tile};
    auto resp = sanitize_response(segmenter.segment(req), req.image.width(), req.image.height());

    TileResult out{{}, BinaryMask(image.width(), image.height())};
    for (const auto& seg : resp.segments) {
        SoftMask global = remap_to_global(seg.mask, tile.x, tile.y, zoom, image.width(), image.height());
        if (seg.label == kPersonLabel) {
            if (global.count_at_least(kBinarizeThreshold) == 0) continue;
            out.persons.push_back(PersonInstance{std::move(global), seg.score, std::nullopt});
        } else {
            mark_binarized(global, out.other);
        }
    }
    return out;
}

RegionPartition merge_round(const RegionPartition& current, std::vector<TileResult> results, double nms_iou) {
    const int width = current.width();
    const int height = current.height();
    std::vector<PersonInstance> incoming;
    BinaryMask new_other(width, height);
    for (auto& r : results) {
        for (auto& p : r.persons) incoming.push_back(std::move(p));
        for (std::size_t i = 0; i < new_other.size(); ++i) {
            if (r.other.get_index(i)) new_other.set_index(i, true);
        }
    }
    auto persons = nms_merge(current.persons(), incoming, nms_iou);

    BinaryMask person_px(width, height);
    for (const auto& p : persons) mark_binarized(p.mask, person_px);

    BinaryMask background = current.background();
    BinaryMask uncertain = current.uncertain();
    for (std::size_t i = 0; i < uncertain.size(); ++i) {
        const bool was_uncertain = uncertain.get_index(i);
        // zoomed background verdicts only claim pixels that are still unresolved
        const bool bg_claim = was_uncertain && new_other.get_index(i);
        const bool is_person = person_px.get_index(i);
        background.set_index(i, (background.get_index(i) || bg_claim) && !is_person);
        uncertain.set_index(i, was_uncertain && !bg_claim && !is_person);
    }
    return RegionPartition(width, height, std::move(persons), std::move(background), std::move(uncertain));
}

}  // namespace

RegionPartition single_pass_segment(const RasterImage& image, Segmenter& segmenter, const std::string& image_id) {
    SegmentRequest req;
    req.image = image;
    req.context = RequestContext{image_id, Rect{0, 0, image.width(), image.height()}};
    auto resp = sanitize_response(segmenter.segment(req), image.width(), image.height());
    return classify_partition(resp, image.width(), image.height());
}

RegionPartition adaptive_segment(const RasterImage& image, Segmenter& segmenter, const AdaSeemConfig& cfg,
                                 const std::string& image_id, AdaSeemTrace* trace) {
    cfg.validate();
    if (image.empty()) throw Error(ErrorCode::InvalidArgument, "adaptive_segment on an empty image");
    if (std::min(image.width(), image.height()) < cfg.s_min) {
        throw Error(ErrorCode::InvalidArgument, "image side smaller than s_min");
    }
    AdaSeemTrace local;
    AdaSeemTrace& tr = trace ? *trace : local;
    tr = AdaSeemTrace{};

    RegionPartition partition = single_pass_segment(image, segmenter, image_id);
    tr.segment_calls = 1;
    tr.uncertain_pixels.push_back(partition.uncertain().count());
    tr.persons_after_round.push_back(partition.persons().size());

    const Rect full{0, 0, image.width(), image.height()};
    for (int s = cfg.s_initial; uncertain_ratio(partition, full) > cfg.tau && s >= cfg.s_min; s /= 2) {
        std::vector<Rect> tiles;
        for (int y = 0; y < image.height(); y += s) {
            for (int x = 0; x < image.width(); x += s) {
                const Rect tile = intersect(Rect{x, y, s, s}, full);
                if (uncertain_ratio(partition, tile) > cfg.tau) tiles.push_back(tile);
            }
        }
        const int zoom = tile_zoom(cfg, s);
        std::vector<TileResult> results(tiles.size());
        parallel_for(tiles.size(), cfg.tile_jobs, [&](std::size_t i) {
            results[i] = segment_tile(image, segmenter, tiles[i], zoom, image_id);
        });
        partition = merge_round(partition, std::move(results), cfg.nms_iou);

        tr.segment_calls += static_cast<int>(tiles.size());
        tr.rounds += 1;
        tr.tiles_per_round.push_back(static_cast<int>(tiles.size()));
        tr.uncertain_pixels.push_back(partition.uncertain().count());
        tr.persons_after_round.push_back(partition.persons().size());
    }
    return partition;
}

}  // namespace crowdseed
