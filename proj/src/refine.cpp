#include "crowdseed/refine.hpp"

#include <algorithm>
#include <mutex>

#include "crowdseed/adaseem.hpp"
#include "crowdseed/parallel.hpp"

namespace crowdseed {

void RefineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ValidationError, msg); };
    if (iterations < 0) fail("refine.iterations must be >= 0");
    if (!(peak_threshold > 0.0)) fail("refine.peak_threshold must be > 0");
    if (!(nms_iou > 0.0 && nms_iou < 1.0)) fail("refine.nms_iou must satisfy 0 < nms_iou < 1");
    if (max_in_flight < 1) fail("refine.max_in_flight must be >= 1");
}

PointSet extract_local_maxima(const DensityGrid& density, double threshold) {
    const int w = density.width();
    const int h = density.height();
    const auto at = [&](int x, int y) { return x < 0 || y < 0 || x >= w || y >= h ? 0.0 : density.at(x, y); };
    PointSet out;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = density.at(x, y);
            if (v < threshold) continue;
            bool peak = true;
            for (int dy = -1; dy <= 1 && peak; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if ((dx != 0 || dy != 0) && at(x + dx, y + dy) >= v) {
                        peak = false;
                        break;
                    }
                }
            }
            if (peak) out.push_back({pixel_center(x, y), v});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoredPoint& a, const ScoredPoint& b) { return a.score > b.score; });
    return out;
}

std::uint64_t person_seed(std::uint64_t base, const std::string& image_id, std::size_t index) {
    std::uint64_t h = base ^ 0xA0761D6478BD642FULL;
    for (unsigned char c : image_id) h = (h ^ c) * 0x100000001B3ULL;
    h ^= static_cast<std::uint64_t>(index) * 0x9E3779B97F4A7C15ULL;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ULL;
    return h ^ (h >> 32);
}

std::vector<PersonInstance> localize_missing_heads(std::vector<PersonInstance> persons, const RasterImage& image,
                                                   Segmenter& segmenter, const LocalizerConfig& cfg,
                                                   std::uint64_t seed, const std::string& image_id, int jobs) {
    cfg.validate();
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < persons.size(); ++i) {
        if (!persons[i].head) todo.push_back(i);
    }
    parallel_for(todo.size(), jobs, [&](std::size_t t) {
        const std::size_t i = todo[t];
        persons[i].head = localize_head(persons[i].mask, image, segmenter, cfg, person_seed(seed, image_id, i), image_id);
    });
    return persons;
}

RegionPartition absorb_persons(const RegionPartition& partition, std::vector<PersonInstance> persons) {
    BinaryMask background = partition.background();
    BinaryMask uncertain = partition.uncertain();
    for (const auto& p : persons) {
        const Rect& w = p.mask.window();
        for (int r = 0; r < w.h; ++r) {
            for (int c = 0; c < w.w; ++c) {
                if (p.mask.local(c, r) < kBinarizeThreshold) continue;
                background.set(w.x + c, w.y + r, false);
                uncertain.set(w.x + c, w.y + r, false);
            }
        }
    }
    return RegionPartition(partition.width(), partition.height(), std::move(persons), std::move(background),
                           std::move(uncertain));
}

PseudoLabelSet refine_pseudolabels(const PseudoLabelSet& labels, const DensityGrid& density, const RasterImage& image,
                                   Segmenter& segmenter, const RefineConfig& cfg, const LocalizerConfig& loc,
                                   std::uint64_t seed, RefineStats* stats) {
    cfg.validate();
    const auto& part = labels.partition;
    if (density.width() != part.width() || density.height() != part.height() || image.width() != part.width() ||
        image.height() != part.height()) {
        throw Error(ErrorCode::ShapeMismatch, "labels, density and image must share one size");
    }
    RefineStats local;
    RefineStats& st = stats ? *stats : local;
    st = RefineStats{};

    const PointSet peaks = extract_local_maxima(density, cfg.peak_threshold);
    st.peaks = static_cast<int>(peaks.size());
    std::vector<std::vector<PersonInstance>> found(peaks.size());
    parallel_for(peaks.size(), cfg.max_in_flight, [&](std::size_t i) {
        SegmentRequest req;
        req.image = image;
        req.prompts = std::vector<Point>{peaks[i].pt};
        req.context = RequestContext{labels.image_id, Rect{0, 0, image.width(), image.height()}};
        const auto resp = sanitize_response(segmenter.segment(req), image.width(), image.height());
        for (const auto& seg : resp.segments) {
            if (seg.label == kPersonLabel) found[i].push_back(PersonInstance{seg.mask, seg.score, std::nullopt});
        }
    });
    std::vector<PersonInstance> incoming;
    for (auto& f : found) {
        if (!f.empty()) ++st.prompts_with_person;
        for (auto& p : f) incoming.push_back(std::move(p));
    }
    if (incoming.empty()) return labels;

    const auto deduped = nms_merge({}, incoming, cfg.nms_iou);
    auto merged = nms_merge_keep_existing(part.persons(), deduped, cfg.nms_iou);
    st.new_persons = static_cast<int>(merged.size() - part.persons().size());
    if (st.new_persons == 0) return labels;

    merged = localize_missing_heads(std::move(merged), image, segmenter, loc, seed, labels.image_id,
                                    cfg.max_in_flight);
    return PseudoLabelSet{labels.image_id, absorb_persons(part, std::move(merged))};
}

}  // namespace crowdseed
