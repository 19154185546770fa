#include "crowdseed/segmenter.hpp"

#include <cmath>
#include <thread>

namespace crowdseed {

void validate_request(const SegmentRequest& request) {
    if (request.image.empty()) throw Error(ErrorCode::InvalidArgument, "segment request with empty image");
    if (request.prompts) {
        for (const auto& p : *request.prompts) {
            if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < request.image.width() && p.y < request.image.height())) {
                throw Error(ErrorCode::OutOfBounds, "prompt point outside request image");
            }
        }
    }
}

SegmentResponse sanitize_response(SegmentResponse response, int width, int height) {
    std::vector<Segment> kept;
    kept.reserve(response.segments.size());
    for (auto& s : response.segments) {
        if (!(s.score >= 0.0 && s.score <= 1.0)) {
            throw Error(ErrorCode::MalformedResponse, "segment score outside [0,1]");
        }
        if (!s.mask.window().inside(width, height)) {
            throw Error(ErrorCode::MalformedResponse, "segment window outside image bounds");
        }
        if (s.mask.count_at_least(kBinarizeThreshold) == 0) continue;
        kept.push_back(std::move(s));
    }
    response.segments = std::move(kept);
    return response;
}

RegionPartition classify_partition(const SegmentResponse& response, int width, int height) {
    BinaryMask person_px(width, height);
    BinaryMask other_px(width, height);
    std::vector<PersonInstance> persons;
    for (const auto& s : response.segments) {
        const bool is_person = s.label == kPersonLabel;
        const Rect& w = intersect(s.mask.window(), Rect{0, 0, width, height});
        BinaryMask& target = is_person ? person_px : other_px;
        for (int y = w.y; y < w.bottom(); ++y) {
            for (int x = w.x; x < w.right(); ++x) {
                if (s.mask.at(x, y) >= kBinarizeThreshold) target.set(x, y);
            }
        }
        if (is_person) persons.push_back(PersonInstance{s.mask, s.score, std::nullopt});
    }
    BinaryMask background(width, height);
    BinaryMask uncertain(width, height);
    for (std::size_t i = 0; i < background.size(); ++i) {
        const bool p = person_px.get_index(i);
        const bool o = other_px.get_index(i);
        background.set_index(i, o && !p);
        uncertain.set_index(i, !o && !p);
    }
    return RegionPartition(width, height, std::move(persons), std::move(background), std::move(uncertain));
}

RetryingSegmenter::RetryingSegmenter(std::shared_ptr<Segmenter> inner, RetryPolicy policy)
    : inner_(std::move(inner)), policy_(policy) {}

SegmentResponse RetryingSegmenter::segment(const SegmentRequest& request) {
    auto delay = policy_.base_delay;
    for (int attempt = 0;; ++attempt) {
        ++attempts_;
        try {
            return inner_->segment(request);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BackendUnavailable || attempt >= policy_.retries) throw;
        }
        std::this_thread::sleep_for(delay);
        delay *= 2;
    }
}

}  // namespace crowdseed
