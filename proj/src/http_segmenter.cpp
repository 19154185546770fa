#include "crowdseed/http_segmenter.hpp"

#include <httplib.h>

#include "crowdseed/wire.hpp"

namespace crowdseed {

namespace {

httplib::Client make_client(const std::string& url, std::chrono::seconds timeout) {
    httplib::Client cli(url);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    return cli;
}

}  // namespace

HttpSegmenter::HttpSegmenter(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

SegmentResponse HttpSegmenter::segment(const SegmentRequest& request) {
    validate_request(request);
    auto cli = make_client(base_url_, timeout_);
    const std::string body = wire::encode_request(request).dump();
    auto res = cli.Post("/v1/segment", body, "application/json");
    if (!res) {
        throw Error(ErrorCode::BackendUnavailable,
                    base_url_ + ": " + httplib::to_string(res.error()));
    }
    if (res->status >= 500) {
        throw Error(ErrorCode::BackendUnavailable, base_url_ + ": HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::MalformedResponse,
                    base_url_ + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, e.what());
    }
    return wire::decode_response(j, request.image.width(), request.image.height());
}

std::string HttpSegmenter::health() const {
    auto cli = make_client(base_url_, timeout_);
    auto res = cli.Get("/v1/health");
    if (!res) throw Error(ErrorCode::BackendUnavailable, base_url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw Error(ErrorCode::BackendUnavailable, base_url_ + ": HTTP " + std::to_string(res->status));
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        if (j.at("status").get<std::string>() != "ok") {
            throw Error(ErrorCode::BackendUnavailable, "backend reports status " + j.at("status").dump());
        }
        return j.at("model").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, e.what());
    }
}

}  // namespace crowdseed
