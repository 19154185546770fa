#include "crowdseed/wire.hpp"

#include <array>

#include "crowdseed/image_io.hpp"
#include "crowdseed/rle.hpp"

namespace crowdseed::wire {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::array<int, 256> make_reverse() {
    std::array<int, 256> rev{};
    rev.fill(-1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kAlphabet[i])] = i;
    return rev;
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    static const auto rev = make_reverse();
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char ch : text) {
        if (ch == '=' ) break;
        if (ch == '\n' || ch == '\r' || ch == ' ') continue;
        const int v = rev[static_cast<unsigned char>(ch)];
        if (v < 0) throw Error(ErrorCode::MalformedResponse, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

json encode_request(const SegmentRequest& request) {
    json j;
    j["image_png_base64"] = base64_encode(encode_png(request.image));
    if (request.prompts) {
        json pts = json::array();
        for (const auto& p : *request.prompts) pts.push_back({p.x, p.y});
        j["prompts"] = std::move(pts);
    } else {
        j["prompts"] = nullptr;
    }
    if (!request.context.image_id.empty() || request.context.view) {
        json ctx;
        ctx["image_id"] = request.context.image_id;
        if (request.context.view) {
            const Rect& v = *request.context.view;
            ctx["view"] = {v.x, v.y, v.w, v.h};
        } else {
            ctx["view"] = nullptr;
        }
        j["context"] = std::move(ctx);
    }
    return j;
}

SegmentRequest decode_request(const json& body) {
    try {
        SegmentRequest req;
        req.image = decode_png(base64_decode(body.at("image_png_base64").get<std::string>()));
        if (body.contains("prompts") && !body.at("prompts").is_null()) {
            std::vector<Point> pts;
            for (const auto& p : body.at("prompts")) {
                if (!p.is_array() || p.size() != 2) {
                    throw Error(ErrorCode::InvalidArgument, "prompts entries must be [x, y]");
                }
                pts.push_back(Point{p[0].get<double>(), p[1].get<double>()});
            }
            req.prompts = std::move(pts);
        }
        if (body.contains("context") && body.at("context").is_object()) {
            const auto& ctx = body.at("context");
            req.context.image_id = ctx.value("image_id", std::string{});
            if (ctx.contains("view") && !ctx.at("view").is_null()) {
                const auto v = ctx.at("view").get<std::vector<int>>();
                if (v.size() != 4) throw Error(ErrorCode::InvalidArgument, "context.view must be [x,y,w,h]");
                req.context.view = Rect{v[0], v[1], v[2], v[3]};
            }
        }
        validate_request(req);
        return req;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("segment request: ") + e.what());
    }
}

json encode_response(const SegmentResponse& response) {
    json segs = json::array();
    for (const auto& s : response.segments) {
        const Rect& w = s.mask.window();
        segs.push_back({{"label", s.label},
                        {"score", s.score},
                        {"window", {w.x, w.y, w.w, w.h}},
                        {"mask_rle_q8", q8_encode(s.mask, kMaskScale)},
                        {"mask_scale", kMaskScale}});
    }
    return json{{"segments", std::move(segs)}};
}

SegmentResponse decode_response(const json& body, int width, int height) {
    SegmentResponse out;
    try {
        for (const auto& js : body.at("segments")) {
            const auto win = js.at("window").get<std::vector<int>>();
            if (win.size() != 4 || win[2] < 0 || win[3] < 0) {
                throw Error(ErrorCode::MalformedResponse, "segment window must be [x,y,w,h]");
            }
            const int scale = js.value("mask_scale", kMaskScale);
            Segment s;
            s.label = js.at("label").get<std::string>();
            s.score = js.at("score").get<double>();
            s.mask = q8_decode(js.at("mask_rle_q8").get<std::vector<std::uint32_t>>(),
                               Rect{win[0], win[1], win[2], win[3]}, scale);
            out.segments.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::MalformedResponse) throw;
        throw Error(ErrorCode::MalformedResponse, e.what());
    }
    return sanitize_response(std::move(out), width, height);
}

json health_body(const std::string& model) { return json{{"status", "ok"}, {"model", model}}; }

}  // namespace crowdseed::wire
