#include "crowdseed/label_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "crowdseed/image_io.hpp"
#include "crowdseed/rle.hpp"

namespace crowdseed {

using nlohmann::json;

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

json label_set_to_json(const PseudoLabelSet& labels) {
    const auto& part = labels.partition;
    json persons = json::array();
    for (const auto& p : part.persons()) {
        const Rect& w = p.mask.window();
        json jp;
        jp["score"] = p.score;
        jp["window"] = {w.x, w.y, w.w, w.h};
        jp["mask_rle"] = rle_encode(p.mask);
        if (p.head) {
            jp["head"] = {p.head->x, p.head->y};
        } else {
            jp["head"] = nullptr;
        }
        persons.push_back(std::move(jp));
    }
    json j;
    j["version"] = kLabelFileVersion;
    j["image"] = {{"id", labels.image_id}, {"width", part.width()}, {"height", part.height()}};
    j["background_rle"] = rle_encode(part.background());
    j["uncertain_rle"] = rle_encode(part.uncertain());
    j["persons"] = std::move(persons);
    return j;
}

PseudoLabelSet label_set_from_json(const json& j) {
    try {
        if (j.at("version").get<int>() != kLabelFileVersion) {
            throw Error(ErrorCode::ParseError, "unsupported label file version");
        }
        const auto& img = j.at("image");
        const int width = img.at("width").get<int>();
        const int height = img.at("height").get<int>();
        auto background = rle_decode_image(j.at("background_rle").get<RleCounts>(), width, height);
        auto uncertain = rle_decode_image(j.at("uncertain_rle").get<RleCounts>(), width, height);
        std::vector<PersonInstance> persons;
        for (const auto& jp : j.at("persons")) {
            const auto win = jp.at("window").get<std::vector<int>>();
            if (win.size() != 4) throw Error(ErrorCode::ParseError, "person window must have 4 entries");
            PersonInstance p;
            p.mask = rle_decode(jp.at("mask_rle").get<RleCounts>(), Rect{win[0], win[1], win[2], win[3]});
            p.score = jp.at("score").get<double>();
            if (!jp.at("head").is_null()) {
                const auto h = jp.at("head").get<std::vector<double>>();
                if (h.size() != 2) throw Error(ErrorCode::ParseError, "head must be [x, y]");
                p.head = Point{h[0], h[1]};
            }
            persons.push_back(std::move(p));
        }
        return PseudoLabelSet{img.at("id").get<std::string>(),
                              RegionPartition(width, height, std::move(persons), std::move(background),
                                              std::move(uncertain))};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("label file: ") + e.what());
    }
}

void save_label_set(const PseudoLabelSet& labels, const std::filesystem::path& path) {
    write_text_file(path, dump_json(label_set_to_json(labels)));
}

PseudoLabelSet load_label_set(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return label_set_from_json(j);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
    return v;
}

constexpr std::uint32_t kDensityVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_density(const DensityGrid& grid) {
    std::vector<std::uint8_t> out{'C', 'S', 'D', 'G'};
    put_u32(out, kDensityVersion);
    put_u32(out, static_cast<std::uint32_t>(grid.width()));
    put_u32(out, static_cast<std::uint32_t>(grid.height()));
    out.reserve(16 + grid.values().size() * 4);
    for (double v : grid.values()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

DensityGrid decode_density(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "CSDG", 4) != 0) {
        throw Error(ErrorCode::ParseError, "not a CSDG density file");
    }
    if (get_u32(bytes, 4) != kDensityVersion) throw Error(ErrorCode::ParseError, "unsupported CSDG version");
    const auto w = get_u32(bytes, 8);
    const auto h = get_u32(bytes, 12);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() != 16 + n * 4) throw Error(ErrorCode::LengthMismatch, "CSDG payload size mismatch");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, 16 + 4 * i)));
    }
    return DensityGrid(static_cast<int>(w), static_cast<int>(h), std::move(values));
}

void save_density(const DensityGrid& grid, const std::filesystem::path& path) {
    write_file_bytes(path, encode_density(grid));
}

DensityGrid load_density(const std::filesystem::path& path) { return decode_density(read_file_bytes(path)); }

}  // namespace crowdseed
