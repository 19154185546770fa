#include "crowdseed/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace crowdseed {

namespace {

struct ReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t offset;
};

void png_read_from_vector(png_structp png, png_bytep out, png_size_t len) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->offset + len > cur->bytes->size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, cur->bytes->data() + cur->offset, len);
    cur->offset += len;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_throw(png_structp, png_const_charp msg) { throw Error(ErrorCode::Io, std::string("png: ") + msg); }

void png_warn_silent(png_structp, png_const_charp) {}

RasterImage decode_pnm(const std::vector<std::uint8_t>& bytes) {
    std::string header(bytes.begin(), bytes.begin() + std::min<std::size_t>(bytes.size(), 512));
    std::istringstream is(header);
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P6") throw Error(ErrorCode::Io, "unsupported PNM variant " + magic);
    auto next_int = [&]() {
        std::string tok;
        while (is >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return std::stoi(tok);
        }
        throw Error(ErrorCode::Io, "truncated PNM header");
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval <= 0 || maxval > 255) throw Error(ErrorCode::Io, "only 8-bit PNM supported");
    const auto data_start = static_cast<std::size_t>(is.tellg()) + 1;
    const int channels = magic == "P5" ? 1 : 3;
    const std::size_t n = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() < data_start + n) throw Error(ErrorCode::Io, "truncated PNM data");
    std::vector<std::uint8_t> data(bytes.begin() + data_start, bytes.begin() + data_start + n);
    return RasterImage(w, h, channels, std::move(data));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
    if (!png) throw Error(ErrorCode::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_write_struct(png, info); }
    } guard{&png, &info};
    if (!info) throw Error(ErrorCode::Io, "png_create_info_struct failed");
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, image.width(), image.height(), 8,
                 image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    const auto data = image.data();
    const std::size_t stride = static_cast<std::size_t>(image.width()) * image.channels();
    for (int y = 0; y < image.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(data.data() + y * stride));
    }
    png_write_end(png, nullptr);
    return out;
}

RasterImage decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error(ErrorCode::Io, "not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
    if (!png) throw Error(ErrorCode::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* png;
        png_infop* info;
        ~Guard() { png_destroy_read_struct(png, info, nullptr); }
    } guard{&png, &info};
    if (!info) throw Error(ErrorCode::Io, "png_create_info_struct failed");

    ReadCursor cursor{&bytes, 0};
    png_set_read_fn(png, &cursor, png_read_from_vector);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) throw Error(ErrorCode::Io, "unsupported PNG channel layout");

    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * channels);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * width * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    return RasterImage(width, height, channels, std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

RasterImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
        return decode_pnm(bytes);
    }
    return decode_png(bytes);
}

void write_image(const RasterImage& image, const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".pgm" || ext == ".ppm") {
        std::ostringstream header;
        header << (image.channels() == 1 ? "P5" : "P6") << "\n" << image.width() << " " << image.height() << "\n255\n";
        const std::string h = header.str();
        std::vector<std::uint8_t> bytes(h.begin(), h.end());
        const auto data = image.data();
        bytes.insert(bytes.end(), data.begin(), data.end());
        write_file_bytes(path, bytes);
        return;
    }
    write_file_bytes(path, encode_png(image));
}

}  // namespace crowdseed
