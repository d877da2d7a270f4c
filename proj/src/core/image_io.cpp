#include "image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "util.hpp"

namespace hamlet {

namespace {

void check_chw(const Tensor& image, const char* who) {
    if (image.ndim() != 3 || image.size(0) != 3)
        throw DataError(std::string(who) + ": expected a [3,H,W] image, got " +
                        shape_str(image.shape()));
}

std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

// PPM header token: skips whitespace and '#' comments.
std::size_t next_token(const std::string& s, std::size_t pos, std::string& tok) {
    while (pos < s.size()) {
        if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    tok.clear();
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) tok.push_back(s[pos++]);
    return pos;
}

Tensor decode_ppm(const std::string& bytes, const std::string& path) {
    std::string tok;
    std::size_t pos = next_token(bytes, 0, tok);
    if (tok != "P6") throw DataError("bad PPM magic in " + path);
    pos = next_token(bytes, pos, tok);
    const long w = std::stol(tok);
    pos = next_token(bytes, pos, tok);
    const long h = std::stol(tok);
    pos = next_token(bytes, pos, tok);
    const long maxval = std::stol(tok);
    if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
        throw DataError("PPM dimensions out of range in " + path);
    if (maxval != 255) throw DataError("PPM maxval must be 255 in " + path);
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (bytes.size() - pos < need) throw DataError("truncated PPM payload in " + path);
    std::vector<double> vals(need);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    // interleaved RGB rows -> planar CHW
    const std::size_t hw = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            vals[c * hw + i] = static_cast<double>(p[i * 3 + c]) / 255.0;
    return Tensor::from_data(
        {3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(vals));
}

Tensor decode_cten(const std::string& bytes, const std::string& path) {
    if (bytes.size() < 4 + 1 + 12) throw DataError("truncated CTEN header in " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (p[4] != 3) throw DataError("CTEN ndim must be 3 in " + path);
    const std::uint32_t c = read_u32le(p + 5), h = read_u32le(p + 9), w = read_u32le(p + 13);
    if (c != 3 || h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16))
        throw DataError("CTEN dimensions out of range in " + path);
    const std::size_t n = static_cast<std::size_t>(c) * h * w;
    if (bytes.size() - 17 < n * 4) throw DataError("truncated CTEN payload in " + path);
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + 17 + i * 4, 4);
        vals[i] = static_cast<double>(f);
    }
    return Tensor::from_data({3, h, w}, std::move(vals));
}

}  // namespace

Tensor decode_image(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "CTEN") == 0) return decode_cten(bytes, path);
    throw DataError("unrecognized image magic in " + path);
}

void write_ppm(const std::string& path, const Tensor& image) {
    check_chw(image, "write_ppm");
    const std::size_t h = image.size(1), w = image.size(2), hw = h * w;
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + hw * 3);
    const auto& v = image.data();
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const double x = std::clamp(v[c * hw + i], 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0))));
        }
    write_file(path, out);
}

void write_cten(const std::string& path, const Tensor& image) {
    check_chw(image, "write_cten");
    std::string out = "CTEN";
    out.push_back(3);
    put_u32le(out, static_cast<std::uint32_t>(image.size(0)));
    put_u32le(out, static_cast<std::uint32_t>(image.size(1)));
    put_u32le(out, static_cast<std::uint32_t>(image.size(2)));
    for (double x : image.data()) {
        const float f = static_cast<float>(x);
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.append(buf, 4);
    }
    write_file(path, out);
}

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::size_t height, std::size_t width) {
    if (pixels.size() != height * width) throw DataError("write_pgm: pixel count mismatch");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    write_file(path, out);
}

Tensor bilinear_resize(const Tensor& image, std::size_t size) {
    check_chw(image, "bilinear_resize");
    const std::size_t h = image.size(1), w = image.size(2);
    const auto& in = image.data();
    std::vector<double> out(3 * size * size);
    const double sy = static_cast<double>(h) / static_cast<double>(size);
    const double sx = static_cast<double>(w) / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const double cy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = cy - static_cast<double>(y0);
        for (std::size_t x = 0; x < size; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const double cx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = cx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double* plane = in.data() + c * h * w;
                const double top = plane[y0 * w + x0] * (1.0 - wx) + plane[y0 * w + x1] * wx;
                const double bot = plane[y1 * w + x0] * (1.0 - wx) + plane[y1 * w + x1] * wx;
                out[(c * size + y) * size + x] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return Tensor::from_data({3, size, size}, std::move(out));
}

}  // namespace hamlet
