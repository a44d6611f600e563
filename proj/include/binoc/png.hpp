#ifndef BINOC_PNG_HPP
#define BINOC_PNG_HPP

// Minimal PNG writer: 8-bit RGB, zlib stream with stored deflate blocks.
// Enough for lossless debug dumps without external dependencies.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "binoc/common.hpp"

namespace binoc {

namespace png_detail {

inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0xFFFFFFFFu) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t n = 0; n < 256; ++n) {
            uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[n] = c;
        }
        return t;
    }();
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc;
}

inline uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

inline void be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

inline void chunk(std::ostream& os, const char type[4], const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> head;
    be32(head, uint32_t(payload.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    os.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
    std::vector<uint8_t> crc;
    be32(crc, crc32(body.data(), body.size()) ^ 0xFFFFFFFFu);
    os.write(reinterpret_cast<const char*>(crc.data()), 4);
}

}  // namespace png_detail

// rgb: w*h*3 bytes, row major.
inline void write_png_rgb(std::ostream& os, int w, int h, const std::vector<uint8_t>& rgb) {
    using namespace png_detail;
    BINOC_CHECK(rgb.size() == size_t(w) * h * 3, "png: buffer size mismatch");
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    be32(ihdr, uint32_t(w));
    be32(ihdr, uint32_t(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // adaptive filtering
    ihdr.push_back(0);   // no interlace
    chunk(os, "IHDR", ihdr);

    // raw scanlines with filter byte 0
    std::vector<uint8_t> raw;
    raw.reserve(size_t(h) * (size_t(w) * 3 + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + size_t(y) * w * 3, rgb.begin() + size_t(y + 1) * w * 3);
    }

    // zlib stream: header + stored deflate blocks + adler
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t pos = 0;
    while (pos < raw.size()) {
        size_t n = std::min<size_t>(65535, raw.size() - pos);
        bool last = pos + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(uint8_t(n & 0xFF));
        z.push_back(uint8_t(n >> 8));
        z.push_back(uint8_t(~n & 0xFF));
        z.push_back(uint8_t((~n >> 8) & 0xFF));
        z.insert(z.end(), raw.begin() + std::ptrdiff_t(pos), raw.begin() + std::ptrdiff_t(pos + n));
        pos += n;
    }
    be32(z, adler32(raw.data(), raw.size()));
    chunk(os, "IDAT", z);
    chunk(os, "IEND", {});
}

inline void write_png_rgb(const std::string& path, int w, int h, const std::vector<uint8_t>& rgb) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError(detail::concat("cannot write ", path));
    write_png_rgb(os, w, h, rgb);
}

}  // namespace binoc

#endif
