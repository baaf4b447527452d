#include "dla/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace dla {

namespace {

uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* data, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& body) {
    put_u32(out, static_cast<uint32_t>(body.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, crc32(out.data() + start, out.size() - start));
}

// zlib stream of stored deflate blocks; byte-stable across toolchains.
std::vector<uint8_t> zlib_store(const std::vector<uint8_t>& raw) {
    std::vector<uint8_t> out;
    out.push_back(0x78);
    out.push_back(0x01);
    size_t pos = 0;
    do {
        size_t n = std::min<size_t>(raw.size() - pos, 65535);
        bool last = pos + n == raw.size();
        out.push_back(last ? 1 : 0);
        out.push_back(static_cast<uint8_t>(n & 0xff));
        out.push_back(static_cast<uint8_t>(n >> 8));
        out.push_back(static_cast<uint8_t>(~n & 0xff));
        out.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        out.insert(out.end(), raw.begin() + pos, raw.begin() + pos + n);
        pos += n;
    } while (pos < raw.size());
    put_u32(out, adler32(raw.data(), raw.size()));
    return out;
}

struct BitReader {
    const uint8_t* data;
    size_t size;
    size_t pos = 0;
    uint32_t buf = 0;
    int count = 0;

    uint32_t bits(int need) {
        while (count < need) {
            if (pos >= size) throw PngError("png: truncated deflate stream");
            buf |= static_cast<uint32_t>(data[pos++]) << count;
            count += 8;
        }
        uint32_t v = buf & ((1u << need) - 1);
        buf >>= need;
        count -= need;
        return v;
    }
    void align() {
        pos -= count >> 3; // hand whole buffered bytes back, drop partial bits
        buf = 0;
        count = 0;
    }
};

struct Huffman {
    std::array<int, 16> counts{};
    std::vector<int> symbols;

    void build(const std::vector<int>& lengths) {
        counts.fill(0);
        for (int l : lengths)
            if (l) ++counts[l];
        symbols.assign(lengths.size(), 0);
        std::array<int, 16> offs{};
        for (int i = 1; i < 15; ++i) offs[i + 1] = offs[i] + counts[i];
        for (size_t s = 0; s < lengths.size(); ++s)
            if (lengths[s]) symbols[offs[lengths[s]]++] = static_cast<int>(s);
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (int len = 1; len <= 15; ++len) {
            code |= static_cast<int>(br.bits(1));
            int cnt = counts[len];
            if (code - first < cnt) return symbols[index + code - first];
            index += cnt;
            first = (first + cnt) << 1;
            code <<= 1;
        }
        throw PngError("png: invalid huffman code");
    }
};

std::vector<uint8_t> inflate(const uint8_t* data, size_t size) {
    static const int len_base[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23, 27,
                                     31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
    static const int len_extra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                      2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
    static const int dist_base[30] = {1,    2,    3,    4,    5,    7,     9,     13,   17,   25,
                                      33,   49,   65,   97,   129,  193,   257,   385,  513,  769,
                                      1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
    static const int dist_extra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                       6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

    BitReader br{data, size};
    std::vector<uint8_t> out;
    Huffman fixed_lit, fixed_dist;
    {
        std::vector<int> ll(288);
        for (int i = 0; i < 144; ++i) ll[i] = 8;
        for (int i = 144; i < 256; ++i) ll[i] = 9;
        for (int i = 256; i < 280; ++i) ll[i] = 7;
        for (int i = 280; i < 288; ++i) ll[i] = 8;
        fixed_lit.build(ll);
        fixed_dist.build(std::vector<int>(30, 5));
    }

    bool last = false;
    while (!last) {
        last = br.bits(1) != 0;
        uint32_t type = br.bits(2);
        if (type == 0) {
            br.align();
            if (br.pos + 4 > br.size) throw PngError("png: truncated stored block");
            uint32_t n = data[br.pos] | (data[br.pos + 1] << 8);
            uint32_t nn = data[br.pos + 2] | (data[br.pos + 3] << 8);
            if ((n ^ nn) != 0xffff) throw PngError("png: stored block length check failed");
            br.pos += 4;
            if (br.pos + n > br.size) throw PngError("png: truncated stored block");
            out.insert(out.end(), data + br.pos, data + br.pos + n);
            br.pos += n;
            continue;
        }
        if (type == 3) throw PngError("png: reserved block type");
        Huffman lit, dist;
        if (type == 1) {
            lit = fixed_lit;
            dist = fixed_dist;
        } else {
            static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                          11, 4,  12, 3, 13, 2, 14, 1, 15};
            int hlit = static_cast<int>(br.bits(5)) + 257;
            int hdist = static_cast<int>(br.bits(5)) + 1;
            int hclen = static_cast<int>(br.bits(4)) + 4;
            std::vector<int> clen(19, 0);
            for (int i = 0; i < hclen; ++i) clen[order[i]] = static_cast<int>(br.bits(3));
            Huffman cl;
            cl.build(clen);
            std::vector<int> lengths;
            lengths.reserve(hlit + hdist);
            while (static_cast<int>(lengths.size()) < hlit + hdist) {
                int sym = cl.decode(br);
                if (sym < 16) {
                    lengths.push_back(sym);
                } else if (sym == 16) {
                    if (lengths.empty()) throw PngError("png: repeat with no previous length");
                    int rep = 3 + static_cast<int>(br.bits(2));
                    lengths.insert(lengths.end(), rep, lengths.back());
                } else if (sym == 17) {
                    lengths.insert(lengths.end(), 3 + br.bits(3), 0);
                } else {
                    lengths.insert(lengths.end(), 11 + br.bits(7), 0);
                }
            }
            if (static_cast<int>(lengths.size()) != hlit + hdist)
                throw PngError("png: code length overflow");
            lit.build(std::vector<int>(lengths.begin(), lengths.begin() + hlit));
            dist.build(std::vector<int>(lengths.begin() + hlit, lengths.end()));
        }
        for (;;) {
            int sym = lit.decode(br);
            if (sym < 256) {
                out.push_back(static_cast<uint8_t>(sym));
            } else if (sym == 256) {
                break;
            } else {
                sym -= 257;
                if (sym >= 29) throw PngError("png: bad length symbol");
                int len = len_base[sym] + static_cast<int>(br.bits(len_extra[sym]));
                int dsym = dist.decode(br);
                if (dsym >= 30) throw PngError("png: bad distance symbol");
                size_t d = dist_base[dsym] + br.bits(dist_extra[dsym]);
                if (d > out.size()) throw PngError("png: distance past window start");
                size_t from = out.size() - d;
                for (int i = 0; i < len; ++i) out.push_back(out[from + i]);
            }
        }
    }
    return out;
}

uint32_t read_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
    if (pb <= pc) return static_cast<uint8_t>(b);
    return static_cast<uint8_t>(c);
}

} // namespace

Raster resize_raster(const Raster& img, int out_w, int out_h) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("resize: empty source raster");
    if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize: bad output size");
    Raster out(out_w, out_h);
    double sx = static_cast<double>(img.width) / out_w;
    double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = std::clamp(fx - x0, 0.0, 1.0);
            double top = (1 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
            double bot = (1 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
            double v = (1 - wy) * top + wy * bot;
            out.at(x, y) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return out;
}

std::pair<int, int> scaled_size(int w, int h, int shorter, int long_cap) {
    if (w <= 0 || h <= 0 || shorter <= 0 || long_cap <= 0)
        throw std::invalid_argument("scaled_size: sizes must be positive");
    double scale = static_cast<double>(shorter) / std::min(w, h);
    if (scale * std::max(w, h) > long_cap)
        scale = static_cast<double>(long_cap) / std::max(w, h);
    int ow = std::max(1, static_cast<int>(std::lround(w * scale)));
    int oh = std::max(1, static_cast<int>(std::lround(h * scale)));
    return {ow, oh};
}

std::vector<uint8_t> encode_png(const Raster& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<size_t>(img.width) * img.height)
        throw PngError("png: raster shape mismatch");
    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0}); // 8-bit grayscale, no interlace
    put_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (img.width + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter None
        raw.insert(raw.end(), img.pixels.begin() + static_cast<size_t>(y) * img.width,
                   img.pixels.begin() + static_cast<size_t>(y + 1) * img.width);
    }
    put_chunk(out, "IDAT", zlib_store(raw));
    put_chunk(out, "IEND", {});
    return out;
}

void write_png(const std::string& path, const Raster& img) {
    std::vector<uint8_t> bytes = encode_png(img);
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw PngError("png: cannot open '" + path + "' for writing");
    size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (n != bytes.size()) throw PngError("png: short write to '" + path + "'");
}

Raster decode_png(const std::vector<uint8_t>& bytes) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw PngError("png: bad signature");
    size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    bool seen_ihdr = false;
    std::vector<uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        uint32_t len = read_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw PngError("png: truncated chunk");
        std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
        const uint8_t* body = bytes.data() + pos + 8;
        if (type == "IHDR") {
            if (len != 13) throw PngError("png: bad IHDR length");
            width = static_cast<int>(read_u32(body));
            height = static_cast<int>(read_u32(body + 4));
            bit_depth = body[8];
            color_type = body[9];
            if (body[12] != 0) throw PngError("png: interlaced images unsupported");
            seen_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), body, body + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr) throw PngError("png: missing IHDR");
    if (width <= 0 || height <= 0) throw PngError("png: bad dimensions");
    if (bit_depth != 8) throw PngError("png: only 8-bit depth supported");
    int channels;
    switch (color_type) {
    case 0: channels = 1; break;
    case 2: channels = 3; break;
    case 4: channels = 2; break;
    case 6: channels = 4; break;
    default: throw PngError("png: unsupported color type " + std::to_string(color_type));
    }
    if (idat.size() < 3) throw PngError("png: missing image data");
    // skip the 2-byte zlib header; trailing adler is ignored by inflate
    std::vector<uint8_t> raw = inflate(idat.data() + 2, idat.size() - 2);

    size_t stride = static_cast<size_t>(width) * channels;
    if (raw.size() < (stride + 1) * height) throw PngError("png: image data too short");
    std::vector<uint8_t> flat(stride * height);
    std::vector<uint8_t> prev(stride, 0);
    size_t rp = 0;
    for (int y = 0; y < height; ++y) {
        uint8_t filter = raw[rp++];
        uint8_t* row = flat.data() + static_cast<size_t>(y) * stride;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= static_cast<size_t>(channels) ? row[x - channels] : 0;
            int b = prev[x];
            int c = x >= static_cast<size_t>(channels) ? prev[x - channels] : 0;
            int v = raw[rp++];
            switch (filter) {
            case 0: break;
            case 1: v += a; break;
            case 2: v += b; break;
            case 3: v += (a + b) / 2; break;
            case 4: v += paeth(a, b, c); break;
            default: throw PngError("png: unknown filter " + std::to_string(filter));
            }
            row[x] = static_cast<uint8_t>(v);
        }
        std::copy(row, row + stride, prev.begin());
    }

    Raster img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const uint8_t* px = flat.data() + (static_cast<size_t>(y) * width + x) * channels;
            int g;
            switch (color_type) {
            case 0: g = px[0]; break;
            case 4: g = px[0]; break;
            case 2:
            case 6: g = (299 * px[0] + 587 * px[1] + 114 * px[2] + 500) / 1000; break;
            default: g = px[0];
            }
            img.at(x, y) = static_cast<uint8_t>(g);
        }
    }
    return img;
}

Raster read_png(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw PngError("png: cannot open '" + path + "'");
    std::fseek(f, 0, SEEK_END);
    long n = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> bytes(static_cast<size_t>(n));
    size_t got = std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (got != bytes.size()) throw PngError("png: short read from '" + path + "'");
    return decode_png(bytes);
}

} // namespace dla
