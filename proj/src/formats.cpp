#include "uniadet/formats.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "uniadet/error.hpp"

namespace uniadet {

namespace {

static_assert(sizeof(float) == 4);

class ByteWriter {
public:
    void raw(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f32(double v) { f32(static_cast<float>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

// Bounds-checked little-endian cursor; every failure reports the byte offset.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, const char* format) : bytes_(bytes), format_(format) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(std::string(format_) + ": " + what, pos_);
    }

    void need(std::size_t n) const {
        if (remaining() < n) fail("truncated input, needed " + std::to_string(n) + " more bytes");
    }

    void magic(const char* expected) {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) fail(std::string("bad magic, expected ") + expected);
        pos_ += 4;
    }

    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void version() {
        const auto v = u16();
        if (v != kFormatVersion) {
            pos_ -= 2;
            fail("unsupported version " + std::to_string(v));
        }
    }

    void finish() const {
        if (remaining() != 0) fail("unexpected trailing bytes");
    }

private:
    std::span<const std::uint8_t> bytes_;
    const char* format_;
    std::size_t pos_ = 0;
};

// Multiplies sizes read from a header, rejecting anything that could not fit in
// the remaining input.
std::size_t checked_count(const ByteReader& r, std::initializer_list<std::uint64_t> factors) {
    std::uint64_t total = 1;
    for (auto f : factors) {
        if (f != 0 && total > (std::uint64_t{1} << 40) / f) r.fail("header sizes overflow");
        total *= f;
    }
    if (total * 4 > r.remaining()) r.fail("header declares more data than the file holds");
    return static_cast<std::size_t>(total);
}

std::uint16_t narrow_block(int block) {
    if (block < 0 || block > 0xffff) throw UsageError("block index out of u16 range");
    return static_cast<std::uint16_t>(block);
}

std::uint32_t narrow32(std::size_t v, const char* what) {
    if (v > 0xffffffffULL) throw UsageError(std::string(what) + " out of u32 range");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(std::span<const std::uint8_t> bytes, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// --- UFST ------------------------------------------------------------------

std::vector<std::uint8_t> encode_features(const FeatureStack& stack) {
    stack.validate();
    ByteWriter w;
    w.raw("UFST", 4);
    w.u16(kFormatVersion);
    w.u16(static_cast<std::uint16_t>(stack.layers.size()));
    w.u32(narrow32(stack.image_height, "image height"));
    w.u32(narrow32(stack.image_width, "image width"));
    for (const auto& l : stack.layers) {
        w.u16(narrow_block(l.block_index));
        w.u32(narrow32(l.dim, "dim"));
        w.u32(narrow32(l.grid_h, "grid_h"));
        w.u32(narrow32(l.grid_w, "grid_w"));
    }
    for (const auto& l : stack.layers) {
        for (float v : l.global_token) w.f32(v);
        for (float v : l.patch_tokens) w.f32(v);
    }
    return w.take();
}

FeatureStack decode_features(std::span<const std::uint8_t> bytes, const std::string& source_id) {
    ByteReader r(bytes, "UFST");
    r.magic("UFST");
    r.version();
    const std::uint16_t count = r.u16();
    if (count == 0) r.fail("zero layers");
    FeatureStack stack;
    stack.source_id = source_id;
    stack.image_height = r.u32();
    stack.image_width = r.u32();
    if (stack.image_height == 0 || stack.image_width == 0) r.fail("zero image size");
    stack.layers.resize(count);
    for (auto& l : stack.layers) {
        l.block_index = r.u16();
        l.dim = r.u32();
        l.grid_h = r.u32();
        l.grid_w = r.u32();
        if (l.dim == 0 || l.grid_h == 0 || l.grid_w == 0) r.fail("zero layer dimension");
    }
    for (std::size_t li = 0; li < stack.layers.size(); ++li) {
        auto& l = stack.layers[li];
        if (li > 0 && l.block_index <= stack.layers[li - 1].block_index) r.fail("layers not in ascending block order");
        const std::size_t g = checked_count(r, {l.dim});
        l.global_token.resize(g);
        for (auto& v : l.global_token) {
            v = r.f32();
            if (!std::isfinite(v)) r.fail("non-finite global token value in block " + std::to_string(l.block_index));
        }
        const std::size_t n = checked_count(r, {l.grid_h, l.grid_w, l.dim});
        l.patch_tokens.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const float v = r.f32();
            if (!std::isfinite(v)) {
                const auto cell = i / l.dim;
                r.fail("non-finite patch token in block " + std::to_string(l.block_index) + " at row " +
                       std::to_string(cell / l.grid_w) + ", col " + std::to_string(cell % l.grid_w));
            }
            l.patch_tokens[i] = v;
        }
    }
    r.finish();
    return stack;
}

void write_feature_file(const FeatureStack& stack, const std::filesystem::path& path) {
    write_bytes(encode_features(stack), path);
}

FeatureStack read_feature_file(const std::filesystem::path& path) {
    return decode_features(read_bytes(path), path.stem().string());
}

// --- UADW ------------------------------------------------------------------

std::vector<std::uint8_t> encode_weights(const WeightBank& bank) {
    bank.validate();
    ByteWriter w;
    w.raw("UADW", 4);
    w.u16(kFormatVersion);
    w.f32(bank.tau);
    w.f32(bank.lambda_p);
    w.f32(bank.lambda_f);
    w.u16(static_cast<std::uint16_t>(bank.layers.size()));
    for (const auto& l : bank.layers) {
        w.u16(narrow_block(l.block_index));
        w.u32(narrow32(l.dim(), "dim"));
        for (double v : l.cls.values) w.f32(v);
        for (double v : l.seg.values) w.f32(v);
    }
    w.str(bank.metadata.dump());
    return w.take();
}

WeightBank decode_weights(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "UADW");
    r.magic("UADW");
    r.version();
    WeightBank bank;
    bank.tau = r.f32();
    bank.lambda_p = r.f32();
    bank.lambda_f = r.f32();
    const std::uint16_t count = r.u16();
    if (count == 0) r.fail("zero layers");
    bank.layers.resize(count);
    for (auto& l : bank.layers) {
        l.block_index = r.u16();
        const std::uint32_t d = r.u32();
        if (d == 0) r.fail("zero dim");
        const std::size_t n = checked_count(r, {d, 4});
        (void)n;
        l.cls = TwoClassWeights(d);
        l.seg = TwoClassWeights(d);
        for (auto& v : l.cls.values) v = r.f32();
        for (auto& v : l.seg.values) v = r.f32();
    }
    const std::string meta = r.str();
    r.finish();
    try {
        bank.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("UADW: metadata is not valid JSON: ") + e.what(), bytes.size() - meta.size());
    }
    try {
        bank.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("UADW: invalid weights: ") + e.what(), bytes.size());
    }
    return bank;
}

void write_weight_file(const WeightBank& bank, const std::filesystem::path& path) {
    write_bytes(encode_weights(bank), path);
}

WeightBank read_weight_file(const std::filesystem::path& path) { return decode_weights(read_bytes(path)); }

// --- UFSB ------------------------------------------------------------------

std::vector<std::uint8_t> encode_bank(const MemoryBank& bank) {
    if (bank.layers.empty()) throw UsageError("memory bank has no layers");
    if (bank.source_ids.size() != bank.shots) throw UsageError("memory bank id count != shots");
    ByteWriter w;
    w.raw("UFSB", 4);
    w.u16(kFormatVersion);
    w.u16(static_cast<std::uint16_t>(bank.layers.size()));
    for (const auto& l : bank.layers) {
        w.u16(narrow_block(l.block_index));
        w.u32(narrow32(l.dim, "dim"));
        w.u32(narrow32(l.grid_h, "grid_h"));
        w.u32(narrow32(l.grid_w, "grid_w"));
        w.u32(narrow32(l.rows, "rows"));
    }
    for (const auto& l : bank.layers)
        for (double v : l.tokens) w.f32(v);
    w.u16(static_cast<std::uint16_t>(bank.shots));
    for (const auto& id : bank.source_ids) w.str(id);
    return w.take();
}

MemoryBank decode_bank(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "UFSB");
    r.magic("UFSB");
    r.version();
    const std::uint16_t count = r.u16();
    if (count == 0) r.fail("zero layers");
    MemoryBank bank;
    bank.layers.resize(count);
    for (auto& l : bank.layers) {
        l.block_index = r.u16();
        l.dim = r.u32();
        l.grid_h = r.u32();
        l.grid_w = r.u32();
        l.rows = r.u32();
        if (l.dim == 0 || l.rows == 0) r.fail("empty bank layer");
    }
    for (auto& l : bank.layers) {
        const std::size_t n = checked_count(r, {l.rows, l.dim});
        l.tokens.resize(n);
        for (auto& v : l.tokens) {
            const float f = r.f32();
            if (!std::isfinite(f)) r.fail("non-finite bank token");
            v = f;
        }
    }
    bank.shots = r.u16();
    if (bank.shots == 0) r.fail("zero shots");
    for (std::size_t k = 0; k < bank.shots; ++k) bank.source_ids.push_back(r.str());
    r.finish();
    for (const auto& l : bank.layers)
        if (l.rows != bank.shots * l.grid_h * l.grid_w)
            throw FormatError("UFSB: row count does not match shots x grid", bytes.size());
    return bank;
}

void write_bank_file(const MemoryBank& bank, const std::filesystem::path& path) {
    write_bytes(encode_bank(bank), path);
}

MemoryBank read_bank_file(const std::filesystem::path& path) { return decode_bank(read_bytes(path)); }

// --- PGM / PPM -------------------------------------------------------------

namespace {

struct PnmHeader {
    char kind = '5';
    std::size_t width = 0, height = 0, maxval = 0;
    std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(std::span<const std::uint8_t> bytes) {
    PnmHeader h;
    std::size_t pos = 0;
    auto fail = [&](const std::string& what) -> void { throw FormatError("PNM: " + what, pos); };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) fail("not a binary PGM/PPM");
    h.kind = static_cast<char>(bytes[1]);
    pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("expected a number in header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > 1'000'000'000) fail("header value too large");
            ++pos;
        }
        return v;
    };
    h.width = number();
    h.height = number();
    h.maxval = number();
    if (h.width == 0 || h.height == 0) fail("zero image size");
    if (h.maxval == 0 || h.maxval > 65535) fail("maxval out of range");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("missing whitespace after header");
    ++pos;
    h.data_offset = pos;
    const std::size_t channels = h.kind == '6' ? 3 : 1;
    const std::size_t sample_bytes = h.maxval > 255 ? 2 : 1;
    if (bytes.size() - pos < h.width * h.height * channels * sample_bytes) fail("truncated pixel data");
    return h;
}

std::size_t pnm_sample(std::span<const std::uint8_t> bytes, const PnmHeader& h, std::size_t index) {
    if (h.maxval > 255) {
        const std::size_t p = h.data_offset + 2 * index;
        return (static_cast<std::size_t>(bytes[p]) << 8) | bytes[p + 1];
    }
    return bytes[h.data_offset + index];
}

std::vector<std::uint8_t> pnm_bytes(char kind, std::size_t width, std::size_t height) {
    const std::string header = std::string("P") + kind + "\n" + std::to_string(width) + " " +
                               std::to_string(height) + "\n255\n";
    return {header.begin(), header.end()};
}

std::uint8_t quantize(double v) {
    if (!std::isfinite(v)) v = 0.0;
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Mask decode_mask(std::span<const std::uint8_t> bytes) {
    const auto h = parse_pnm_header(bytes);
    if (h.kind != '5') throw FormatError("mask: expected a P5 (grayscale) PGM", 0);
    Mask m(h.height, h.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = pnm_sample(bytes, h, i) != 0 ? 1 : 0;
    return m;
}

std::vector<std::uint8_t> encode_mask(const Mask& mask) {
    if (mask.empty()) throw UsageError("cannot encode an empty mask");
    auto out = pnm_bytes('5', mask.width, mask.height);
    for (auto v : mask.data) out.push_back(v ? 255 : 0);
    return out;
}

Mask read_mask(const std::filesystem::path& path, std::optional<std::pair<std::size_t, std::size_t>> expected) {
    Mask m = decode_mask(read_bytes(path));
    if (expected && (m.height != expected->first || m.width != expected->second))
        throw ValidationError("mask '" + path.string() + "' is " + std::to_string(m.height) + "x" +
                              std::to_string(m.width) + ", expected " + std::to_string(expected->first) + "x" +
                              std::to_string(expected->second));
    return m;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) { write_bytes(encode_mask(mask), path); }

Raster read_raster(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto h = parse_pnm_header(bytes);
    const std::size_t channels = h.kind == '6' ? 3 : 1;
    Raster img(h.height, h.width, channels);
    const double scale = 1.0 / static_cast<double>(h.maxval);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<double>(pnm_sample(bytes, h, i)) * scale;
    return img;
}

void write_raster(const Raster& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3) throw UsageError("write_raster: only 1 or 3 channels");
    auto out = pnm_bytes(image.channels == 3 ? '6' : '5', image.width, image.height);
    for (double v : image.data) out.push_back(quantize(v));
    write_bytes(out, path);
}

void write_map_pgm(const Grid& map, const std::filesystem::path& path) {
    auto out = pnm_bytes('5', map.cols, map.rows);
    for (double v : map.values) out.push_back(quantize(v));
    write_bytes(out, path);
}

}  // namespace uniadet
