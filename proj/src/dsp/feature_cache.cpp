#include "birdfcn/dsp/feature_cache.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "birdfcn/error.hpp"

namespace birdfcn::dsp {

namespace {

constexpr std::array<char, 4> kMagic{'B', 'F', 'E', 'A'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff),
                                static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw CorruptionError("truncated feature header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffULL) throw ParameterError(std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& text, std::uint64_t seed) {
    return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), seed);
}

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& matrix) {
    if (matrix.values.size() != matrix.bands * matrix.frames) {
        throw ShapeError("feature matrix values do not match bands x frames");
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os.write(kMagic.data(), kMagic.size());
        os.put(static_cast<char>(kVersion));
        os.put(static_cast<char>(matrix.kind == FeatureKind::kMfcc ? 1 : 0));
        put_u32(os, checked_u32(matrix.bands, "band count"));
        put_u32(os, checked_u32(matrix.frames, "frame count"));
        put_u32(os, checked_u32(matrix.frame_params.window_len, "window length"));
        put_u32(os, checked_u32(matrix.frame_params.hop, "hop"));
        put_u32(os, checked_u32(matrix.frame_params.fft_size, "FFT size"));
        put_u32(os, checked_u32(static_cast<std::size_t>(matrix.sample_rate), "sample rate"));
        static_assert(std::endian::native == std::endian::little, "feature files assume little-endian");
        std::vector<float> packed(matrix.values.begin(), matrix.values.end());
        os.write(reinterpret_cast<const char*>(packed.data()),
                 static_cast<std::streamsize>(packed.size() * sizeof(float)));
        if (!os) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic) {
        throw CorruptionError(path.string() + " is not a feature file");
    }
    const int version = is.get();
    if (version != kVersion) throw CorruptionError("unsupported feature file version in " + path.string());
    const int kind = is.get();
    if (kind != 0 && kind != 1) throw CorruptionError("bad feature kind in " + path.string());

    FeatureMatrix m;
    m.kind = kind == 1 ? FeatureKind::kMfcc : FeatureKind::kMelDb;
    m.bands = get_u32(is);
    m.frames = get_u32(is);
    m.frame_params.window_len = get_u32(is);
    m.frame_params.hop = get_u32(is);
    m.frame_params.fft_size = get_u32(is);
    m.sample_rate = static_cast<int>(get_u32(is));

    const std::size_t count = m.bands * m.frames;
    std::vector<float> packed(count);
    if (!is.read(reinterpret_cast<char*>(packed.data()),
                 static_cast<std::streamsize>(count * sizeof(float)))) {
        throw CorruptionError("truncated feature payload in " + path.string());
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw CorruptionError("trailing bytes in " + path.string());
    }
    m.values.assign(packed.begin(), packed.end());
    return m;
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::string FeatureCache::key(const std::filesystem::path& source, const FeatureConfig& config) const {
    std::ifstream is(source, std::ios::binary);
    if (!is) throw IoError("cannot open " + source.string());
    std::uint64_t h = fnv1a64(config.describe());
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto n = static_cast<std::size_t>(is.gcount());
        h = fnv1a64(std::as_bytes(std::span(buf.data(), n)), h);
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::filesystem::path FeatureCache::entry_path(const std::string& key) const {
    return dir_ / (key + ".feat");
}

std::optional<FeatureMatrix> FeatureCache::lookup(const std::string& key) const {
    const auto path = entry_path(key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        return read_feature_file(path);
    } catch (const CorruptionError&) {
        return std::nullopt;
    }
}

void FeatureCache::store(const std::string& key, const FeatureMatrix& matrix) const {
    write_feature_file(entry_path(key), matrix);
}

FeatureMatrix FeatureCache::get_or_compute(const std::filesystem::path& source,
                                           const FeatureConfig& config,
                                           const std::function<FeatureMatrix()>& compute) const {
    const auto k = key(source, config);
    if (auto hit = lookup(k)) {
        ++hits_;
        return *std::move(hit);
    }
    ++misses_;
    auto fresh = compute();
    store(k, fresh);
    // Match what a later hit would return.
    for (double& v : fresh.values) v = static_cast<double>(static_cast<float>(v));
    return fresh;
}

}  // namespace birdfcn::dsp
