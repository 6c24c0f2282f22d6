#include "birdfcn/audio/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>

#include "birdfcn/audio/process.hpp"
#include "birdfcn/error.hpp"

namespace birdfcn::audio {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct Layout {
    WavInfo info;
    std::uint64_t data_offset = 0;
    std::uint64_t data_bytes = 0;
};

Layout parse_layout(std::ifstream& is, const std::filesystem::path& path) {
    const std::string name = path.string();
    is.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(is.tellg());
    is.seekg(0);

    std::array<unsigned char, 12> riff{};
    if (!is.read(reinterpret_cast<char*>(riff.data()), riff.size())) {
        throw IoError(name + " is too short to be a WAV file");
    }
    if (std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0) {
        throw FormatError(name + " is not a RIFF/WAVE file");
    }

    std::optional<Layout> layout;
    bool have_fmt = false;
    std::uint16_t format_tag = 0, block_align = 0, bits = 0;
    Layout out;
    std::uint64_t pos = 12;
    while (pos + 8 <= file_size) {
        std::array<unsigned char, 8> head{};
        is.seekg(static_cast<std::streamoff>(pos));
        if (!is.read(reinterpret_cast<char*>(head.data()), head.size())) break;
        const std::uint32_t size = le32(head.data() + 4);
        const std::uint64_t body = pos + 8;
        if (std::memcmp(head.data(), "fmt ", 4) == 0) {
            if (size < 16 || body + size > file_size) throw IoError(name + ": truncated fmt chunk");
            std::vector<unsigned char> fmt(size);
            is.read(reinterpret_cast<char*>(fmt.data()), size);
            format_tag = le16(fmt.data());
            out.info.channels = le16(fmt.data() + 2);
            out.info.sample_rate = static_cast<int>(le32(fmt.data() + 4));
            block_align = le16(fmt.data() + 12);
            bits = le16(fmt.data() + 14);
            if (format_tag == kFormatExtensible) {
                if (size < 40) throw FormatError(name + ": short extensible fmt chunk");
                // The first two bytes of the subformat GUID carry the real format tag.
                format_tag = le16(fmt.data() + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(head.data(), "data", 4) == 0) {
            if (!have_fmt) throw FormatError(name + ": data chunk precedes fmt chunk");
            if (body + size > file_size) {
                throw IoError(name + ": data chunk declares " + std::to_string(size) +
                              " bytes but the file ends early");
            }
            out.data_offset = body;
            out.data_bytes = size;
            layout = out;
            break;
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt) throw FormatError(name + ": missing fmt chunk");
    if (!layout) throw IoError(name + ": missing data chunk");

    if (format_tag == kFormatPcm && bits == 16) {
        layout->info.format = SampleFormat::kPcm16;
    } else if (format_tag == kFormatFloat && bits == 32) {
        layout->info.format = SampleFormat::kFloat32;
    } else {
        throw FormatError(name + ": unsupported encoding (format " + std::to_string(format_tag) +
                          ", " + std::to_string(bits) + " bits); convert to 16-bit PCM or 32-bit float WAV");
    }
    const int ch = layout->info.channels;
    if (ch < 1 || ch > 2) throw FormatError(name + ": " + std::to_string(ch) + " channels, expected 1 or 2");
    if (layout->info.sample_rate <= 0) throw FormatError(name + ": invalid sample rate");
    const std::uint32_t frame_bytes = static_cast<std::uint32_t>(ch) * (bits / 8);
    if (block_align != frame_bytes) throw FormatError(name + ": inconsistent block alignment");
    layout->info.frames = layout->data_bytes / frame_bytes;
    return *layout;
}

}  // namespace

WavInfo read_wav_info(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return parse_layout(is, path).info;
}

WavData read_wav(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const Layout layout = parse_layout(is, path);
    const auto& info = layout.info;
    const std::size_t bytes_per_sample = info.format == SampleFormat::kPcm16 ? 2 : 4;
    std::vector<unsigned char> raw(info.frames * info.channels * bytes_per_sample);
    is.seekg(static_cast<std::streamoff>(layout.data_offset));
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw IoError(path.string() + ": truncated sample data");
    }

    WavData out;
    out.info = info;
    out.channels.assign(info.channels, std::vector<float>(info.frames));
    for (std::size_t i = 0; i < info.frames; ++i) {
        for (int c = 0; c < info.channels; ++c) {
            const unsigned char* p = raw.data() + (i * info.channels + c) * bytes_per_sample;
            float v;
            if (info.format == SampleFormat::kPcm16) {
                v = static_cast<float>(static_cast<std::int16_t>(le16(p))) / 32768.0f;
            } else {
                v = std::bit_cast<float>(le32(p));
                if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite float sample");
            }
            out.channels[c][i] = v;
        }
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const std::vector<std::vector<float>>& channels,
               int sample_rate, SampleFormat format) {
    if (channels.empty() || channels.size() > 2) throw ParameterError("WAV output needs 1 or 2 channels");
    const std::size_t frames = channels.front().size();
    for (const auto& c : channels) {
        if (c.size() != frames) throw ShapeError("WAV channels differ in length");
    }
    if (sample_rate <= 0) throw ParameterError("sample rate must be positive");
    const std::uint16_t ch = static_cast<std::uint16_t>(channels.size());
    const std::uint16_t bits = format == SampleFormat::kPcm16 ? 16 : 32;
    const std::uint16_t align = static_cast<std::uint16_t>(ch * bits / 8);
    const std::uint64_t data_bytes = static_cast<std::uint64_t>(frames) * align;
    if (data_bytes > 0xFFFFFFFFULL - 36) throw ParameterError("clip too long for a WAV file");

    std::vector<unsigned char> buf;
    buf.reserve(44 + data_bytes);
    auto put = [&](std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    };
    auto tag = [&](const char* s) { buf.insert(buf.end(), s, s + 4); };
    tag("RIFF");
    put(36 + data_bytes, 4);
    tag("WAVE");
    tag("fmt ");
    put(16, 4);
    put(format == SampleFormat::kPcm16 ? kFormatPcm : kFormatFloat, 2);
    put(ch, 2);
    put(static_cast<std::uint32_t>(sample_rate), 4);
    put(static_cast<std::uint64_t>(sample_rate) * align, 4);
    put(align, 2);
    put(bits, 2);
    tag("data");
    put(data_bytes, 4);
    for (std::size_t i = 0; i < frames; ++i) {
        for (const auto& c : channels) {
            if (format == SampleFormat::kPcm16) {
                const double scaled = std::round(static_cast<double>(c[i]) * 32768.0);
                put(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))), 2);
            } else {
                put(std::bit_cast<std::uint32_t>(c[i]), 4);
            }
        }
    }

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!os) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, SampleFormat format) {
    write_wav(path, std::vector<std::vector<float>>{clip.samples}, clip.sample_rate, format);
}

AudioClip decode_audio(const std::filesystem::path& path) {
    const WavData wav = read_wav(path);
    AudioClip clip;
    clip.source_id = path.stem().string();
    clip.sample_rate = wav.info.sample_rate;
    if (wav.channels.size() == 1) {
        clip.samples = wav.channels[0];
    } else {
        clip.samples.resize(wav.info.frames);
        for (std::size_t i = 0; i < wav.info.frames; ++i) {
            clip.samples[i] = 0.5f * (wav.channels[0][i] + wav.channels[1][i]);
        }
    }
    return normalize_rate(std::move(clip));
}

}  // namespace birdfcn::audio
