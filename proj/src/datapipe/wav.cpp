#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "msvdd/datapipe.hpp"
#include "msvdd/errors.hpp"

namespace msvdd::data {

namespace {

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kFloat = 3;
constexpr std::uint16_t kExtensible = 0xFFFE;

std::uint16_t u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string codec_name(std::uint16_t tag) {
    switch (tag) {
    case 0x0002: return "MS ADPCM";
    case 0x0006: return "A-law";
    case 0x0007: return "mu-law";
    case 0x0011: return "IMA ADPCM";
    case 0x0055: return "MP3";
    default: return "unknown";
    }
}

std::string hex_tag(std::uint16_t tag) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04X", tag);
    return buf;
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

} // namespace

WavAudio parse_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw FormatError("wav: truncated RIFF header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("wav: not a RIFF/WAVE file");
    }

    bool have_fmt = false;
    std::uint16_t tag = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
        const std::size_t size = u32(bytes.data() + pos + 4);
        pos += 8;
        if (size > bytes.size() - pos) throw FormatError("wav: truncated '" + id + "' chunk");
        const std::uint8_t* body = bytes.data() + pos;
        if (id == "fmt ") {
            if (size < 16) throw FormatError("wav: fmt chunk too short");
            tag = u16(body);
            channels = u16(body + 2);
            rate = u32(body + 4);
            bits = u16(body + 14);
            if (tag == kExtensible) {
                if (size < 40) throw FormatError("wav: extensible fmt chunk too short");
                tag = u16(body + 24);
            }
            have_fmt = true;
        } else if (id == "data") {
            data = bytes.subspan(pos, size);
            have_data = true;
        }
        pos += size + (size & 1);
    }
    if (!have_fmt) throw FormatError("wav: missing fmt chunk");
    if (!have_data) throw FormatError("wav: missing data chunk");

    const bool pcm16 = tag == kPcm && bits == 16;
    const bool f32 = tag == kFloat && bits == 32;
    if (!pcm16 && !f32) {
        throw FormatError("wav: unsupported codec tag " + hex_tag(tag) + " (" + codec_name(tag) + ", " +
                          std::to_string(bits) + " bits); expected PCM 16-bit or IEEE float 32-bit");
    }
    if (channels < 1 || channels > 2) throw FormatError("wav: " + std::to_string(channels) + " channels not supported");
    if (rate == 0) throw FormatError("wav: zero sample rate");

    const std::size_t width = bits / 8, frame = width * channels;
    if (data.size() % frame != 0) throw FormatError("wav: truncated data chunk (partial frame)");
    const std::size_t frames = data.size() / frame;

    WavAudio out;
    out.sample_rate = rate;
    out.left.resize(frames);
    out.right.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::uint8_t* p = data.data() + i * frame + c * width;
            double v;
            if (pcm16) {
                v = static_cast<double>(static_cast<std::int16_t>(u16(p))) / 32768.0;
            } else {
                const std::uint32_t raw = u32(p);
                float f;
                std::memcpy(&f, &raw, sizeof f);
                v = static_cast<double>(f);
            }
            (c == 0 ? out.left : out.right)[i] = v;
        }
    }
    if (channels == 1) out.right = out.left;
    return out;
}

WavAudio load_wav(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_wav(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_wav(const fs::path& path, const WavAudio& audio, WavEncoding encoding) {
    if (audio.left.size() != audio.right.size()) throw DimensionError("write_wav: channel lengths differ");
    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint32_t frame = 2u * bits / 8u;
    const std::uint32_t data_size = static_cast<std::uint32_t>(audio.frames() * frame);

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put32(out, 16);
    put16(out, encoding == WavEncoding::pcm16 ? kPcm : kFloat);
    put16(out, 2);
    put32(out, audio.sample_rate);
    put32(out, audio.sample_rate * frame);
    put16(out, static_cast<std::uint16_t>(frame));
    put16(out, bits);
    put_tag(out, "data");
    put32(out, data_size);
    for (std::size_t i = 0; i < audio.frames(); ++i) {
        for (double v : {audio.left[i], audio.right[i]}) {
            if (encoding == WavEncoding::pcm16) {
                const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
                put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
            } else {
                const float f = static_cast<float>(v);
                std::uint32_t raw;
                std::memcpy(&raw, &f, sizeof raw);
                put32(out, raw);
            }
        }
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot write " + path.string());
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("write failed: " + path.string());
}

} // namespace msvdd::data
