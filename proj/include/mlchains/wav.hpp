#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlchains {

struct Waveform {
    std::vector<double> samples;  // mono, in [-1, 1]
    int sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Reads PCM WAV: 16-bit integer or 32-bit float samples; multi-channel input
// is downmixed by averaging.
inline Waveform load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open wav file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error(path + ": not a RIFF/WAVE file");

    int audio_format = 0, channels = 0, bits = 0;
    int sample_rate = 0;
    std::size_t data_offset = 0, data_size = 0;

    std::size_t at = 12;
    while (at + 8 <= bytes.size()) {
        const std::string chunk_id(reinterpret_cast<const char*>(bytes.data() + at), 4);
        const std::uint32_t chunk_size = detail::read_u32(bytes.data() + at + 4);
        const std::size_t body = at + 8;
        if (chunk_id == "fmt ") {
            if (chunk_size < 16 || body + 16 > bytes.size())
                throw std::runtime_error(path + ": malformed fmt chunk");
            audio_format = detail::read_u16(bytes.data() + body);
            channels = detail::read_u16(bytes.data() + body + 2);
            sample_rate = static_cast<int>(detail::read_u32(bytes.data() + body + 4));
            bits = detail::read_u16(bytes.data() + body + 14);
        } else if (chunk_id == "data") {
            data_offset = body;
            data_size = std::min<std::size_t>(chunk_size, bytes.size() - body);
        }
        at = body + chunk_size + (chunk_size & 1);
    }

    if (channels < 1 || sample_rate <= 0 || data_offset == 0)
        throw std::runtime_error(path + ": missing fmt or data chunk");

    Waveform wav;
    wav.sample_rate = sample_rate;
    if (audio_format == 1 && bits == 16) {
        const std::size_t frames = data_size / (2 * static_cast<std::size_t>(channels));
        wav.samples.resize(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            double sum = 0.0;
            for (int ch = 0; ch < channels; ++ch) {
                const unsigned char* p = bytes.data() + data_offset + 2 * (f * channels + ch);
                const auto raw = static_cast<std::int16_t>(detail::read_u16(p));
                sum += static_cast<double>(raw) / 32768.0;
            }
            wav.samples[f] = sum / channels;
        }
    } else if (audio_format == 3 && bits == 32) {
        const std::size_t frames = data_size / (4 * static_cast<std::size_t>(channels));
        wav.samples.resize(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            double sum = 0.0;
            for (int ch = 0; ch < channels; ++ch) {
                const std::uint32_t raw = detail::read_u32(bytes.data() + data_offset + 4 * (f * channels + ch));
                float value;
                std::memcpy(&value, &raw, 4);
                sum += static_cast<double>(value);
            }
            wav.samples[f] = sum / channels;
        }
    } else {
        throw std::runtime_error(path + ": unsupported format (need 16-bit PCM or 32-bit float)");
    }
    return wav;
}

// Writes mono 16-bit PCM; samples are clamped to [-1, 1].
inline void save_wav(const Waveform& wav, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);

    auto put_u32 = [&out](std::uint32_t v) {
        const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.write(b, 4);
    };
    auto put_u16 = [&out](std::uint16_t v) {
        const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
        out.write(b, 2);
    };

    const std::uint32_t data_size = static_cast<std::uint32_t>(wav.samples.size() * 2);
    out.write("RIFF", 4);
    put_u32(36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<std::uint32_t>(wav.sample_rate));
    put_u32(static_cast<std::uint32_t>(wav.sample_rate) * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_size);
    for (double s : wav.samples) {
        const long scaled = std::lrint(std::clamp(s, -1.0, 1.0) * 32768.0);
        const auto raw = static_cast<std::int16_t>(std::clamp<long>(scaled, -32768, 32767));
        put_u16(static_cast<std::uint16_t>(raw));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mlchains
