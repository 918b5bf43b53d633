#include "s2a/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "s2a/errors.hpp"

namespace s2a {

namespace {

uint32_t rd_u32(const std::vector<uint8_t>& b, size_t& pos, const std::string& path,
                const char* what) {
    if (pos + 4 > b.size())
        throw IoError(path + ": truncated WAV while reading " + what + " at byte offset " +
                      std::to_string(pos));
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
}

uint16_t rd_u16(const std::vector<uint8_t>& b, size_t& pos, const std::string& path,
                const char* what) {
    if (pos + 2 > b.size())
        throw IoError(path + ": truncated WAV while reading " + what + " at byte offset " +
                      std::to_string(pos));
    uint16_t v = static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
}

void wr_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void wr_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}

}  // namespace

WavData read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
        std::memcmp(b.data() + 8, "WAVE", 4) != 0)
        throw IoError(path + ": not a RIFF/WAVE file");

    size_t pos = 12;
    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data_ptr = nullptr;
    uint32_t data_len = 0;
    while (pos + 8 <= b.size()) {
        char id[5] = {0};
        std::memcpy(id, b.data() + pos, 4);
        pos += 4;
        const uint32_t len = rd_u32(b, pos, path, "chunk size");
        if (pos + len > b.size())
            throw IoError(path + ": chunk '" + id + "' of " + std::to_string(len) +
                          " bytes overruns the file at byte offset " + std::to_string(pos));
        if (std::strcmp(id, "fmt ") == 0) {
            size_t p = pos;
            format = rd_u16(b, p, path, "audio format");
            channels = rd_u16(b, p, path, "channel count");
            rate = rd_u32(b, p, path, "sample rate");
            rd_u32(b, p, path, "byte rate");
            rd_u16(b, p, path, "block align");
            bits = rd_u16(b, p, path, "bits per sample");
            have_fmt = true;
        } else if (std::strcmp(id, "data") == 0) {
            data_ptr = b.data() + pos;
            data_len = len;
        }
        pos += len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt) throw IoError(path + ": no fmt chunk");
    if (data_ptr == nullptr) throw IoError(path + ": no data chunk");
    if (format != 1) throw IoError(path + ": not PCM (format " + std::to_string(format) + ")");
    if (channels != 1)
        throw IoError(path + ": expected mono, got " + std::to_string(channels) + " channels");
    if (bits != 16)
        throw IoError(path + ": expected 16-bit samples, got " + std::to_string(bits) + "-bit");
    if (rate != 16000)
        throw IoError(path + ": expected 16000 Hz sample rate, got " + std::to_string(rate) +
                      " Hz");

    WavData wav;
    wav.sample_rate = static_cast<int>(rate);
    const size_t n = data_len / 2;
    wav.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(data_ptr[2 * i] | (data_ptr[2 * i + 1] << 8));
        wav.samples[i] = static_cast<float>(s) / 32768.0f;
    }
    return wav;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
    std::vector<uint8_t> b;
    const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    wr_u32(b, 36 + data_len);
    b.insert(b.end(), {'W', 'A', 'V', 'E'});
    b.insert(b.end(), {'f', 'm', 't', ' '});
    wr_u32(b, 16);
    wr_u16(b, 1);
    wr_u16(b, 1);
    wr_u32(b, static_cast<uint32_t>(sample_rate));
    wr_u32(b, static_cast<uint32_t>(sample_rate * 2));
    wr_u16(b, 2);
    wr_u16(b, 16);
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    wr_u32(b, data_len);
    for (float v : samples) {
        const float c = std::clamp(v, -1.0f, 1.0f);
        const int16_t s = static_cast<int16_t>(std::lrintf(c * 32767.0f));
        wr_u16(b, static_cast<uint16_t>(s));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace s2a
