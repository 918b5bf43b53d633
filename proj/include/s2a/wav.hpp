#pragma once

#include <string>
#include <vector>

namespace s2a {

struct WavData {
    int sample_rate = 0;
    std::vector<float> samples;  // mono, scaled to [-1, 1)
};

// Reads mono 16-bit PCM WAV at 16 kHz; anything else is rejected with a
// message naming the offending property.
WavData read_wav(const std::string& path);

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);

}  // namespace s2a
