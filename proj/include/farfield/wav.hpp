#pragma once

#include <string>

#include "farfield/codec.hpp"

namespace farfield {

/// RIFF/WAVE, 16-bit PCM, interleaved channels.
void write_wav(const std::string& path, const AudioClip& clip);
AudioClip read_wav(const std::string& path);

}  // namespace farfield
