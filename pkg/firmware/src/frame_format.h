// Wire-grammar line formatting, isolated from board I/O so it compiles and
// tests on a host without hardware. One frame per line: comma-separated
// decimal ADC counts, newline-terminated, e.g. "512,300\n" for two channels.

#ifndef PHYSIORT_FRAME_FORMAT_H
#define PHYSIORT_FRAME_FORMAT_H

#include <stddef.h>
#include <stdint.h>

namespace firmware {

constexpr int kAdcBits = 12;
constexpr uint16_t kAdcMax = (1u << kAdcBits) - 1;

constexpr size_t kMinChannels = 1;
constexpr size_t kMaxChannels = 4;

// Worst case: 4 channels x "4095" + 3 commas + '\n'.
constexpr size_t kMaxLineBytes = kMaxChannels * 5;

// Write one frame into out. Values above the ADC rail are clamped to it
// (the reference boards cannot produce them; a misconfigured shift must
// not corrupt the stream). Returns the number of bytes written, or 0 if
// n_channels is outside 1..4 or cap is too small; on 0 the buffer is
// untouched. The output is not NUL-terminated.
size_t format_frame(const uint16_t* values, size_t n_channels,
                    char* out, size_t cap);

}  // namespace firmware

#endif  // PHYSIORT_FRAME_FORMAT_H
