// Emit a deterministic capture of formatted frames on stdout, standing in
// for the sketch's serial output so the host package's decoder can check
// conformance: every line it prints must parse with zero drops.

#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "../src/frame_format.h"

int main(int argc, char** argv) {
  if (argc != 4) {
    std::fprintf(stderr, "usage: %s <n_frames> <n_channels> <seed>\n", argv[0]);
    return 2;
  }
  long n_frames = std::strtol(argv[1], nullptr, 10);
  long n_channels = std::strtol(argv[2], nullptr, 10);
  uint32_t lcg = static_cast<uint32_t>(std::strtoul(argv[3], nullptr, 10));
  if (n_frames <= 0 || n_channels < 1 || n_channels > 4) {
    std::fprintf(stderr, "bad arguments\n");
    return 2;
  }

  for (long i = 0; i < n_frames; i++) {
    uint16_t values[firmware::kMaxChannels];
    for (long ch = 0; ch < n_channels; ch++) {
      if (i == 0) {
        values[ch] = 0;  // both rails appear in every capture
      } else if (i == 1) {
        values[ch] = firmware::kAdcMax;
      } else {
        lcg = lcg * 1664525u + 1013904223u;
        values[ch] = static_cast<uint16_t>((lcg >> 16) & firmware::kAdcMax);
      }
    }
    char line[firmware::kMaxLineBytes];
    size_t n = firmware::format_frame(values, static_cast<size_t>(n_channels),
                                      line, sizeof line);
    if (n == 0) {
      std::fprintf(stderr, "format_frame failed at frame %ld\n", i);
      return 1;
    }
    std::fwrite(line, 1, n, stdout);
  }
  return 0;
}
