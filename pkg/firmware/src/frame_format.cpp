#include "frame_format.h"

namespace firmware {
namespace {

// Decimal digits of v into buf, most significant first. Hand-rolled so the
// unit has no libc formatting dependency (and no locale surprises).
size_t put_decimal(uint16_t v, char* buf) {
  char tmp[5];  // kAdcMax is 4 digits; uint16_t max is 5
  size_t n = 0;
  do {
    tmp[n++] = static_cast<char>('0' + v % 10);
    v = static_cast<uint16_t>(v / 10);
  } while (v != 0);
  for (size_t i = 0; i < n; i++) buf[i] = tmp[n - 1 - i];
  return n;
}

}  // namespace

size_t format_frame(const uint16_t* values, size_t n_channels,
                    char* out, size_t cap) {
  if (n_channels < kMinChannels || n_channels > kMaxChannels) return 0;

  char line[kMaxLineBytes];
  size_t pos = 0;
  for (size_t ch = 0; ch < n_channels; ch++) {
    if (ch > 0) line[pos++] = ',';
    uint16_t v = values[ch];
    if (v > kAdcMax) v = kAdcMax;
    pos += put_decimal(v, line + pos);
  }
  line[pos++] = '\n';

  if (pos > cap) return 0;
  for (size_t i = 0; i < pos; i++) out[i] = line[i];
  return pos;
}

}  // namespace firmware
