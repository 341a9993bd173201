#ifndef SBIOS_RSS_HPP
#define SBIOS_RSS_HPP

#include <cstdint>

namespace sbios {

// Current resident set size in bytes (VmRSS), 0 if unavailable.
int64_t current_rss_bytes();

// Process high-water mark (VmHWM) in bytes, 0 if unavailable.
int64_t peak_rss_bytes();

}  // namespace sbios

#endif
