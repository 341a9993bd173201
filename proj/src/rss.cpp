#include "sbios/rss.hpp"

#include <sys/resource.h>

#include <cstdio>
#include <cstring>

namespace sbios {

static int64_t status_field_kb(const char* key) {
  std::FILE* f = std::fopen("/proc/self/status", "r");
  if (!f) return 0;
  char line[256];
  int64_t kb = 0;
  const size_t keylen = std::strlen(key);
  while (std::fgets(line, sizeof(line), f)) {
    if (std::strncmp(line, key, keylen) == 0) {
      std::sscanf(line + keylen, " %ld", &kb);
      break;
    }
  }
  std::fclose(f);
  return kb * 1024;
}

int64_t current_rss_bytes() { return status_field_kb("VmRSS:"); }

int64_t peak_rss_bytes() {
  // VmHWM is missing on some kernels; ru_maxrss covers those
  const int64_t hwm = status_field_kb("VmHWM:");
  struct rusage ru;
  if (getrusage(RUSAGE_SELF, &ru) == 0) {
    const int64_t maxrss = static_cast<int64_t>(ru.ru_maxrss) * 1024;
    return maxrss > hwm ? maxrss : hwm;
  }
  return hwm;
}

}  // namespace sbios
