#include "umm/rng.hpp"

#include <cstdio>

namespace umm {

std::string Rng::state_hex() const {
    char buf[72];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx%016llx", (unsigned long long)s[0],
                  (unsigned long long)s[1], (unsigned long long)s[2], (unsigned long long)s[3]);
    return buf;
}

bool Rng::restore_hex(const std::string& hex) {
    if (hex.size() != 64) return false;
    for (int i = 0; i < 4; ++i) {
        uint64_t v = 0;
        for (int j = 0; j < 16; ++j) {
            char c = hex[size_t(i * 16 + j)];
            v <<= 4;
            if (c >= '0' && c <= '9') v |= uint64_t(c - '0');
            else if (c >= 'a' && c <= 'f') v |= uint64_t(c - 'a' + 10);
            else return false;
        }
        s[i] = v;
    }
    return true;
}

} // namespace umm
