#pragma once

#include <cstdio>
#include <string>

namespace irpatch {

// Deterministic double formatting for report files; snprintf with a fixed
// precision gives byte-stable output for identical values.
inline std::string fmt_g(double v, int precision = 12) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return std::string(buf);
}

} // namespace irpatch
