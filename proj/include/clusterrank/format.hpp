#pragma once

#include <cstdio>
#include <string>

namespace clusterrank {

/// Shortest round-trippable decimal form of a double; stable across runs.
inline std::string fmt_double(double x, int precision = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    return buf;
}

}  // namespace clusterrank
