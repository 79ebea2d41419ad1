#pragma once

#include "mlsis/types.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace mlsis::io
{

/// Fixed 17-significant-digit rendering; round-trips every finite double.
inline std::string format_double(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

/// Column label `<name>[alpha][i]` for the layer-major nm-vector layout.
inline std::string column_name(const std::string& name, Index layer, Index node)
{
    return name + "[" + std::to_string(layer) + "][" + std::to_string(node) + "]";
}

} // namespace mlsis::io
