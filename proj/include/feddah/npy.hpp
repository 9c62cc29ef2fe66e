#pragma once

#include <string>
#include <vector>

namespace feddah {

// Minimal NPY v1.0 writer for little-endian f64 arrays.
void write_npy(const std::string& path, const std::vector<int>& shape,
               const std::vector<double>& data);

}  // namespace feddah
