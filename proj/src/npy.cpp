#include "feddah/npy.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "feddah/errors.hpp"

namespace feddah {

void write_npy(const std::string& path, const std::vector<int>& shape,
               const std::vector<double>& data) {
    size_t count = 1;
    for (int e : shape) count *= static_cast<size_t>(e);
    if (count != data.size()) throw DimensionError("write_npy: shape does not match data");

    std::ostringstream header;
    header << "{'descr': '<f8', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < shape.size(); ++i) {
        header << shape[i];
        if (shape.size() == 1 || i + 1 < shape.size()) header << ",";
        if (i + 1 < shape.size()) header << " ";
    }
    header << "), }";
    std::string h = header.str();
    size_t unpadded = 10 + h.size() + 1;  // magic + version + len + header + newline
    size_t padded = (unpadded + 63) / 64 * 64;
    h.append(padded - unpadded, ' ');
    h.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open npy file for writing: " + path);
    out.write("\x93NUMPY\x01\x00", 8);
    uint16_t hlen = static_cast<uint16_t>(h.size());
    char lenbuf[2] = {static_cast<char>(hlen & 0xff), static_cast<char>(hlen >> 8)};
    out.write(lenbuf, 2);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

}  // namespace feddah
