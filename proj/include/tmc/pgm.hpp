#pragma once

// Portable graymap I/O (P5 binary, P2 ascii), maxval 255.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace tmc {

inline void write_pgm(const std::string& path, int h, int w, const std::vector<uint8_t>& gray,
                      bool ascii = false) {
    if (static_cast<size_t>(h) * w != gray.size())
        throw std::invalid_argument("shape error: pgm buffer size mismatch for " + path);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("I/O error: cannot write " + path);
    os << (ascii ? "P2" : "P5") << "\n" << w << " " << h << "\n255\n";
    if (ascii) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) os << static_cast<int>(gray[y * w + x]) << (x + 1 == w ? '\n' : ' ');
        }
    } else {
        os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    }
    if (!os) throw std::runtime_error("I/O error: short write to " + path);
}

inline std::vector<uint8_t> read_pgm(const std::string& path, int& h, int& w) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("I/O error: cannot read " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P2")
        throw std::runtime_error("I/O error: " + path + " is not a P2/P5 graymap");
    int maxval = 0;
    is >> w >> h >> maxval;
    if (!is || w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("I/O error: bad graymap header in " + path);
    std::vector<uint8_t> gray(static_cast<size_t>(h) * w);
    if (magic == "P2") {
        for (auto& g : gray) {
            int v;
            is >> v;
            g = static_cast<uint8_t>(v);
        }
    } else {
        is.get();  // single whitespace after maxval
        is.read(reinterpret_cast<char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    }
    if (!is) throw std::runtime_error("I/O error: truncated graymap " + path);
    return gray;
}

}  // namespace tmc
