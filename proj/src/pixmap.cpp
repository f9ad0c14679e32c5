#include "gtmsm/pixmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gtmsm {

namespace {

uint8_t quantize(float v) {
    float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::lround(c * 255.0f));
}

int read_pnm_int(std::istream& is) {
    // Skips whitespace and '#' comments, per the netpbm grammar.
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF) throw std::runtime_error("pnm: truncated header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

} // namespace

void write_pnm(const std::string& path, const std::vector<float>& frame, int c, int h, int w) {
    if ((c != 1 && c != 3) || frame.size() != static_cast<size_t>(c) * h * w)
        throw std::invalid_argument("pnm: bad frame shape");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("pnm: cannot open '" + path + "' for writing");
    os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                row[static_cast<size_t>(x) * c + ch] =
                    quantize(frame[(static_cast<size_t>(ch) * h + y) * w + x]);
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw std::runtime_error("pnm: write failed for '" + path + "'");
}

WorldImage read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pnm: cannot open '" + path + "'");
    char m0 = static_cast<char>(is.get());
    char m1 = static_cast<char>(is.get());
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw std::runtime_error("pnm: '" + path + "' is not a binary PGM/PPM");
    int c = m1 == '5' ? 1 : 3;
    int w = read_pnm_int(is);
    int h = read_pnm_int(is);
    int maxval = read_pnm_int(is);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("pnm: unsupported dimensions or depth in '" + path + "'");

    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * c);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw std::runtime_error("pnm: truncated pixel data in '" + path + "'");

    WorldImage img;
    img.h = h;
    img.w = w;
    img.c = c;
    img.pix.resize(raw.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                img.at(ch, y, x) = static_cast<float>(raw[(static_cast<size_t>(y) * w + x) * c + ch]) / 255.0f;
    return img;
}

std::vector<float> compose_grid(const std::vector<std::vector<float>>& frames, int c, int h,
                                int w, int cols, int* out_h, int* out_w) {
    if (frames.empty()) throw std::invalid_argument("grid: no frames");
    if (cols <= 0) throw std::invalid_argument("grid: cols must be positive");
    for (const auto& f : frames)
        if (f.size() != static_cast<size_t>(c) * h * w)
            throw std::invalid_argument("grid: frame shape mismatch");
    int rows = (static_cast<int>(frames.size()) + cols - 1) / cols;
    int gh = rows * h + (rows - 1);
    int gw = cols * w + (cols - 1);
    std::vector<float> grid(static_cast<size_t>(c) * gh * gw, 0.5f);
    for (size_t i = 0; i < frames.size(); ++i) {
        int r = static_cast<int>(i) / cols;
        int col = static_cast<int>(i) % cols;
        int oy = r * (h + 1), ox = col * (w + 1);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    grid[(static_cast<size_t>(ch) * gh + oy + y) * gw + ox + x] =
                        frames[i][(static_cast<size_t>(ch) * h + y) * w + x];
    }
    *out_h = gh;
    *out_w = gw;
    return grid;
}

} // namespace gtmsm
