// Binary PGM/PPM reading and writing plus frame-grid composition.
#pragma once

#include "gtmsm/env.hpp"

#include <string>
#include <vector>

namespace gtmsm {

// Frame buffers are planar CHW floats in [0,1]; written at 8-bit depth.
void write_pnm(const std::string& path, const std::vector<float>& frame, int c, int h, int w);
WorldImage read_pnm(const std::string& path);

// Rows of frames composed into one image with a 1-pixel separator, `cols`
// frames per row. All frames must share (c, h, w).
std::vector<float> compose_grid(const std::vector<std::vector<float>>& frames, int c, int h,
                                int w, int cols, int* out_h, int* out_w);

} // namespace gtmsm
