#pragma once

#include "sfim/model/model.hpp"

namespace sfim::runtime {

struct RestoreOptions {
    std::size_t tile = 0;      // 0: whole image in one pass
    std::size_t overlap = 16;  // shared border between neighbouring tiles
};

// Level-1 restoration of a C x H x W image, clipped to [0, 1]. With tiling,
// overlapping tiles are blended with linear feathering across the overlap.
Tensor restore_image(const model::Model& model, const Tensor& degraded, const RestoreOptions& opt = {});

} // namespace sfim::runtime
