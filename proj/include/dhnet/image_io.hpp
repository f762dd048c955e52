// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dhnet/tensor.hpp"

namespace dhnet {

/// Decodes an 8-bit PNG to a (1,3,H,W) tensor in [0,1]. Grayscale, palette,
/// and alpha images are expanded/stripped to RGB.
Tensor<double> read_png(const std::string& path);

/// Encodes a (1,3,H,W) tensor in [0,1] as an 8-bit RGB PNG. The file is
/// written to a temporary sibling and renamed into place.
void write_png(const std::string& path, const Tensor<double>& img);

}  // namespace dhnet
