// SPDX-License-Identifier: Apache-2.0
//
// Dense 2D operators for the slice critic. Images are NHWC: shape
// [M, H, W, C] with the width axis running fastest.
#pragma once

#include <array>

#include "octsr/autodiff.hpp"

namespace octsr {

struct Conv2dSpec {
  int kernel = 3;
  int stride = 1;
  int padding = 0;
};

/// Output extent of a convolution along one axis; throws when it is empty.
std::int64_t conv_out_extent(std::int64_t in, const Conv2dSpec& spec);

/// Cross-correlation with zero padding. `weight` is [k*k, Cin, Cout] with taps
/// indexed kx + k * ky; an invalid `bias` means no bias.
Var conv2d(Tape& t, Var x, Var weight, Var bias, const Conv2dSpec& spec);

/// 2x2 average pooling, stride 2.
Var avg_pool2(Tape& t, Var x);

/// [M, Cin] x [Cin, Cout] + [Cout].
Var linear(Tape& t, Var x, Var weight, Var bias);

/// Splits a dense [B, G, G, G, C] field into image stacks of shape
/// [B*G, G, G, C]: xy-slices (z fixed, image axes x/y), yz-slices (x fixed,
/// image axes y/z) and xz-slices (y fixed, image axes x/z).
std::array<Var, 3> slice_planes(Tape& t, Var field);

}  // namespace octsr
