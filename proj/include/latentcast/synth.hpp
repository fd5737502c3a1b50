#pragma once

#include <cstdint>

#include "latentcast/dataio.hpp"

// Procedural stand-ins for the three video corpora, used for tests, the
// acceptance suite and offline demos. Values lie in [0,1].
namespace latentcast::synth {

struct SynthOptions {
    std::size_t sequences = 64;
    std::size_t length = 20;
    std::size_t height = 64;
    std::size_t width = 64;
    std::uint64_t seed = 0;
};

/// 28x28 anti-aliased stroke glyph of a decimal digit, with a random slant and scale.
dataio::Frame render_digit(int digit, std::uint64_t seed);

/// Two stroke digits bouncing inside the frame, one channel, gray edges (binarize downstream).
dataio::Dataset moving_digits(const SynthOptions& options, std::size_t digits_per_frame = 2);

/// Fixed-camera grayscale corridor with a few slowly walking figures and sensor noise.
dataio::Dataset corridor_scene(const SynthOptions& options);

/// Color clips of a moving actor over a panning textured background. Each sequence
/// is labelled with one of `classes` motion patterns; `border` rows of black
/// letterboxing are added top and bottom.
dataio::Dataset action_scene(const SynthOptions& options, std::size_t classes = 10, std::size_t border = 0);

} // namespace latentcast::synth
