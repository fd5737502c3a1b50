#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "latentcast/dataio.hpp"

namespace latentcast::preprocess {

using dataio::Frame;
using dataio::FrameSequence;

struct PreprocessSpec {
    std::size_t target_length = 20;
    std::size_t target_height = 64;
    std::size_t target_width = 64;
    bool binarize = false;
    bool crop_borders = false;
    float border_threshold = 10.0f / 255.0f;

    /// target_length >= 2, both target sides >= 8.
    void validate() const;
};

FrameSequence standardize_length(const FrameSequence& seq, std::size_t target_length);

/// Separable Lanczos-3 resampling. When shrinking, the kernel is stretched by the
/// scale factor so it also acts as the anti-aliasing filter. Output is clamped to [0,1].
Frame resize_lanczos(const Frame& frame, std::size_t target_height, std::size_t target_width);

/// Lanczos-3 taps for one output coordinate along an axis; exposed for tests.
struct ResampleTaps {
    std::ptrdiff_t first = 0;  // source index of weights[0]
    std::vector<double> weights;
};
std::vector<ResampleTaps> lanczos_taps(std::size_t in_size, std::size_t out_size);
double lanczos3(double x);

struct BinarizeResult {
    Frame frame;
    int threshold_bin = 0;    // pixels whose bin exceeds this become 1
    double threshold = 0.0;   // threshold_bin / 255
    bool degenerate = false;  // histogram had a single occupied bin
};

/// Histogram bin of an intensity in [0,1]: round(v * 255).
int intensity_bin(float v);
BinarizeResult otsu_binarize(const Frame& frame);

struct CropResult {
    Frame frame;
    std::size_t top = 0, bottom = 0, left = 0, right = 0;
    bool all_below_threshold = false;
};
CropResult crop_black_borders(const Frame& frame, float threshold = 10.0f / 255.0f);

struct LabeledId {
    std::string id;
    std::string label;
};

/// Largest-remainder allocation with per-label caps: per-label counts differ by at
/// most one except where a label runs out of members.
std::vector<std::string> stratified_subset(std::span<const LabeledId> ids_with_labels, std::size_t m,
                                           std::uint64_t seed);
/// Uniform random subset of size m, in input order.
std::vector<std::string> random_subset(std::span<const std::string> ids, std::size_t m, std::uint64_t seed);

struct LagDistance {
    std::size_t lag = 0;
    double mean_distance = 0.0;
    std::size_t pairs = 0;
};

struct ContinuityReport {
    std::string sequence_id;
    std::vector<LagDistance> per_lag_mean_distance;
    double monotone_fraction = 0.0;
    std::vector<std::size_t> skipped_frames;  // frames with zero total intensity
};

ContinuityReport verify_continuity(const FrameSequence& seq);

void to_json(nlohmann::json& j, const ContinuityReport& report);

/// Truncate, crop (before resizing), resize, binarize per `spec`.
FrameSequence preprocess_sequence(const FrameSequence& seq, const PreprocessSpec& spec);

} // namespace latentcast::preprocess
