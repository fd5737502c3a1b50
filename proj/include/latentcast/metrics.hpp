#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/dataio.hpp"

namespace latentcast::metrics {

/// Mean absolute error over every element.
double mae(std::span<const float> a, std::span<const float> b);
double mae(const dataio::Frame& a, const dataio::Frame& b);
/// Mean squared error over every element.
double mse(std::span<const float> a, std::span<const float> b);
double mse(const dataio::Frame& a, const dataio::Frame& b);

struct SsimParams {
    double alpha = 1.0, beta = 1.0, gamma = 1.0;
    double dynamic_range = 1.0;
    std::size_t window_side = 11;
    double window_sigma = 1.5;
    // Unset constants follow the dynamic range: C1 = (0.01 L)^2, C2 = (0.03 L)^2, C3 = C2 / 2.
    std::optional<double> c1, c2, c3;

    double C1() const { return c1.value_or(0.01 * dynamic_range * 0.01 * dynamic_range); }
    double C2() const { return c2.value_or(0.03 * dynamic_range * 0.03 * dynamic_range); }
    double C3() const { return c3.value_or(C2() / 2.0); }
    void validate() const;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window(std::size_t side, double sigma);

/// SSIM of one channel plane (row-major, height x width) averaged over all
/// windows that fit entirely inside the image.
double ssim_plane(std::span<const float> x, std::span<const float> y, std::size_t height, std::size_t width,
                  const SsimParams& params = {});
/// Color frames score as the mean of the per-channel values.
double ssim(const dataio::Frame& x, const dataio::Frame& y, const SsimParams& params = {});

struct LatentStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::size_t> degenerate;  // units with zero spread
};

/// Per-unit population statistics of `samples` rows of `units` values each.
LatentStats latent_stats(std::span<const float> values, std::size_t units);

/// KL divergence of the per-unit Gaussians from N(0, 1), summed over units.
double kl_gauss(const LatentStats& stats);

struct IntervalBucket {
    std::string label;
    double upper = 0.0;
    double lower = 0.0;
    std::size_t count = 0;
};

struct IntervalReport {
    std::array<IntervalBucket, 4> buckets;  // best first
    double range_width = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Four equal-width intervals over [min, max]; scores on a boundary belong to
/// the better interval.
IntervalReport bucketize_intervals(std::span<const double> scores);
/// Index (0 = best) of the interval a score falls into.
std::size_t interval_of(const IntervalReport& report, double score);

void to_json(nlohmann::json& j, const IntervalReport& report);
void from_json(const nlohmann::json& j, IntervalReport& report);

} // namespace latentcast::metrics
