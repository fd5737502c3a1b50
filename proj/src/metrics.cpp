#include "latentcast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "latentcast/error.hpp"

namespace latentcast::metrics {

namespace {

void check_pair(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw Error(ErrorKind::Shape,
                    "metric operands differ in size: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    if (a.empty()) throw Error(ErrorKind::Shape, "metric of empty arrays");
}

void check_frames(const dataio::Frame& a, const dataio::Frame& b) {
    if (!a.same_shape(b))
        throw Error(ErrorKind::Shape, "frames differ in shape: " + std::to_string(a.height) + "x" +
                                          std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                                          std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                                          std::to_string(b.channels));
}

double signed_pow(double v, double e) {
    if (e == 1.0) return v;
    return v < 0.0 ? -std::pow(-v, e) : std::pow(v, e);
}

} // namespace

double mae(std::span<const float> a, std::span<const float> b) {
    check_pair(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
    return s / static_cast<double>(a.size());
}

double mse(std::span<const float> a, std::span<const float> b) {
    check_pair(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double mae(const dataio::Frame& a, const dataio::Frame& b) {
    check_frames(a, b);
    return mae(a.data, b.data);
}

double mse(const dataio::Frame& a, const dataio::Frame& b) {
    check_frames(a, b);
    return mse(a.data, b.data);
}

void SsimParams::validate() const {
    if (!(alpha > 0 && beta > 0 && gamma > 0)) throw Error(ErrorKind::Config, "SSIM exponents must be positive");
    if (!(dynamic_range > 0)) throw Error(ErrorKind::Config, "SSIM dynamic range must be positive");
    if (window_side == 0 || !(window_sigma > 0)) throw Error(ErrorKind::Config, "SSIM window must be non-empty");
    if (C1() < 0 || C2() < 0 || C3() < 0) throw Error(ErrorKind::Config, "SSIM constants must be non-negative");
}

std::vector<double> gaussian_window(std::size_t side, double sigma) {
    std::vector<double> w(side);
    const double c = (static_cast<double>(side) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < side; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

double ssim_plane(std::span<const float> x, std::span<const float> y, std::size_t height, std::size_t width,
                  const SsimParams& params) {
    params.validate();
    check_pair(x, y);
    if (x.size() != height * width) throw Error(ErrorKind::Shape, "plane size does not match its dimensions");
    const std::size_t k = params.window_side;
    if (height < k || width < k)
        throw Error(ErrorKind::Window, "frame " + std::to_string(height) + "x" + std::to_string(width) +
                                           " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) +
                                           " window");
    const auto w = gaussian_window(k, params.window_sigma);
    const std::size_t ho = height - k + 1, wo = width - k + 1;

    // Horizontal pass over the five moment images, then vertical.
    enum { MX, MY, XX, YY, XY, COUNT };
    std::vector<double> hpass(COUNT * height * wo, 0.0);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < wo; ++c) {
            double acc[COUNT] = {};
            for (std::size_t t = 0; t < k; ++t) {
                const double a = x[r * width + c + t], b = y[r * width + c + t];
                acc[MX] += w[t] * a;
                acc[MY] += w[t] * b;
                acc[XX] += w[t] * a * a;
                acc[YY] += w[t] * b * b;
                acc[XY] += w[t] * a * b;
            }
            for (int m = 0; m < COUNT; ++m) hpass[(static_cast<std::size_t>(m) * height + r) * wo + c] = acc[m];
        }

    const double C1 = params.C1(), C2 = params.C2(), C3 = params.C3();
    const bool two_term = params.alpha == 1.0 && params.beta == 1.0 && params.gamma == 1.0 && C3 == C2 / 2.0;
    double total = 0.0;
    for (std::size_t r = 0; r < ho; ++r)
        for (std::size_t c = 0; c < wo; ++c) {
            double m[COUNT] = {};
            for (std::size_t t = 0; t < k; ++t)
                for (int q = 0; q < COUNT; ++q) m[q] += w[t] * hpass[(static_cast<std::size_t>(q) * height + r + t) * wo + c];
            const double mx = m[MX], my = m[MY];
            const double vx = m[XX] - mx * mx, vy = m[YY] - my * my, cxy = m[XY] - mx * my;
            const double l = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
            if (two_term) {
                total += l * (2.0 * cxy + C2) / (vx + vy + C2);
            } else {
                const double sx = std::sqrt(std::max(vx, 0.0)), sy = std::sqrt(std::max(vy, 0.0));
                const double cc = (2.0 * sx * sy + C2) / (vx + vy + C2);
                const double ss = (cxy + C3) / (sx * sy + C3);
                total += signed_pow(l, params.alpha) * signed_pow(cc, params.beta) * signed_pow(ss, params.gamma);
            }
        }
    return total / static_cast<double>(ho * wo);
}

double ssim(const dataio::Frame& x, const dataio::Frame& y, const SsimParams& params) {
    check_frames(x, y);
    const std::size_t C = x.channels, n = x.height * x.width;
    if (C == 1) return ssim_plane(x.data, y.data, x.height, x.width, params);
    std::vector<float> px(n), py(n);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            px[i] = x.data[i * C + c];
            py[i] = y.data[i * C + c];
        }
        sum += ssim_plane(px, py, x.height, x.width, params);
    }
    return sum / static_cast<double>(C);
}

LatentStats latent_stats(std::span<const float> values, std::size_t units) {
    if (units == 0 || values.empty() || values.size() % units != 0)
        throw Error(ErrorKind::Shape, "latent population is not a whole number of samples");
    const std::size_t n = values.size() / units;
    LatentStats s;
    s.mean.assign(units, 0.0);
    s.stddev.assign(units, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t u = 0; u < units; ++u) s.mean[u] += values[r * units + u];
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t u = 0; u < units; ++u) {
            const double d = values[r * units + u] - s.mean[u];
            s.stddev[u] += d * d;
        }
    for (std::size_t u = 0; u < units; ++u) {
        s.stddev[u] = std::sqrt(s.stddev[u] / static_cast<double>(n));
        if (s.stddev[u] == 0.0) s.degenerate.push_back(u);
    }
    return s;
}

double kl_gauss(const LatentStats& stats) {
    if (stats.mean.size() != stats.stddev.size()) throw Error(ErrorKind::Shape, "mean and stddev differ in length");
    double d = 0.0;
    for (std::size_t i = 0; i < stats.mean.size(); ++i) {
        const double mu = stats.mean[i], sd = stats.stddev[i];
        if (!(sd > 0.0))
            throw Error(ErrorKind::DegenerateStats, "unit " + std::to_string(i) + " has non-positive spread");
        const double var = sd * sd;
        d += mu * mu + var - std::log(var) - 1.0;
    }
    return 0.5 * d;
}

IntervalReport bucketize_intervals(std::span<const double> scores) {
    if (scores.empty()) throw Error(ErrorKind::DegenerateRange, "no scores to bucketize");
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (!(*hi > *lo)) throw Error(ErrorKind::DegenerateRange, "all scores are equal");
    IntervalReport r;
    r.min = *lo;
    r.max = *hi;
    r.range_width = (r.max - r.min) / 4.0;
    static const char* labels[4] = {"excellent", "good", "fair", "poor"};
    for (std::size_t b = 0; b < 4; ++b) {
        r.buckets[b].label = labels[b];
        r.buckets[b].upper = r.max - static_cast<double>(b) * r.range_width;
        r.buckets[b].lower = b == 3 ? r.min : r.max - static_cast<double>(b + 1) * r.range_width;
    }
    for (double s : scores) ++r.buckets[interval_of(r, s)].count;
    return r;
}

std::size_t interval_of(const IntervalReport& report, double score) {
    for (std::size_t b = 0; b < 3; ++b)
        if (score >= report.buckets[b].lower) return b;
    return 3;
}

void to_json(nlohmann::json& j, const IntervalReport& report) {
    j = nlohmann::json{{"range_width", report.range_width}, {"min", report.min}, {"max", report.max}};
    auto& arr = j["buckets"] = nlohmann::json::array();
    for (const auto& b : report.buckets)
        arr.push_back({{"label", b.label}, {"upper", b.upper}, {"lower", b.lower}, {"count", b.count}});
}

void from_json(const nlohmann::json& j, IntervalReport& report) {
    report.range_width = j.at("range_width").get<double>();
    report.min = j.at("min").get<double>();
    report.max = j.at("max").get<double>();
    const auto& arr = j.at("buckets");
    if (arr.size() != 4) throw Error(ErrorKind::Format, "interval report needs four buckets");
    for (std::size_t b = 0; b < 4; ++b) {
        report.buckets[b].label = arr[b].at("label").get<std::string>();
        report.buckets[b].upper = arr[b].at("upper").get<double>();
        report.buckets[b].lower = arr[b].at("lower").get<double>();
        report.buckets[b].count = arr[b].at("count").get<std::size_t>();
    }
}

} // namespace latentcast::metrics
