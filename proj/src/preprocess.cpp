#include "latentcast/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "latentcast/error.hpp"
#include "latentcast/log.hpp"

namespace latentcast::preprocess {

void PreprocessSpec::validate() const {
    if (target_length < 2) throw Error(ErrorKind::Config, "target length must be at least 2");
    if (target_height < 8 || target_width < 8) throw Error(ErrorKind::Config, "target size must be at least 8x8");
    if (!(border_threshold >= 0.0f && border_threshold <= 1.0f))
        throw Error(ErrorKind::Config, "border threshold must lie in [0, 1]");
}

FrameSequence standardize_length(const FrameSequence& seq, std::size_t target_length) {
    if (seq.length() < target_length)
        throw Error(ErrorKind::TooShort, "sequence '" + seq.id + "' has " + std::to_string(seq.length()) +
                                             " frames, needs " + std::to_string(target_length));
    FrameSequence out;
    out.id = seq.id;
    out.label = seq.label;
    out.frames.assign(seq.frames.begin(), seq.frames.begin() + static_cast<std::ptrdiff_t>(target_length));
    return out;
}

// ---------------------------------------------------------------------------
// Lanczos-3

double lanczos3(double x) {
    constexpr double a = 3.0;
    x = std::abs(x);
    if (x >= a) return 0.0;
    if (x < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return a * std::sin(px) * std::sin(px / a) / (px * px);
}

std::vector<ResampleTaps> lanczos_taps(std::size_t in_size, std::size_t out_size) {
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    const double stretch = std::max(scale, 1.0);
    const double support = 3.0 * stretch;
    std::vector<ResampleTaps> taps(out_size);
    for (std::size_t o = 0; o < out_size; ++o) {
        const double center = (static_cast<double>(o) + 0.5) * scale;
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::floor(center - support)));
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(in_size),
                                                 static_cast<std::ptrdiff_t>(std::ceil(center + support)));
        auto& t = taps[o];
        t.first = lo;
        double sum = 0.0;
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
            const double w = lanczos3((static_cast<double>(i) + 0.5 - center) / stretch);
            t.weights.push_back(w);
            sum += w;
        }
        for (auto& w : t.weights) w /= sum;
    }
    return taps;
}

Frame resize_lanczos(const Frame& frame, std::size_t target_height, std::size_t target_width) {
    if (frame.height == 0 || frame.width == 0) throw Error(ErrorKind::Size, "cannot resize an empty frame");
    if (target_height == 0 || target_width == 0) throw Error(ErrorKind::Size, "target size must be at least 1x1");
    const std::size_t c = frame.channels;
    const auto htaps = lanczos_taps(frame.width, target_width);
    const auto vtaps = lanczos_taps(frame.height, target_height);

    // Horizontal pass: height x target_width x c, kept in double and unclamped.
    std::vector<double> mid(frame.height * target_width * c, 0.0);
    for (std::size_t y = 0; y < frame.height; ++y) {
        for (std::size_t x = 0; x < target_width; ++x) {
            const auto& t = htaps[x];
            for (std::size_t k = 0; k < t.weights.size(); ++k) {
                const std::size_t sx = static_cast<std::size_t>(t.first) + k;
                for (std::size_t ch = 0; ch < c; ++ch)
                    mid[(y * target_width + x) * c + ch] += t.weights[k] * frame.at(y, sx, ch);
            }
        }
    }
    Frame out(target_height, target_width, c);
    for (std::size_t y = 0; y < target_height; ++y) {
        const auto& t = vtaps[y];
        for (std::size_t x = 0; x < target_width; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    const std::size_t sy = static_cast<std::size_t>(t.first) + k;
                    acc += t.weights[k] * mid[(sy * target_width + x) * c + ch];
                }
                out.at(y, x, ch) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Otsu

int intensity_bin(float v) {
    const long bin = std::lround(static_cast<double>(v) * 255.0);
    return static_cast<int>(std::clamp<long>(bin, 0, 255));
}

BinarizeResult otsu_binarize(const Frame& frame) {
    if (frame.channels != 1) throw Error(ErrorKind::Channel, "Otsu binarization needs a single-channel frame");
    std::array<double, 256> hist{};
    for (float v : frame.data) hist[static_cast<std::size_t>(intensity_bin(v))] += 1.0;

    const double total = static_cast<double>(frame.size());
    double sum_total = 0.0;
    for (int i = 0; i < 256; ++i) sum_total += i * hist[static_cast<std::size_t>(i)];

    double w0 = 0.0, sum0 = 0.0;
    double best = -1.0;
    int best_t = -1;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[static_cast<std::size_t>(t)];
        sum0 += t * hist[static_cast<std::size_t>(t)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_total - sum0) / w1;
        const double omega0 = w0 / total, omega1 = w1 / total;
        const double between = omega0 * omega1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }

    BinarizeResult result;
    result.frame = Frame(frame.height, frame.width, 1);
    if (best_t < 0) {
        log::warn("Otsu: degenerate histogram (constant frame), emitting an all-zero frame");
        result.degenerate = true;
        result.threshold_bin = 255;
        result.threshold = 1.0;
        return result;
    }
    result.threshold_bin = best_t;
    result.threshold = best_t / 255.0;
    for (std::size_t i = 0; i < frame.size(); ++i)
        result.frame.data[i] = intensity_bin(frame.data[i]) > best_t ? 1.0f : 0.0f;
    return result;
}

// ---------------------------------------------------------------------------

CropResult crop_black_borders(const Frame& frame, float threshold) {
    std::vector<float> row_max(frame.height, 0.0f), col_max(frame.width, 0.0f);
    for (std::size_t y = 0; y < frame.height; ++y)
        for (std::size_t x = 0; x < frame.width; ++x)
            for (std::size_t c = 0; c < frame.channels; ++c) {
                const float v = frame.at(y, x, c);
                row_max[y] = std::max(row_max[y], v);
                col_max[x] = std::max(col_max[x], v);
            }

    CropResult result;
    const auto bright = [threshold](float v) { return v >= threshold; };
    const auto first_row = std::find_if(row_max.begin(), row_max.end(), bright);
    if (first_row == row_max.end()) {
        log::warn("border crop: whole frame is below threshold, leaving it unchanged");
        result.frame = frame;
        result.all_below_threshold = true;
        return result;
    }
    result.top = static_cast<std::size_t>(first_row - row_max.begin());
    result.bottom = static_cast<std::size_t>(std::find_if(row_max.rbegin(), row_max.rend(), bright) - row_max.rbegin());
    result.left = static_cast<std::size_t>(std::find_if(col_max.begin(), col_max.end(), bright) - col_max.begin());
    result.right = static_cast<std::size_t>(std::find_if(col_max.rbegin(), col_max.rend(), bright) - col_max.rbegin());

    const std::size_t h = frame.height - result.top - result.bottom;
    const std::size_t w = frame.width - result.left - result.right;
    result.frame = Frame(h, w, frame.channels);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < frame.channels; ++c)
                result.frame.at(y, x, c) = frame.at(y + result.top, x + result.left, c);
    return result;
}

// ---------------------------------------------------------------------------

std::vector<std::string> stratified_subset(std::span<const LabeledId> ids_with_labels, std::size_t m,
                                           std::uint64_t seed) {
    if (m > ids_with_labels.size())
        throw Error(ErrorKind::Size, "requested " + std::to_string(m) + " of " +
                                         std::to_string(ids_with_labels.size()) + " sequences");
    std::mt19937_64 rng(seed);

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ids_with_labels.size(); ++i) groups[ids_with_labels[i].label].push_back(i);
    for (auto& [label, members] : groups) std::shuffle(members.begin(), members.end(), rng);

    std::map<std::string, std::size_t> quota;
    std::vector<std::string> open;
    for (const auto& [label, members] : groups) open.push_back(label);
    std::size_t budget = m;

    // Water-filling: labels too small for the current share take everything they have.
    bool capped_any = true;
    while (capped_any && !open.empty()) {
        capped_any = false;
        const std::size_t base = budget / open.size();
        std::vector<std::string> still_open;
        for (const auto& label : open) {
            const std::size_t pop = groups[label].size();
            if (pop <= base) {
                quota[label] = pop;
                budget -= pop;
                capped_any = true;
            } else {
                still_open.push_back(label);
            }
        }
        open = std::move(still_open);
    }
    if (!open.empty()) {
        const std::size_t base = budget / open.size();
        std::size_t extra = budget % open.size();
        std::shuffle(open.begin(), open.end(), rng);
        for (const auto& label : open) {
            quota[label] = base + (extra > 0 ? 1 : 0);
            if (extra > 0) --extra;
        }
    }

    std::vector<bool> chosen(ids_with_labels.size(), false);
    for (const auto& [label, members] : groups)
        for (std::size_t k = 0; k < quota[label]; ++k) chosen[members[k]] = true;
    std::vector<std::string> out;
    out.reserve(m);
    for (std::size_t i = 0; i < ids_with_labels.size(); ++i)
        if (chosen[i]) out.push_back(ids_with_labels[i].id);
    return out;
}

std::vector<std::string> random_subset(std::span<const std::string> ids, std::size_t m, std::uint64_t seed) {
    if (m > ids.size()) throw Error(ErrorKind::Size, "subset larger than population");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> chosen(ids.size(), false);
    for (std::size_t i = 0; i < m; ++i) chosen[order[i]] = true;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (chosen[i]) out.push_back(ids[i]);
    return out;
}

// ---------------------------------------------------------------------------

ContinuityReport verify_continuity(const FrameSequence& seq) {
    const std::size_t t_len = seq.length();
    if (t_len < 3) throw Error(ErrorKind::TooShort, "continuity check needs at least 3 frames");

    struct Centroid {
        double y = 0, x = 0;
        bool valid = false;
    };
    std::vector<Centroid> centroids(t_len);
    ContinuityReport report;
    report.sequence_id = seq.id;
    for (std::size_t t = 0; t < t_len; ++t) {
        const auto& f = seq.frames[t];
        double mass = 0, my = 0, mx = 0;
        for (std::size_t y = 0; y < f.height; ++y)
            for (std::size_t x = 0; x < f.width; ++x) {
                double v = 0;
                for (std::size_t c = 0; c < f.channels; ++c) v += f.at(y, x, c);
                v /= static_cast<double>(f.channels);
                mass += v;
                my += v * static_cast<double>(y);
                mx += v * static_cast<double>(x);
            }
        if (mass > 0) {
            centroids[t] = {my / mass, mx / mass, true};
        } else {
            report.skipped_frames.push_back(t);
        }
    }
    if (!report.skipped_frames.empty())
        log::warn("continuity: " + std::to_string(report.skipped_frames.size()) + " blank frame(s) in '" + seq.id +
                  "' skipped");

    for (std::size_t k = 1; k < t_len; ++k) {
        LagDistance lag{k, 0.0, 0};
        for (std::size_t t = 0; t + k < t_len; ++t) {
            const auto& a = centroids[t];
            const auto& b = centroids[t + k];
            if (!a.valid || !b.valid) continue;
            lag.mean_distance += std::hypot(b.y - a.y, b.x - a.x);
            ++lag.pairs;
        }
        if (lag.pairs > 0) lag.mean_distance /= static_cast<double>(lag.pairs);
        report.per_lag_mean_distance.push_back(lag);
    }
    const auto& d = report.per_lag_mean_distance;
    std::size_t nondecreasing = 0;
    for (std::size_t i = 0; i + 1 < d.size(); ++i)
        if (d[i + 1].mean_distance >= d[i].mean_distance - 1e-12) ++nondecreasing;
    report.monotone_fraction = d.size() < 2 ? 1.0 : static_cast<double>(nondecreasing) / static_cast<double>(d.size() - 1);
    return report;
}

void to_json(nlohmann::json& j, const ContinuityReport& report) {
    nlohmann::json lags = nlohmann::json::array();
    for (const auto& l : report.per_lag_mean_distance)
        lags.push_back({{"lag", l.lag}, {"mean_distance", l.mean_distance}, {"pairs", l.pairs}});
    j = nlohmann::json{{"sequence_id", report.sequence_id},
                       {"per_lag_mean_distance", lags},
                       {"monotone_fraction", report.monotone_fraction},
                       {"skipped_frames", report.skipped_frames}};
}

FrameSequence preprocess_sequence(const FrameSequence& seq, const PreprocessSpec& spec) {
    spec.validate();
    auto out = standardize_length(seq, spec.target_length);
    for (auto& frame : out.frames) {
        if (spec.crop_borders) frame = crop_black_borders(frame, spec.border_threshold).frame;
        if (frame.height != spec.target_height || frame.width != spec.target_width)
            frame = resize_lanczos(frame, spec.target_height, spec.target_width);
        if (spec.binarize) frame = otsu_binarize(frame).frame;
    }
    return out;
}

} // namespace latentcast::preprocess
