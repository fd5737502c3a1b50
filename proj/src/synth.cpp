#include "latentcast/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "latentcast/error.hpp"

namespace latentcast::synth {

using dataio::Dataset;
using dataio::Frame;

namespace {

struct Pt {
    double x, y;
};
using Stroke = std::vector<Pt>;

std::vector<Pt> arc(double cx, double cy, double rx, double ry, double a0, double a1, int n = 10) {
    std::vector<Pt> out;
    for (int i = 0; i <= n; ++i) {
        const double a = a0 + (a1 - a0) * i / n;
        out.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return out;
}

// Glyph strokes in a unit box, y pointing down.
std::vector<Stroke> glyph(int d) {
    constexpr double pi = std::numbers::pi;
    switch (d) {
    case 0: return {arc(0.5, 0.5, 0.28, 0.4, 0, 2 * pi, 20)};
    case 1: return {{{0.35, 0.25}, {0.55, 0.1}, {0.55, 0.9}}};
    case 2: {
        auto s = arc(0.5, 0.32, 0.25, 0.22, pi, 2.25 * pi, 10);
        s.push_back({0.22, 0.9});
        s.push_back({0.8, 0.9});
        return {s};
    }
    case 3: {
        auto a = arc(0.48, 0.3, 0.24, 0.2, 1.1 * pi, 2.5 * pi, 10);
        auto b = arc(0.48, 0.7, 0.27, 0.2, 1.5 * pi, 2.9 * pi, 10);
        a.insert(a.end(), b.begin(), b.end());
        return {a};
    }
    case 4: return {{{0.62, 0.9}, {0.62, 0.1}, {0.2, 0.65}, {0.82, 0.65}}};
    case 5: {
        Stroke s{{0.75, 0.1}, {0.3, 0.1}, {0.27, 0.45}};
        auto b = arc(0.48, 0.65, 0.27, 0.25, 1.2 * pi, 2.8 * pi, 12);
        s.insert(s.end(), b.begin(), b.end());
        return {s};
    }
    case 6: {
        Stroke s{{0.68, 0.1}, {0.35, 0.45}};
        auto b = arc(0.5, 0.67, 0.25, 0.23, 0, 2 * pi, 16);
        return {s, b};
    }
    case 7: return {{{0.2, 0.1}, {0.8, 0.1}, {0.42, 0.9}}};
    case 8: return {arc(0.5, 0.29, 0.2, 0.19, 0, 2 * pi, 16), arc(0.5, 0.7, 0.25, 0.21, 0, 2 * pi, 16)};
    case 9: {
        auto a = arc(0.5, 0.33, 0.24, 0.22, 0, 2 * pi, 16);
        return {a, {{0.74, 0.33}, {0.6, 0.9}}};
    }
    }
    throw Error(ErrorKind::Config, "digit must be 0..9");
}

double segment_distance(Pt p, Pt a, Pt b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy);
}

std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

void check(const SynthOptions& o) {
    if (o.sequences == 0 || o.length == 0) throw Error(ErrorKind::Config, "synthetic dataset must be non-empty");
    if (o.height < 32 || o.width < 32) throw Error(ErrorKind::Config, "synthetic frames must be at least 32x32");
}

// Bounces a coordinate inside [0, limit].
void bounce(double& p, double& v, double limit) {
    p += v;
    if (p < 0) {
        p = -p;
        v = -v;
    }
    if (p > limit) {
        p = 2 * limit - p;
        v = -v;
    }
}

} // namespace

Frame render_digit(int digit, std::uint64_t seed) {
    auto rng = rng_for(seed, 1000 + static_cast<std::uint64_t>(digit));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double slant = (u(rng) - 0.5) * 0.35;
    const double scale = 0.8 + 0.15 * u(rng);
    const double width = 1.6 + 0.8 * u(rng);
    const auto strokes = glyph(digit);
    constexpr std::size_t side = 28;
    Frame f(side, side, 1);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            // Pixel centre back into glyph space.
            const double gy = ((y + 0.5) / side - 0.5) / scale + 0.5;
            const double gx = ((x + 0.5) / side - 0.5) / scale + 0.5 + slant * (gy - 0.5);
            double best = 1e9;
            for (const auto& s : strokes)
                for (std::size_t i = 0; i + 1 < s.size(); ++i)
                    best = std::min(best, segment_distance({gx, gy}, s[i], s[i + 1]));
            const double px = best * side * scale;
            f.at(y, x) = static_cast<float>(std::clamp(width - px + 0.5, 0.0, 1.0));
        }
    return f;
}

Dataset moving_digits(const SynthOptions& o, std::size_t digits_per_frame) {
    check(o);
    constexpr std::size_t side = 28;
    Dataset out(o.sequences);
    for (std::size_t s = 0; s < o.sequences; ++s) {
        auto rng = rng_for(o.seed, s);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        struct Mover {
            Frame glyph;
            double x, y, vx, vy;
        };
        std::vector<Mover> movers;
        const double lx = static_cast<double>(o.width - side), ly = static_cast<double>(o.height - side);
        for (std::size_t d = 0; d < digits_per_frame; ++d) {
            const int digit = static_cast<int>(rng() % 10);
            const double angle = u(rng) * 2 * std::numbers::pi;
            const double speed = 2.0 + 2.0 * u(rng);
            movers.push_back({render_digit(digit, rng()), u(rng) * lx, u(rng) * ly, speed * std::cos(angle),
                              speed * std::sin(angle)});
        }
        out[s].id = dataio::sequence_id(s);
        for (std::size_t t = 0; t < o.length; ++t) {
            Frame f(o.height, o.width, 1);
            for (auto& m : movers) {
                const auto ox = static_cast<std::size_t>(std::lround(m.x)), oy = static_cast<std::size_t>(std::lround(m.y));
                for (std::size_t y = 0; y < side; ++y)
                    for (std::size_t x = 0; x < side; ++x)
                        f.at(oy + y, ox + x) = std::max(f.at(oy + y, ox + x), m.glyph.at(y, x));
                bounce(m.x, m.vx, lx);
                bounce(m.y, m.vy, ly);
            }
            out[s].frames.push_back(std::move(f));
        }
    }
    return out;
}

Dataset corridor_scene(const SynthOptions& o) {
    check(o);
    Dataset out(o.sequences);
    const double H = static_cast<double>(o.height), W = static_cast<double>(o.width);
    for (std::size_t s = 0; s < o.sequences; ++s) {
        auto rng = rng_for(o.seed, 50000 + s);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, 0.01);

        // Static background: floor gradient, wall band, a few shelves.
        std::vector<float> bg(o.height * o.width);
        const double horizon = H * (0.35 + 0.1 * u(rng));
        const double wall = 0.35 + 0.2 * u(rng), floor_lo = 0.3 + 0.2 * u(rng);
        std::vector<std::array<double, 5>> shelves;
        for (int i = 0; i < 3; ++i) shelves.push_back({u(rng) * W, u(rng) * horizon, 4 + 10 * u(rng), 4 + 8 * u(rng), 0.2 + 0.6 * u(rng)});
        for (std::size_t y = 0; y < o.height; ++y)
            for (std::size_t x = 0; x < o.width; ++x) {
                double v = y < horizon ? wall + 0.05 * std::sin(x * 0.4) : floor_lo + 0.25 * (y - horizon) / (H - horizon);
                for (const auto& r : shelves)
                    if (x >= r[0] && x < r[0] + r[2] && y >= r[1] && y < r[1] + r[3]) v = r[4];
                bg[y * o.width + x] = static_cast<float>(v);
            }

        struct Walker {
            double x, y, vx, vy, h, shade;
        };
        std::vector<Walker> walkers;
        const std::size_t count = 1 + rng() % 3;
        for (std::size_t i = 0; i < count; ++i) {
            const double h = 14 + 10 * u(rng);
            walkers.push_back({u(rng) * W, horizon + u(rng) * (H - horizon - h * 0.4), (u(rng) - 0.5) * 3.0,
                               (u(rng) - 0.5) * 1.0, h, u(rng) < 0.5 ? 0.1 + 0.15 * u(rng) : 0.75 + 0.2 * u(rng)});
        }

        out[s].id = dataio::sequence_id(s);
        for (std::size_t t = 0; t < o.length; ++t) {
            Frame f(o.height, o.width, 1);
            for (std::size_t i = 0; i < bg.size(); ++i) f.data[i] = bg[i];
            for (auto& w : walkers) {
                const double head_r = w.h * 0.12;
                const double body_cy = w.y - w.h * 0.35, body_rx = w.h * 0.16, body_ry = w.h * 0.32;
                const double head_cy = w.y - w.h * 0.8;
                const double swing = std::sin(static_cast<double>(t) * 0.9) * w.h * 0.08;
                for (std::size_t y = 0; y < o.height; ++y)
                    for (std::size_t x = 0; x < o.width; ++x) {
                        const double dx = x + 0.5 - w.x, dy = y + 0.5;
                        const bool body = std::pow(dx / body_rx, 2) + std::pow((dy - body_cy) / body_ry, 2) < 1.0;
                        const bool head = std::hypot(dx, dy - head_cy) < head_r;
                        const bool legs = dy > w.y - w.h * 0.1 && dy < w.y + w.h * 0.15 &&
                                          (std::abs(dx - swing) < 1.2 || std::abs(dx + swing) < 1.2);
                        if (body || head || legs) f.at(y, x) = static_cast<float>(head ? w.shade + 0.1 : w.shade);
                    }
                w.x += w.vx;
                w.y += w.vy;
                if (w.x < 0 || w.x > W) w.vx = -w.vx;
                if (w.y < horizon || w.y > H) w.vy = -w.vy;
            }
            for (auto& v : f.data) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
            out[s].frames.push_back(std::move(f));
        }
    }
    return out;
}

Dataset action_scene(const SynthOptions& o, std::size_t classes, std::size_t border) {
    check(o);
    if (classes == 0) throw Error(ErrorKind::Config, "need at least one class");
    if (2 * border >= o.height) throw Error(ErrorKind::Config, "border leaves no picture");
    Dataset out(o.sequences);
    const double H = static_cast<double>(o.height - 2 * border), W = static_cast<double>(o.width);
    for (std::size_t s = 0; s < o.sequences; ++s) {
        auto rng = rng_for(o.seed, 90000 + s);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t label = s % classes;
        std::array<double, 3> base{u(rng), u(rng), u(rng)}, actor{u(rng), u(rng), u(rng)};
        for (auto& a : actor) a = a < 0.5 ? a * 0.4 : 0.6 + a * 0.4;
        const double fx = 0.1 + 0.2 * u(rng), fy = 0.1 + 0.2 * u(rng);
        const double pan = (u(rng) - 0.5) * 1.5;
        const double cx0 = W * (0.3 + 0.4 * u(rng)), cy0 = H * (0.3 + 0.4 * u(rng));
        const double amp = 6 + 8 * u(rng), r = 5 + 4 * u(rng);
        const double phase = u(rng) * 2 * std::numbers::pi;
        // The label picks the motion: direction of travel or a periodic path.
        const double theta = 2 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(classes);

        dataio::FrameSequence seq;
        seq.id = dataio::sequence_id(s);
        seq.label = "class_" + std::to_string(label);
        for (std::size_t t = 0; t < o.length; ++t) {
            const double tt = static_cast<double>(t);
            double cx, cy;
            if (label % 2 == 0) {
                cx = cx0 + std::cos(theta) * 1.5 * (tt - o.length / 2.0);
                cy = cy0 + std::sin(theta) * 1.5 * (tt - o.length / 2.0);
            } else {
                cx = cx0 + amp * std::cos(theta + 0.5 * tt + phase);
                cy = cy0 + amp * std::sin(0.5 * tt + phase) * std::sin(theta);
            }
            Frame f(o.height, o.width, 3, 0.0f);
            for (std::size_t y = border; y < o.height - border; ++y)
                for (std::size_t x = 0; x < o.width; ++x) {
                    const double py = static_cast<double>(y - border), px = static_cast<double>(x) + pan * tt;
                    const double tex = 0.5 + 0.25 * std::sin(px * fx) * std::cos(py * fy) + 0.1 * std::sin((px + py) * 0.5);
                    const bool on = std::hypot(x + 0.5 - cx, py + 0.5 - cy) < r;
                    for (std::size_t c = 0; c < 3; ++c) {
                        const double v = on ? actor[c] : base[c] * 0.6 + 0.4 * tex;
                        f.at(y, x, c) = static_cast<float>(std::clamp(v, 0.05, 1.0));
                    }
                }
            seq.frames.push_back(std::move(f));
        }
        out[s] = std::move(seq);
    }
    return out;
}

} // namespace latentcast::synth
