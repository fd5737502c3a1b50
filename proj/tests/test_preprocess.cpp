#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "latentcast/error.hpp"
#include "latentcast/preprocess.hpp"

using namespace latentcast;
using namespace latentcast::preprocess;

namespace {

Frame random_frame(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
    Frame f(h, w, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (float& v : f.data) v = d(rng);
    return f;
}

FrameSequence sequence_of(std::size_t n, std::size_t h = 4, std::size_t w = 4) {
    FrameSequence s;
    s.id = "s";
    for (std::size_t t = 0; t < n; ++t) s.frames.emplace_back(h, w, 1, static_cast<float>(t) / static_cast<float>(n));
    return s;
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

// Direct two-dimensional resampler: for each output pixel, every source pixel inside
// the (scaled) support contributes sinc(u)sinc(u/3) * sinc(v)sinc(v/3); weights are
// summed explicitly and normalized, then the result is clamped.
Frame reference_resize(const Frame& f, std::size_t oh, std::size_t ow) {
    const double sy = static_cast<double>(f.height) / static_cast<double>(oh);
    const double sx = static_cast<double>(f.width) / static_cast<double>(ow);
    const double fy = std::max(1.0, sy), fx = std::max(1.0, sx);
    auto k = [](double u) { return std::abs(u) < 3.0 ? sinc(u) * sinc(u / 3.0) : 0.0; };
    Frame out(oh, ow, f.channels);
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const double cy = (static_cast<double>(oy) + 0.5) * sy, cx = (static_cast<double>(ox) + 0.5) * sx;
            for (std::size_t ch = 0; ch < f.channels; ++ch) {
                double acc = 0, wsum = 0;
                for (std::size_t y = 0; y < f.height; ++y)
                    for (std::size_t x = 0; x < f.width; ++x) {
                        const double w = k((static_cast<double>(y) + 0.5 - cy) / fy) *
                                         k((static_cast<double>(x) + 0.5 - cx) / fx);
                        acc += w * f.at(y, x, ch);
                        wsum += w;
                    }
                out.at(oy, ox, ch) = static_cast<float>(std::clamp(acc / wsum, 0.0, 1.0));
            }
        }
    return out;
}

// Otsu via minimum within-class variance over the same 256-bin histogram.
int otsu_within_class(const Frame& f) {
    std::vector<double> hist(256, 0.0);
    for (float v : f.data) hist[static_cast<std::size_t>(intensity_bin(v))] += 1.0;
    double best = 1e300;
    int arg = -1;
    for (int t = 0; t < 255; ++t) {
        double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (int b = 0; b < 256; ++b) (b <= t ? n0 : n1) += hist[b], (b <= t ? s0 : s1) += b * hist[b];
        if (n0 == 0 || n1 == 0) continue;
        const double m0 = s0 / n0, m1 = s1 / n1;
        double v0 = 0, v1 = 0;
        for (int b = 0; b < 256; ++b) {
            if (b <= t) v0 += hist[b] * (b - m0) * (b - m0);
            else v1 += hist[b] * (b - m1) * (b - m1);
        }
        const double within = v0 + v1;
        if (within < best - 1e-9) best = within, arg = t;
    }
    return arg;
}

} // namespace

TEST_CASE("length standardization") {
    auto s = standardize_length(sequence_of(100), 20);
    REQUIRE(s.length() == 20);
    CHECK(s.frames[19].data[0] == doctest::Approx(19.0 / 100.0));
    auto same = standardize_length(sequence_of(20), 20);
    CHECK(same.frames.back().data == sequence_of(20).frames.back().data);
    CHECK_THROWS_AS(standardize_length(sequence_of(19), 20), Error);
}

TEST_CASE("Lanczos resampling") {
    for (auto [h, w] : {std::pair{7, 9}, std::pair{120, 160}, std::pair{30, 20}}) {
        Frame c(static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1, 0.5f);
        auto r = resize_lanczos(c, 64, 64);
        for (float v : r.data) CHECK(std::abs(v - 0.5f) < 1e-6);
    }

    Frame step(32, 32, 1);
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 16; ++x) step.at(y, x) = 1.0f;
    auto half = resize_lanczos(step, 16, 16);
    for (std::size_t y = 0; y < 16; ++y) {
        CHECK(half.at(y, 1) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(half.at(y, 14) == doctest::Approx(0.0).epsilon(1e-6));
        // Monotone across the edge itself; the lobes beyond it ring by design.
        for (std::size_t x = 6; x < 9; ++x) CHECK(half.at(y, x) >= half.at(y, x + 1));
    }

    auto f = random_frame(120, 160, 1, 3);
    auto out = resize_lanczos(f, 64, 64);
    auto ref = reference_resize(f, 64, 64);
    double worst = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) worst = std::max(worst, std::abs(double(out.data[i]) - ref.data[i]));
    CHECK(worst < 1e-4);

    auto up = random_frame(9, 11, 3, 4);
    auto up_out = resize_lanczos(up, 16, 20);
    auto up_ref = reference_resize(up, 16, 20);
    for (std::size_t i = 0; i < up_out.data.size(); ++i) CHECK(std::abs(up_out.data[i] - up_ref.data[i]) < 1e-4);

    for (auto [in, o] : {std::pair{160, 64}, std::pair{64, 64}, std::pair{10, 64}, std::pair{7, 3}})
        for (const auto& t : lanczos_taps(static_cast<std::size_t>(in), static_cast<std::size_t>(o))) {
            double s = 0;
            for (double wv : t.weights) s += wv;
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
}

TEST_CASE("Otsu binarization") {
    Frame f(4, 4, 1);
    for (std::size_t i = 0; i < 16; ++i) f.data[i] = i % 2 ? 0.9f : 0.1f;
    auto r = otsu_binarize(f);
    CHECK(r.threshold > 0.1);
    CHECK(r.threshold < 0.9);
    std::size_t ones = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(r.frame.data[i] == (i % 2 ? 1.0f : 0.0f));
        ones += r.frame.data[i] == 1.0f;
    }
    CHECK(ones == 8);

    auto flat = otsu_binarize(Frame(5, 5, 1, 0.4f));
    CHECK(flat.degenerate);
    for (float v : flat.frame.data) CHECK(v == 0.0f);

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto rf = random_frame(8, 8, 1, seed);
        auto res = otsu_binarize(rf);
        CHECK(res.threshold_bin == otsu_within_class(rf));
        for (std::size_t i = 0; i < 64; ++i)
            CHECK(res.frame.data[i] == (intensity_bin(rf.data[i]) > res.threshold_bin ? 1.0f : 0.0f));
    }
    CHECK_THROWS_AS(otsu_binarize(Frame(3, 3, 3)), Error);
}

TEST_CASE("black border cropping") {
    Frame f(6, 10, 3);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 4; x < 10; ++x) f.at(y, x, 1) = 0.5f;
    auto r = crop_black_borders(f, 0.04f);
    CHECK(r.frame.width == 6);
    CHECK(r.frame.height == 6);
    CHECK(r.left == 4);

    auto full = random_frame(5, 5, 1, 1);
    for (float& v : full.data) v = 0.2f + 0.8f * v;
    CHECK(crop_black_borders(full).frame.data == full.data);

    auto black = crop_black_borders(Frame(4, 4, 1));
    CHECK(black.all_below_threshold);
    CHECK(black.frame.width == 4);
}

TEST_CASE("stratified subsets") {
    std::vector<LabeledId> ids;
    for (std::size_t i = 0; i < 13320; ++i) ids.push_back({"v" + std::to_string(i), "a" + std::to_string(i % 101)});
    auto sub = stratified_subset(ids, 599, 3);
    REQUIRE(sub.size() == 599);
    std::map<std::string, std::size_t> per;
    std::map<std::string, std::string> label_of;
    for (const auto& l : ids) label_of[l.id] = l.label;
    for (const auto& id : sub) ++per[label_of[id]];
    CHECK(per.size() == 101);
    std::size_t fives = 0, sixes = 0;
    for (const auto& [l, c] : per) {
        CHECK((c == 5 || c == 6));
        (c == 5 ? fives : sixes) += 1;
    }
    CHECK(sixes == 94);
    CHECK(fives == 7);
    CHECK(stratified_subset(ids, 599, 3) == sub);

    std::vector<LabeledId> small{{"a0", "A"}, {"b0", "B"}};
    for (int i = 1; i < 10; ++i) small.push_back({"a" + std::to_string(i), "A"});
    auto s4 = stratified_subset(small, 4, 1);
    std::size_t bs = 0;
    for (const auto& id : s4) bs += id[0] == 'b';
    CHECK(s4.size() == 4);
    CHECK(bs == 1);
    CHECK(stratified_subset(small, small.size(), 9).size() == small.size());
    CHECK_THROWS_AS(stratified_subset(small, 12, 1), Error);
}

TEST_CASE("temporal continuity") {
    FrameSequence moving;
    for (std::size_t t = 0; t < 20; ++t) {
        Frame f(4, 24, 1);
        f.at(2, t + 2) = 1.0f;
        moving.frames.push_back(f);
    }
    auto r = verify_continuity(moving);
    REQUIRE(r.per_lag_mean_distance.size() == 19);
    for (const auto& l : r.per_lag_mean_distance) CHECK(l.mean_distance == doctest::Approx(double(l.lag)));
    CHECK(r.monotone_fraction == 1.0);

    FrameSequence still;
    for (int t = 0; t < 20; ++t) still.frames.push_back(random_frame(5, 5, 1, 1));
    auto s = verify_continuity(still);
    for (const auto& l : s.per_lag_mean_distance) CHECK(l.mean_distance == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.monotone_fraction == 1.0);

    FrameSequence osc;
    for (std::size_t t = 0; t < 20; ++t) {
        Frame f(4, 8, 1);
        f.at(1, 3 + t % 2) = 1.0f;
        f.at(2, 3 + t % 2) = 1.0f;
        osc.frames.push_back(f);
    }
    auto o = verify_continuity(osc);
    for (const auto& l : o.per_lag_mean_distance) CHECK(l.mean_distance == doctest::Approx(l.lag % 2 ? 1.0 : 0.0));
    CHECK(o.monotone_fraction == doctest::Approx(0.5));

    auto gap = moving;
    gap.frames[5] = Frame(4, 24, 1);
    auto g = verify_continuity(gap);
    REQUIRE(g.skipped_frames.size() == 1);
    CHECK(g.skipped_frames[0] == 5);
}

TEST_CASE("full sequence preprocessing") {
    FrameSequence seq;
    for (int t = 0; t < 25; ++t) {
        Frame f(120, 160, 3);
        for (std::size_t y = 10; y < 110; ++y)
            for (std::size_t x = 0; x < 160; ++x) f.at(y, x, 0) = static_cast<float>((x + y + t) % 50) / 50.0f;
        seq.frames.push_back(f);
    }
    PreprocessSpec spec;
    spec.crop_borders = true;
    auto out = preprocess_sequence(seq, spec);
    CHECK(out.length() == 20);
    CHECK(out.frames[0].height == 64);
    CHECK(out.frames[0].channels == 3);

    FrameSequence gray;
    for (int t = 0; t < 20; ++t) gray.frames.push_back(random_frame(64, 64, 1, static_cast<std::uint64_t>(t)));
    spec.binarize = true;
    spec.crop_borders = false;
    auto bin = preprocess_sequence(gray, spec);
    for (const auto& f : bin.frames)
        for (float v : f.data) CHECK((v == 0.0f || v == 1.0f));
    PreprocessSpec bad;
    bad.target_length = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
}
