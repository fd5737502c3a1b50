#include <doctest.h>

#include <set>

#include "latentcast/preprocess.hpp"
#include "latentcast/synth.hpp"

using namespace latentcast;

TEST_CASE("generators are deterministic, bounded and shaped") {
    synth::SynthOptions o;
    o.sequences = 4;
    o.length = 6;
    auto check = [&](const dataio::Dataset& a, const dataio::Dataset& b, std::size_t channels) {
        REQUIRE(a.size() == 4);
        for (std::size_t s = 0; s < a.size(); ++s) {
            CHECK(a[s].length() == 6);
            for (std::size_t t = 0; t < a[s].length(); ++t) {
                const auto& f = a[s].frames[t];
                CHECK(f.height == 64);
                CHECK(f.channels == channels);
                CHECK(f.data == b[s].frames[t].data);
                for (float v : f.data) CHECK((v >= 0.0f && v <= 1.0f));
            }
        }
    };
    check(synth::moving_digits(o), synth::moving_digits(o), 1);
    check(synth::corridor_scene(o), synth::corridor_scene(o), 1);
    check(synth::action_scene(o), synth::action_scene(o), 3);

    auto other = o;
    other.seed = 1;
    CHECK(synth::moving_digits(o)[0].frames[0].data != synth::moving_digits(other)[0].frames[0].data);
}

TEST_CASE("digits move between frames") {
    synth::SynthOptions o;
    o.sequences = 3;
    auto ds = synth::moving_digits(o);
    for (const auto& seq : ds) {
        CHECK(seq.frames[0].data != seq.frames[1].data);
        double ink = 0;
        for (float v : seq.frames[0].data) ink += v;
        CHECK(ink > 50.0);
    }
    auto bin = preprocess::otsu_binarize(ds[0].frames[0]);
    CHECK(!bin.degenerate);
}

TEST_CASE("action clips carry labels and removable borders") {
    synth::SynthOptions o;
    o.sequences = 20;
    o.length = 3;
    auto ds = synth::action_scene(o, 5, 6);
    std::set<std::string> labels;
    for (const auto& s : ds) labels.insert(s.label.value());
    CHECK(labels.size() == 5);
    auto crop = preprocess::crop_black_borders(ds[0].frames[0], 10.0f / 255.0f);
    CHECK(crop.frame.height == 52);
    CHECK(crop.frame.width == 64);
}
