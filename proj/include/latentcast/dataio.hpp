#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace latentcast::dataio {

/// One image, row-major H x W x C. Values are in [0,1] unless `raw` is set,
/// in which case they hold integer intensities 0..255.
struct Frame {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<float> data;
    bool raw = false;

    Frame() = default;
    Frame(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    std::size_t size() const { return data.size(); }
    bool same_shape(const Frame& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
    float& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c = 0) const { return data[(y * width + x) * channels + c]; }
};

struct FrameSequence {
    std::string id;
    std::vector<Frame> frames;
    std::optional<std::string> label;

    std::size_t length() const { return frames.size(); }
    /// Throws InconsistentSequence if the frames disagree on (h, w, c).
    void validate() const;
};

using Dataset = std::vector<FrameSequence>;

// ---------------------------------------------------------------------------
// .npy v1 container

enum class Dtype { U8, F32, F64 };

struct ArrayHeader {
    Dtype dtype = Dtype::F32;
    std::vector<std::size_t> shape;
    std::size_t data_offset = 0;

    std::size_t element_count() const;
    std::size_t element_size() const;
};

struct ArrayFile {
    std::vector<std::size_t> shape;
    Dtype source_dtype = Dtype::F32;
    /// u8 payloads are rescaled by 1/255; float payloads are passed through.
    std::vector<float> values;
    /// Axis whose extent equals the expected sequence length, if one was found.
    std::optional<std::size_t> time_axis;
};

struct ArrayParseOptions {
    std::size_t sequence_length = 20;
    std::optional<std::size_t> time_axis_override;
};

ArrayHeader parse_array_header(std::span<const std::uint8_t> bytes);
ArrayFile parse_array_file(std::span<const std::uint8_t> bytes, const ArrayParseOptions& options = {});
ArrayFile read_array_file(const std::filesystem::path& path, const ArrayParseOptions& options = {});

/// Serializes float32, little-endian, C order.
std::vector<std::uint8_t> encode_array_file(std::span<const std::size_t> shape, std::span<const float> values);
void write_array_file(const std::filesystem::path& path, std::span<const std::size_t> shape,
                      std::span<const float> values);

/// First of the two leading axes whose extent is `length`. When both match, rank-4
/// arrays are taken as time-major (the Moving MNIST layout) and rank-5 arrays as
/// the (sequences, time, h, w, c) interchange layout.
std::optional<std::size_t> detect_time_axis(std::span<const std::size_t> shape, std::size_t length = 20);

/// Builds sequences from a rank-4 (T,N,H,W)/(N,T,H,W) or rank-5 (N,T,H,W,C) array.
/// Rank-5 arrays fall back to time axis 1 when detection found none.
Dataset dataset_from_array(const ArrayFile& array);
/// Packs a dataset as (num_sequences, T, H, W, C); all sequences must agree in shape.
ArrayFile dataset_to_array(const Dataset& dataset);

Dataset load_dataset(const std::filesystem::path& path, const ArrayParseOptions& options = {});
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

std::string sequence_id(std::size_t index);

// ---------------------------------------------------------------------------
// Binary PNM (P5 grayscale / P6 color, maxval 255)

Frame parse_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Frame& frame);
void write_pnm(const std::filesystem::path& path, const Frame& frame);

/// Loads f000.pgm, f001.pgm, ... (or .ppm for channels = 3) ordered by the numeric
/// index embedded in the file name.
FrameSequence load_frame_directory(const std::filesystem::path& dir, std::size_t channels);

// ---------------------------------------------------------------------------
// Sequence-preserving splits

struct DatasetSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
};

/// test = floor(n * test_fraction), val = floor(rest * val_fraction); partitions
/// keep the input order of ids and are a deterministic function of the seed.
DatasetSplit split_sequences(std::span<const std::string> ids, double test_fraction, double val_fraction,
                             std::uint64_t seed);

void to_json(nlohmann::json& j, const DatasetSplit& split);
void from_json(const nlohmann::json& j, DatasetSplit& split);

std::vector<std::string> ids_of(const Dataset& dataset);
/// Sequences whose id is in `ids`, in the order of `ids`.
Dataset select(const Dataset& dataset, std::span<const std::string> ids);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace latentcast::dataio
