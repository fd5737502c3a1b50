#include "latentcast/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "latentcast/error.hpp"

static_assert(std::endian::native == std::endian::little, "payload decoding assumes a little-endian host");

namespace latentcast::dataio {

namespace {

constexpr std::uint8_t kMagic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Value text for `key` inside the header dict, e.g. "'<f4'" or "(20, 64, 64)".
std::string_view dict_value(std::string_view dict, std::string_view key) {
    std::string quoted = "'" + std::string(key) + "'";
    auto pos = dict.find(quoted);
    if (pos == std::string_view::npos) throw Error(ErrorKind::Format, "npy header lacks " + quoted);
    pos = dict.find(':', pos + quoted.size());
    if (pos == std::string_view::npos) throw Error(ErrorKind::Format, "npy header malformed near " + quoted);
    auto rest = dict.substr(pos + 1);
    rest = trim(rest);
    if (rest.empty()) throw Error(ErrorKind::Format, "npy header malformed near " + quoted);
    std::size_t end = 0;
    if (rest.front() == '(') {
        end = rest.find(')');
        if (end == std::string_view::npos) throw Error(ErrorKind::Format, "unterminated shape tuple");
        return rest.substr(0, end + 1);
    }
    if (rest.front() == '\'' || rest.front() == '"') {
        end = rest.find(rest.front(), 1);
        if (end == std::string_view::npos) throw Error(ErrorKind::Format, "unterminated string in npy header");
        return rest.substr(0, end + 1);
    }
    end = rest.find_first_of(",}");
    return trim(rest.substr(0, end));
}

Dtype parse_descr(std::string_view descr) {
    if (descr.size() < 2) throw Error(ErrorKind::Format, "bad descr");
    descr = descr.substr(1, descr.size() - 2);
    if (descr == "|u1" || descr == "<u1" || descr == "u1") return Dtype::U8;
    if (descr == "<f4") return Dtype::F32;
    if (descr == "<f8") return Dtype::F64;
    throw Error(ErrorKind::UnsupportedDtype, "element type '" + std::string(descr) + "' is not supported");
}

std::vector<std::size_t> parse_shape(std::string_view tuple) {
    std::vector<std::size_t> shape;
    auto body = tuple.substr(1, tuple.size() - 2);
    std::size_t start = 0;
    while (start <= body.size()) {
        auto comma = body.find(',', start);
        auto token = trim(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (!token.empty()) {
            std::size_t value = 0;
            auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
            if (ec != std::errc() || ptr != token.data() + token.size())
                throw Error(ErrorKind::Format, "bad shape entry '" + std::string(token) + "'");
            shape.push_back(value);
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return shape;
}

std::string shape_tuple(std::span<const std::size_t> shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) s += ",";
        if (i + 1 < shape.size()) s += " ";
    }
    return s + ")";
}

std::size_t product(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

void FrameSequence::validate() const {
    for (const auto& f : frames) {
        if (!f.same_shape(frames.front()))
            throw Error(ErrorKind::InconsistentSequence, "sequence '" + id + "' mixes frame dimensions");
    }
}

std::size_t ArrayHeader::element_count() const { return product(shape); }

std::size_t ArrayHeader::element_size() const {
    switch (dtype) {
    case Dtype::U8: return 1;
    case Dtype::F32: return 4;
    case Dtype::F64: return 8;
    }
    return 0;
}

ArrayHeader parse_array_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 10 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw Error(ErrorKind::Format, "missing npy magic");
    const std::uint8_t major = bytes[6];
    std::size_t header_len = 0;
    std::size_t prefix = 0;
    if (major == 1) {
        header_len = bytes[8] | (std::size_t{bytes[9]} << 8);
        prefix = 10;
    } else if (major == 2 || major == 3) {
        if (bytes.size() < 12) throw Error(ErrorKind::Truncation, "npy preamble cut short");
        header_len = bytes[8] | (std::size_t{bytes[9]} << 8) | (std::size_t{bytes[10]} << 16) |
                     (std::size_t{bytes[11]} << 24);
        prefix = 12;
    } else {
        throw Error(ErrorKind::Format, "unknown npy version " + std::to_string(major));
    }
    if (bytes.size() < prefix + header_len) throw Error(ErrorKind::Truncation, "npy header cut short");
    std::string_view dict(reinterpret_cast<const char*>(bytes.data() + prefix), header_len);

    ArrayHeader header;
    header.dtype = parse_descr(dict_value(dict, "descr"));
    if (dict_value(dict, "fortran_order") != "False")
        throw Error(ErrorKind::Format, "fortran-order arrays are not supported");
    header.shape = parse_shape(dict_value(dict, "shape"));
    header.data_offset = prefix + header_len;
    return header;
}

std::optional<std::size_t> detect_time_axis(std::span<const std::size_t> shape, std::size_t length) {
    const bool first = !shape.empty() && shape[0] == length;
    const bool second = shape.size() > 1 && shape[1] == length;
    if (first && second) return shape.size() >= 5 ? 1 : 0;
    if (first) return 0;
    if (second) return 1;
    return std::nullopt;
}

ArrayFile parse_array_file(std::span<const std::uint8_t> bytes, const ArrayParseOptions& options) {
    const auto header = parse_array_header(bytes);
    const std::size_t count = header.element_count();
    const std::size_t needed = count * header.element_size();
    if (bytes.size() - header.data_offset < needed)
        throw Error(ErrorKind::Truncation, "payload holds " + std::to_string(bytes.size() - header.data_offset) +
                                                " bytes, shape needs " + std::to_string(needed));

    ArrayFile out;
    out.shape = header.shape;
    out.source_dtype = header.dtype;
    out.values.resize(count);
    const std::uint8_t* payload = bytes.data() + header.data_offset;
    switch (header.dtype) {
    case Dtype::U8:
        for (std::size_t i = 0; i < count; ++i) out.values[i] = static_cast<float>(payload[i]) / 255.0f;
        break;
    case Dtype::F32:
        std::memcpy(out.values.data(), payload, needed);
        break;
    case Dtype::F64:
        for (std::size_t i = 0; i < count; ++i) {
            double v;
            std::memcpy(&v, payload + 8 * i, 8);
            out.values[i] = static_cast<float>(v);
        }
        break;
    }
    if (options.time_axis_override) {
        if (*options.time_axis_override >= out.shape.size())
            throw Error(ErrorKind::Shape, "time axis override exceeds array rank");
        out.time_axis = options.time_axis_override;
    } else {
        out.time_axis = detect_time_axis(out.shape, options.sequence_length);
    }
    return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

ArrayFile read_array_file(const std::filesystem::path& path, const ArrayParseOptions& options) {
    auto bytes = read_bytes(path);
    return parse_array_file(bytes, options);
}

std::vector<std::uint8_t> encode_array_file(std::span<const std::size_t> shape, std::span<const float> values) {
    if (product(shape) != values.size())
        throw Error(ErrorKind::Shape, "value count does not match shape " + shape_tuple(shape));
    std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape_tuple(shape) + ", }";
    // Pad so the payload starts on a 64-byte boundary; the header ends with '\n'.
    std::size_t total = 10 + dict.size() + 1;
    dict.append((64 - total % 64) % 64, ' ');
    dict.push_back('\n');

    std::vector<std::uint8_t> bytes(std::begin(kMagic), std::end(kMagic));
    bytes.push_back(1);
    bytes.push_back(0);
    bytes.push_back(static_cast<std::uint8_t>(dict.size() & 0xff));
    bytes.push_back(static_cast<std::uint8_t>(dict.size() >> 8));
    bytes.insert(bytes.end(), dict.begin(), dict.end());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes.insert(bytes.end(), raw, raw + values.size() * sizeof(float));
    return bytes;
}

void write_array_file(const std::filesystem::path& path, std::span<const std::size_t> shape,
                      std::span<const float> values) {
    write_bytes(path, encode_array_file(shape, values));
}

std::string sequence_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq%06zu", index);
    return buf;
}

Dataset dataset_from_array(const ArrayFile& array) {
    const auto& s = array.shape;
    if (s.size() != 4 && s.size() != 5)
        throw Error(ErrorKind::Shape, "expected a rank-4 or rank-5 array, got rank " + std::to_string(s.size()));
    // Rank-5 arrays without a recognisable time axis are taken as (N, T, H, W, C).
    const auto axis = array.time_axis ? array.time_axis : (s.size() == 5 ? std::optional<std::size_t>(1) : std::nullopt);
    if (!axis || *axis > 1) throw Error(ErrorKind::Shape, "cannot locate the time axis; pass an explicit override");
    const std::size_t t_axis = *axis;
    const std::size_t n_axis = 1 - t_axis;
    const std::size_t n = s[n_axis], t = s[t_axis], h = s[2], w = s[3];
    const std::size_t c = s.size() == 5 ? s[4] : 1;
    const std::size_t frame_size = h * w * c;

    Dataset out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = sequence_id(i);
        out[i].frames.reserve(t);
        for (std::size_t k = 0; k < t; ++k) {
            const std::size_t offset = (t_axis == 0 ? (k * n + i) : (i * t + k)) * frame_size;
            Frame f(h, w, c);
            std::copy_n(array.values.begin() + static_cast<std::ptrdiff_t>(offset), frame_size, f.data.begin());
            out[i].frames.push_back(std::move(f));
        }
    }
    return out;
}

ArrayFile dataset_to_array(const Dataset& dataset) {
    if (dataset.empty()) throw Error(ErrorKind::InsufficientData, "empty dataset");
    const auto& proto = dataset.front().frames.at(0);
    const std::size_t t = dataset.front().length();
    ArrayFile out;
    out.shape = {dataset.size(), t, proto.height, proto.width, proto.channels};
    out.time_axis = 1;
    out.values.reserve(product(out.shape));
    for (const auto& seq : dataset) {
        if (seq.length() != t) throw Error(ErrorKind::InconsistentSequence, "sequence lengths differ");
        for (const auto& f : seq.frames) {
            if (!f.same_shape(proto)) throw Error(ErrorKind::InconsistentSequence, "frame shapes differ");
            out.values.insert(out.values.end(), f.data.begin(), f.data.end());
        }
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& path, const ArrayParseOptions& options) {
    return dataset_from_array(read_array_file(path, options));
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    auto array = dataset_to_array(dataset);
    write_array_file(path, array.shape, array.values);
}

// ---------------------------------------------------------------------------

Frame parse_pnm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&]() -> std::size_t {
        skip_space_and_comments();
        std::size_t start = pos;
        std::size_t value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) value = value * 10 + (bytes[pos++] - '0');
        if (pos == start) throw Error(ErrorKind::Format, "malformed PNM header");
        return value;
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw Error(ErrorKind::Format, "not a binary PGM/PPM file");
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    pos = 2;
    const std::size_t width = read_uint();
    const std::size_t height = read_uint();
    const std::size_t maxval = read_uint();
    if (width == 0 || height == 0) throw Error(ErrorKind::Format, "PNM with zero extent");
    if (maxval != 255) throw Error(ErrorKind::Format, "PNM maxval must be 255");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(ErrorKind::Format, "malformed PNM header");
    ++pos;
    const std::size_t count = width * height * channels;
    if (bytes.size() - pos < count) throw Error(ErrorKind::Truncation, "PNM raster cut short");

    Frame f(height, width, channels);
    for (std::size_t i = 0; i < count; ++i) f.data[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    return f;
}

std::vector<std::uint8_t> encode_pnm(const Frame& frame) {
    if (frame.channels != 1 && frame.channels != 3) throw Error(ErrorKind::Channel, "PNM needs 1 or 3 channels");
    std::string head = (frame.channels == 1 ? "P5\n" : "P6\n") + std::to_string(frame.width) + " " +
                       std::to_string(frame.height) + "\n255\n";
    std::vector<std::uint8_t> bytes(head.begin(), head.end());
    const float scale = frame.raw ? 1.0f : 255.0f;
    for (float v : frame.data) {
        float q = std::round(v * scale);
        bytes.push_back(static_cast<std::uint8_t>(std::clamp(q, 0.0f, 255.0f)));
    }
    return bytes;
}

void write_pnm(const std::filesystem::path& path, const Frame& frame) { write_bytes(path, encode_pnm(frame)); }

FrameSequence load_frame_directory(const std::filesystem::path& dir, std::size_t channels) {
    if (channels != 1 && channels != 3) throw Error(ErrorKind::Channel, "channels must be 1 or 3");
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, dir.string() + " is not a directory");
    const std::string ext = channels == 1 ? ".pgm" : ".ppm";

    std::map<std::size_t, std::filesystem::path> indexed;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ext) continue;
        const std::string stem = entry.path().stem().string();
        auto last = stem.find_last_not_of("0123456789");
        std::string digits = stem.substr(last == std::string::npos ? 0 : last + 1);
        if (digits.empty()) throw Error(ErrorKind::Format, "frame file without index: " + entry.path().string());
        const std::size_t index = std::stoul(digits);
        if (!indexed.emplace(index, entry.path()).second)
            throw Error(ErrorKind::Format, "duplicate frame index " + std::to_string(index));
    }
    if (indexed.empty()) throw Error(ErrorKind::InsufficientData, "no " + ext + " frames in " + dir.string());

    FrameSequence seq;
    seq.id = dir.filename().string();
    std::size_t expected = 0;
    for (const auto& [index, path] : indexed) {
        if (index != expected) throw Error(ErrorKind::Gap, "frame index " + std::to_string(expected) + " missing");
        ++expected;
        auto frame = parse_pnm(read_bytes(path));
        if (frame.channels != channels) throw Error(ErrorKind::Channel, path.string() + " has wrong channel count");
        if (!seq.frames.empty() && !frame.same_shape(seq.frames.front()))
            throw Error(ErrorKind::InconsistentSequence, path.string() + " differs in size from frame 0");
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

// ---------------------------------------------------------------------------

DatasetSplit split_sequences(std::span<const std::string> ids, double test_fraction, double val_fraction,
                             std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorKind::Config, "test fraction must lie in (0, 1)");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw Error(ErrorKind::Config, "validation fraction must lie in [0, 1)");
    const std::size_t n = ids.size();
    if (n == 0) throw Error(ErrorKind::InsufficientData, "no sequence ids to split");
    if (n < 3 && val_fraction > 0.0) throw Error(ErrorKind::InsufficientData, "need at least 3 sequences");

    // The tiny epsilon keeps products such as 0.29 * 100 from flooring one short.
    auto floor_share = [](std::size_t count, double fraction) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(count) * fraction + 1e-9));
    };
    const std::size_t test_count = std::max<std::size_t>(1, floor_share(n, test_fraction));
    const std::size_t pool = n - test_count;
    const std::size_t val_count = val_fraction > 0.0 ? std::max<std::size_t>(1, floor_share(pool, val_fraction)) : 0;
    if (pool == 0 || pool <= val_count) throw Error(ErrorKind::InsufficientData, "too few sequences to split");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<int> role(n, 0);  // 0 train, 1 val, 2 test
    for (std::size_t i = 0; i < test_count; ++i) role[order[i]] = 2;
    for (std::size_t i = test_count; i < test_count + val_count; ++i) role[order[i]] = 1;

    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        auto& bucket = role[i] == 0 ? split.train_ids : role[i] == 1 ? split.val_ids : split.test_ids;
        bucket.push_back(ids[i]);
    }
    return split;
}

void to_json(nlohmann::json& j, const DatasetSplit& split) {
    j = nlohmann::json{{"train_ids", split.train_ids},
                       {"val_ids", split.val_ids},
                       {"test_ids", split.test_ids},
                       {"seed", split.seed}};
}

void from_json(const nlohmann::json& j, DatasetSplit& split) {
    j.at("train_ids").get_to(split.train_ids);
    j.at("val_ids").get_to(split.val_ids);
    j.at("test_ids").get_to(split.test_ids);
    j.at("seed").get_to(split.seed);
}

std::vector<std::string> ids_of(const Dataset& dataset) {
    std::vector<std::string> ids;
    ids.reserve(dataset.size());
    for (const auto& seq : dataset) ids.push_back(seq.id);
    return ids;
}

Dataset select(const Dataset& dataset, std::span<const std::string> ids) {
    std::map<std::string, const FrameSequence*> by_id;
    for (const auto& seq : dataset) by_id[seq.id] = &seq;
    Dataset out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorKind::InsufficientData, "unknown sequence id '" + id + "'");
        out.push_back(*it->second);
    }
    return out;
}

} // namespace latentcast::dataio
