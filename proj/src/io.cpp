#include "scribble/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace scribble {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint16_t encode_intensity(double x)
{
    const double v = std::round(x * kImageScale + kImageOffset);
    return static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
}

double decode_intensity(std::uint16_t v)
{
    return (static_cast<double>(v) - kImageOffset) / kImageScale;
}

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

struct Pgm {
    std::size_t width = 0, height = 0, maxval = 0;
    std::string_view pixels;
};

// Header tokens are separated by whitespace; '#' starts a comment to end of line.
Pgm parse_pgm(const std::string& bytes, const fs::path& path)
{
    std::size_t pos = 0;
    auto bad = [&](const std::string& why) { return Error(ErrorCode::Io, path.string() + ": " + why); };
    auto skip = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip();
        std::size_t value = 0;
        const auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
        if (ec != std::errc() || end == bytes.data() + pos) {
            throw bad("malformed PGM header");
        }
        pos = static_cast<std::size_t>(end - bytes.data());
        return value;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw bad("not a binary PGM (P5)");
    }
    pos = 2;
    Pgm pgm;
    pgm.width = number();
    pgm.height = number();
    pgm.maxval = number();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw bad("malformed PGM header");
    }
    ++pos;
    if (pgm.maxval == 0 || pgm.maxval > 65535) {
        throw bad("PGM maxval out of range");
    }
    const std::size_t bytes_per = pgm.maxval > 255 ? 2 : 1;
    const std::size_t need = pgm.width * pgm.height * bytes_per;
    if (bytes.size() - pos < need) {
        throw bad("truncated PGM data");
    }
    pgm.pixels = std::string_view(bytes).substr(pos, need);
    return pgm;
}

std::string pgm_header(std::size_t width, std::size_t height, std::size_t maxval)
{
    return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
}

void write_channel_pgm(const fs::path& path, const Image& image, std::size_t ch)
{
    std::string bytes = pgm_header(image.width(), image.height(), 65535);
    bytes.reserve(bytes.size() + image.pixels() * 2);
    for (std::size_t i = 0; i < image.pixels(); ++i) {
        const std::uint16_t v = encode_intensity(image.pixel(i)[ch]);
        bytes.push_back(static_cast<char>(v >> 8));
        bytes.push_back(static_cast<char>(v & 0xff));
    }
    write_file(path, bytes);
}

std::vector<double> read_channel_pgm(const fs::path& path, std::size_t& height, std::size_t& width)
{
    const std::string bytes = read_file(path);
    const Pgm pgm = parse_pgm(bytes, path);
    if (pgm.maxval != 65535) {
        throw Error(ErrorCode::Io, path.string() + ": image PGM must be 16-bit with maxval 65535");
    }
    height = pgm.height;
    width = pgm.width;
    std::vector<double> out(pgm.width * pgm.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto hi = static_cast<unsigned char>(pgm.pixels[2 * i]);
        const auto lo = static_cast<unsigned char>(pgm.pixels[2 * i + 1]);
        out[i] = decode_intensity(static_cast<std::uint16_t>((hi << 8) | lo));
    }
    return out;
}

}  // namespace

void write_label_pgm(const fs::path& path, const LabelMap& labels)
{
    std::string bytes = pgm_header(labels.width(), labels.height(), 255);
    bytes.append(reinterpret_cast<const char*>(labels.labels().data()), labels.pixels());
    write_file(path, bytes);
}

LabelMap read_label_pgm(const fs::path& path)
{
    const std::string bytes = read_file(path);
    const Pgm pgm = parse_pgm(bytes, path);
    if (pgm.maxval != 255) {
        throw Error(ErrorCode::Io, path.string() + ": label PGM must be 8-bit with maxval 255");
    }
    std::vector<Label> labels(pgm.pixels.begin(), pgm.pixels.end());
    return LabelMap(pgm.height, pgm.width, std::move(labels));
}

void write_image(const fs::path& path, const Image& image)
{
    if (path.extension() == ".pgm") {
        if (image.channels() != 1) {
            throw Error(ErrorCode::InvalidArgument, "multi-channel images need a .json index path");
        }
        write_channel_pgm(path, image, 0);
        return;
    }
    json index;
    index["schema_version"] = kSchemaVersion;
    index["kind"] = "image";
    index["height"] = image.height();
    index["width"] = image.width();
    json files = json::array();
    for (std::size_t ch = 0; ch < image.channels(); ++ch) {
        const std::string name = path.stem().string() + ".c" + std::to_string(ch) + ".pgm";
        write_channel_pgm(path.parent_path() / name, image, ch);
        files.push_back(name);
    }
    index["channels"] = files;
    write_json(path, index);
}

Image read_image(const fs::path& path)
{
    if (path.extension() == ".pgm") {
        std::size_t h = 0, w = 0;
        std::vector<double> data = read_channel_pgm(path, h, w);
        return Image(h, w, 1, std::move(data));
    }
    const json index = read_json(path);
    check_schema(index, "image");
    const auto& files = index.at("channels");
    if (!files.is_array() || files.empty()) {
        throw Error(ErrorCode::Schema, path.string() + ": channels must be a non-empty array");
    }
    std::vector<std::vector<double>> planes;
    std::size_t h = 0, w = 0;
    for (const auto& f : files) {
        std::size_t ph = 0, pw = 0;
        planes.push_back(read_channel_pgm(path.parent_path() / f.get<std::string>(), ph, pw));
        if (planes.size() == 1) {
            h = ph;
            w = pw;
        } else if (ph != h || pw != w) {
            throw Error(ErrorCode::ShapeMismatch, path.string() + ": channel sizes differ");
        }
    }
    const std::size_t c = planes.size();
    std::vector<double> data(h * w * c);
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            data[i * c + ch] = planes[ch][i];
        }
    }
    return Image(h, w, c, std::move(data));
}

void write_probmap(const fs::path& path, const ProbMap& probs, const std::optional<std::vector<double>>& true_pi)
{
    json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "probmap";
    j["height"] = probs.height();
    j["width"] = probs.width();
    j["classes"] = probs.classes();
    j["probs"] = std::vector<double>(probs.data().begin(), probs.data().end());
    if (true_pi) {
        j["true_pi"] = *true_pi;
    }
    write_json(path, j);
}

ProbMapFile read_probmap(const fs::path& path)
{
    const json j = read_json(path);
    check_schema(j, "probmap");
    try {
        ProbMapFile out{ProbMap(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                                j.at("classes").get<std::size_t>(), j.at("probs").get<std::vector<double>>()),
                        std::nullopt};
        if (j.contains("true_pi")) {
            out.true_pi = j.at("true_pi").get<std::vector<double>>();
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
    }
}

json model_to_json(const PixelModel& model)
{
    json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "model";
    j["feature_dim"] = model.feature_dim;
    j["classes"] = model.classes;
    j["weights"] = model.weights;
    j["bias"] = model.bias;
    return j;
}

PixelModel model_from_json(const json& j)
{
    check_schema(j, "model");
    try {
        PixelModel m;
        m.feature_dim = j.at("feature_dim").get<std::size_t>();
        m.classes = j.at("classes").get<std::size_t>();
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<std::vector<double>>();
        if (m.weights.size() != m.feature_dim * m.classes || m.bias.size() != m.classes || !m.finite()) {
            throw Error(ErrorCode::Schema, "model dimensions disagree or values are not finite");
        }
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("model: ") + e.what());
    }
}

json read_json(const fs::path& path)
{
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j)
{
    write_file(path, j.dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text)
{
    write_file(path, text);
}

void check_schema(const json& j, const std::string& kind)
{
    if (!j.is_object()) {
        throw Error(ErrorCode::Schema, "expected a JSON object");
    }
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
        throw Error(ErrorCode::Schema, "missing integer schema_version");
    }
    if (j["schema_version"].get<int>() != kSchemaVersion) {
        throw Error(ErrorCode::Schema, "unsupported schema_version " + j["schema_version"].dump());
    }
    if (!kind.empty() && (!j.contains("kind") || j["kind"] != kind)) {
        throw Error(ErrorCode::Schema, "expected kind \"" + kind + "\"");
    }
}

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ec == std::errc() ? end : buf);
}

}  // namespace scribble
