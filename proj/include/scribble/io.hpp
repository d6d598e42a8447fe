#pragma once

// File formats: binary PGM for labels (8-bit, 255 = unlabeled) and images
// (16-bit fixed point), JSON for probability maps, models and reports.

#include "scribble/core.hpp"
#include "scribble/model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace scribble {

inline constexpr int kSchemaVersion = 1;

/// Image samples are stored as round(x * 16384) + 32768, clamped to
/// [0, 65535], so the representable range is [-2, 2) in steps of 1/16384.
inline constexpr double kImageScale = 16384.0;
inline constexpr double kImageOffset = 32768.0;

std::uint16_t encode_intensity(double x);
double decode_intensity(std::uint16_t v);

void write_label_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_label_pgm(const std::filesystem::path& path);

/// Single-channel images go to one 16-bit PGM. Multi-channel images are
/// written as `<stem>.c<k>.pgm` per channel next to a JSON index at `path`.
void write_image(const std::filesystem::path& path, const Image& image);
/// Accepts a .pgm (one channel) or a JSON channel index.
Image read_image(const std::filesystem::path& path);

struct ProbMapFile {
    ProbMap probs;
    std::optional<std::vector<double>> true_pi;
};

void write_probmap(const std::filesystem::path& path, const ProbMap& probs,
                   const std::optional<std::vector<double>>& true_pi = std::nullopt);
ProbMapFile read_probmap(const std::filesystem::path& path);

nlohmann::json model_to_json(const PixelModel& model);
PixelModel model_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Throws Schema unless `j` is an object whose schema_version is supported and
/// whose `kind` (when given) matches.
void check_schema(const nlohmann::json& j, const std::string& kind = {});

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace scribble
