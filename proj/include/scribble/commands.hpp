#pragma once

// Manifest parsing, experiment runners and the subcommands of scribblelab.

#include "scribble/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace scribble {

/// Synthetic data for one experiment cell; the cell seed becomes the dataset
/// seed, so `synth.seed` is overwritten per cell.
struct DatasetSpec {
    SynthSpec synth;
    std::size_t train = 10;
    std::size_t test = 5;

    void validate() const;
};

struct DataSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

DataSplit make_split(const DatasetSpec& spec, std::uint64_t seed);

// Parsers reject unknown keys with ErrorCode::Schema. Missing keys keep the
// defaults of the target struct.
DatasetSpec parse_dataset(const nlohmann::json& j);
TrainConfig parse_train_config(const nlohmann::json& j, std::size_t classes);
nlohmann::json dataset_to_json(const DatasetSpec& spec);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

enum class Arm { PceOnly, PceMixGlobal, Full };
std::string_view arm_name(Arm arm);
std::optional<Arm> parse_arm(std::string_view name);
TrainConfig arm_config(const TrainConfig& full, Arm arm);

struct AblationSpec {
    DatasetSpec dataset;
    TrainConfig config;  // the full configuration; other arms are derived from it
    std::vector<Arm> arms{Arm::PceOnly, Arm::PceMixGlobal, Arm::Full};
    std::size_t seeds = 5;
    std::uint64_t seed = 0;  // cell s uses seed + s
    std::size_t workers = 1;
};

struct AblationCell {
    Arm arm = Arm::PceOnly;
    std::uint64_t seed = 0;
    MetricReport report;
};

struct AblationResult {
    std::vector<AblationCell> cells;  // arm-major, then seed
    std::vector<double> mean_dice;    // per arm, in the order of AblationSpec::arms
};

AblationResult run_ablation(const AblationSpec& spec);

struct StudySpec {
    DatasetSpec dataset;
    TrainConfig config;  // trained PCE-only; form and budget are set per cell
    std::vector<ScribbleForm> forms{ScribbleForm::Points, ScribbleForm::DirRandomWalk, ScribbleForm::RandomWalk};
    std::vector<std::size_t> budgets{10, 20, 40};  // labeled pixels per class
    std::size_t seeds = 5;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct StudyCell {
    ScribbleForm form = ScribbleForm::Points;
    std::size_t budget = 0;
    std::uint64_t seed = 0;
    double mean_dice = 0.0;
};

struct StudyResult {
    std::vector<StudyCell> cells;     // form-major, then budget, then seed
    std::vector<double> mean_dice;    // forms x budgets, row-major
    std::size_t budgets = 0;
    double mean(std::size_t form, std::size_t budget) const;
};

StudyResult run_study(const StudySpec& spec);

/// One polyline per form over the budget axis.
std::string study_svg(const StudySpec& spec, const StudyResult& result);

/// Runs `count` jobs on `workers` threads; job i writes only its own slot, so
/// results do not depend on scheduling.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job);

/// Exit status for an error: 1 schema/usage, 2 I/O, 3 divergence, 4 pi
/// estimation, 5 anything else.
int exit_code(ErrorCode code);

/// Entry point of the scribblelab tool.
int run_cli(int argc, char** argv);

}  // namespace scribble
