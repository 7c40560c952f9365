#pragma once

#include "dtmpc/modulation.hpp"
#include "dtmpc/surrogate.hpp"
#include "dtmpc/synth.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace dtmpc {

/// Version tag written into every JSON artifact.
inline constexpr int kFormatVersion = 1;

/// Compiled model: {format_version, state_labels, input_labels, switch_ids, A0, Bu, Bs,
/// E, Fs, Gu, switch_gain, input_values, lut: [{state, M}]}; matrices as row lists.
std::string model_to_json(const PiecewiseModel& model);
PiecewiseModel model_from_json(std::string_view text);

/// {period, dead_time, events: [{t, state, legs, dead}]}
std::string timeline_to_json(const SwitchTimeline& timeline);

/// {format_version, layer_widths, step_reference, provenance, core, nets: [{state,
/// weights, biases, input_norm, output_norm}]}; weights row-major per layer.
std::string nsp_to_json(const NspModel& nsp);
NspModel nsp_from_json(std::string_view text);

/// "state_bits,x0..,u0..,h,r0..,load" with 17 significant digits.
void write_dataset_csv(std::ostream& os, const ResidualDataset& ds);
ResidualDataset read_dataset_csv(std::istream& is);

/// Reads a whole file; MissingArtifactError if it does not exist.
std::string read_text_file(const std::filesystem::path& path);
/// Writes a whole file, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace dtmpc
