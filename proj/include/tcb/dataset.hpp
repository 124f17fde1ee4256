#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcb/raster.hpp"
#include "tcb/synth.hpp"

namespace tcb {

/// On-disk dataset: images/NNNNN.ras and masks/NNNNN.ras (RAS1) plus
/// manifest.json holding the generator spec, the file list and the dataset
/// checksum.
nlohmann::json synth_spec_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, const nlohmann::json& spec);
/// Reads every pair listed in the manifest and verifies the checksum.
std::vector<Sample> read_dataset(const std::string& dir);
nlohmann::json read_manifest(const std::string& dir);

}  // namespace tcb
