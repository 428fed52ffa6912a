#pragma once

#include <string>

#include "crisloc/detect.hpp"
#include "crisloc/model.hpp"
#include "crisloc/reconstruct.hpp"
#include "crisloc/synth.hpp"

namespace crisloc::io {

// All artifact files are self-describing JSON documents carrying
// "format_version": 1 and a "kind" tag. Numeric fields round-trip exactly.

std::string to_json(const RadioMap& map);
RadioMap radio_map_from_json(const std::string& text);

std::string to_json(const synth::Scenario& sc);
synth::Scenario scenario_from_json(const std::string& text);

std::string to_json(const SurveyCapture& survey);
SurveyCapture survey_from_json(const std::string& text);

std::string to_json(const reconstruct::HybridMap& map);
reconstruct::HybridMap hybrid_map_from_json(const std::string& text);

std::string to_json(const detect::DetectionReport& report);
detect::DetectionReport detection_report_from_json(const std::string& text);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);  // throws with the path on failure

RadioMap load_radio_map(const std::string& path);
synth::Scenario load_scenario(const std::string& path);
SurveyCapture load_survey(const std::string& path);
reconstruct::HybridMap load_hybrid_map(const std::string& path);

void save(const RadioMap& map, const std::string& path);
void save(const synth::Scenario& sc, const std::string& path);
void save(const SurveyCapture& survey, const std::string& path);
void save(const reconstruct::HybridMap& map, const std::string& path);
void save(const detect::DetectionReport& report, const std::string& path);

}  // namespace crisloc::io
