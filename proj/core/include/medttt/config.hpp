#pragma once

#include <string>

#include <json.hpp>

#include "medttt/bench.hpp"
#include "medttt/model.hpp"
#include "medttt/oracle_suite.hpp"
#include "medttt/train.hpp"

namespace medttt {

// Everything a CLI run needs, mirrored by the JSON config file. A run is
// reproducible from its echoed config plus seed.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "run";
  std::string manifest;
  std::string checkpoint;
  std::string split = "test";
  std::string setting = "full";  // ablation name: I, II, III, full
  std::string dataset = "synth";
  ModelConfig model;
  TrainConfig train;
  BenchConfig bench;
  OracleSuiteOptions oracle;
  std::size_t synth_n = 16;
  std::size_t synth_size = 64;
};

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_json(const RunConfig& c);

}  // namespace medttt
