#pragma once

// Experiment files: `key = value` lines, `#` comments, unknown keys rejected.
// Data sources are given as strings:
//   synth:blobs,n=512,noise=0.1,seed=0,size=16,classes=4   (or synth:rings,...)
//   idx:<images>,<labels>[,classes=10]
//   cifar10:<file>[;<file>...]      cifar100:<file>[;<file>...]

#include <string>
#include <string_view>

#include "advnet/data.hpp"
#include "advnet/model.hpp"
#include "advnet/training.hpp"

namespace advnet {

struct ExperimentConfig {
  WrnSpec model{10, 1, 4, false, 1, 16};
  TrainConfig train;
  std::string train_data = "synth:blobs,n=512,noise=0.1,seed=0,size=16,classes=4";
  std::string val_data;       // empty = no validation set
  std::string report = "train_report.csv";
  bool normalize_inputs = true;  // bake training-set channel mean/std into the model

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ParseError carries the 1-based line number as its offset; semantic
// problems (bad values, unknown keys) are ConfigError naming the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

Dataset load_data(std::string_view source);

}  // namespace advnet
