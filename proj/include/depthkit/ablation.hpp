#pragma once

#include <string>
#include <vector>

#include "depthkit/training.hpp"

namespace depthkit {

// The base configuration with the variant's model switches applied; the
// gradient and smoothness weights are zeroed unless the variant uses the
// full criterion. Training hyperparameters are left untouched.
ExperimentConfig apply_variant(const ExperimentConfig& base, const AblationVariant& v);

struct AblationRow {
  std::string name;
  MetricsReport val;
  std::vector<double> val_mae_curve;
};

struct AblationTable {
  AblationDirection direction = AblationDirection::Incremental;
  std::vector<AblationRow> rows;
};

// One run per row with the shared seed and hyperparameters. `only` restricts
// the rows (empty = all).
AblationTable run_ablation(AblationDirection direction, const ExperimentConfig& base, const std::vector<Sample>& train_set,
                           const std::vector<Sample>& val_set, int jobs = 1, const std::vector<std::string>& only = {});

// The header comment records the shared hyperparameters.
std::string ablation_csv(const AblationTable& t, const ExperimentConfig& base);
std::string ablation_svg(const AblationTable& t);

}  // namespace depthkit
