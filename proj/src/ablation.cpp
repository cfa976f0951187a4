#include "depthkit/ablation.hpp"

#include "depthkit/svg.hpp"

namespace depthkit {

ExperimentConfig apply_variant(const ExperimentConfig& base, const AblationVariant& v) {
  ExperimentConfig c = base;
  c.name = v.name;
  ModelConfig m = v.model;
  m.base_channels = base.model.base_channels;
  m.depth_levels = base.model.depth_levels;
  m.depth_max = base.model.depth_max;
  if (m.early_heads > 0) m.early_heads = m.depth_levels - 1;
  c.model = m;
  if (!v.full_criterion) c.loss.wg = c.loss.ws = 0.0;
  return c;
}

AblationTable run_ablation(AblationDirection direction, const ExperimentConfig& base, const std::vector<Sample>& train_set,
                           const std::vector<Sample>& val_set, int jobs, const std::vector<std::string>& only) {
  std::vector<std::string> names = only.empty() ? ablation_rows(direction) : only;
  std::vector<ExperimentConfig> cfgs;
  for (const auto& n : names) cfgs.push_back(apply_variant(base, ablation_config(n, direction)));

  AblationTable t;
  t.direction = direction;
  t.rows.resize(names.size());
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const TrainingRun run = train(cfgs[i], train_set, val_set);
    AblationRow& r = t.rows[i];
    r.name = names[i];
    r.val = run.history.epochs.back().val;
    for (const auto& e : run.history.epochs) r.val_mae_curve.push_back(e.val.mae);
  });
  return t;
}

std::string ablation_csv(const AblationTable& t, const ExperimentConfig& base) {
  ExperimentConfig shared = base;
  shared.name = to_string(t.direction);
  std::string out = "# " + experiment_config_to_json(shared).dump() + "\n";
  out += metrics_csv_header() + "\n";
  for (const auto& r : t.rows) out += metrics_csv_row(r.name, "val", r.val) + "\n";
  return out;
}

std::string ablation_svg(const AblationTable& t) {
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& r : t.rows) {
    labels.push_back(r.name);
    values.push_back(r.val.mae);
  }
  return svg_bar_chart("Final validation MAE (" + to_string(t.direction) + ")", "MAE (m)", labels, values);
}

}  // namespace depthkit
