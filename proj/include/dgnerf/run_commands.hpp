#pragma once

#include <string>
#include <vector>

#include "dgnerf/config.hpp"
#include "dgnerf/dataset_io.hpp"
#include "dgnerf/metrics.hpp"
#include "dgnerf/trainer.hpp"

namespace dgnerf {

// In-memory dataset generation for the configured scene; images are
// quantized to 8-bit levels so in-process runs match CLI runs that go
// through PPM files.
Dataset generate_dataset(const RunConfig& cfg);

// gen: dataset directory plus a resolved-config snapshot.
void cmd_gen(const RunConfig& cfg, const std::string& out_dir);

// train: resolved config snapshot, checkpoints, metrics.csv.
TrainResult cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
                      const std::string& out_dir);

// eval: renders held-out frames, writes eval_report.csv, summary.txt and the
// renders themselves.
EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& dataset_dir, const std::string& out_dir);

EvalReport evaluate(const RunConfig& cfg, const TrainState& state, const Dataset& ds);

struct CompareRow {
  std::string run;
  std::string strategy;
  std::string constraint;
  double psnr = 0, ssim = 0, rpe_t = 0, rpe_r = 0, ate = 0;
  int epochs_to_threshold = -1;
};

// compare: one row per run directory, sorted by ATE ascending; returns rows
// and writes CSV + an aligned text table.
std::vector<CompareRow> cmd_compare(const std::vector<std::string>& run_dirs,
                                    double ate_threshold, const std::string& out_csv);

std::string compare_table(const std::vector<CompareRow>& rows);

}  // namespace dgnerf
