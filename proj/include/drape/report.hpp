#pragma once

#include <filesystem>
#include <string>

#include "drape/trainer.hpp"

namespace drape {

// summary.json body: the four run metrics (2-decimal rounded) plus the
// effective configuration echo. No timestamps, so identical runs produce
// identical bytes.
std::string summary_json(const RunConfig& cfg, const RunOutputs& out);

// Writes config echo, reports/*.csv and summary.json under out_dir.
void write_run_reports(const std::filesystem::path& out_dir, const RunConfig& cfg,
                       const RunOutputs& out);

// Per-task checkpoint of the full continual state.
void save_checkpoint(const std::filesystem::path& dir, const ContinualTrainer& trainer);

// Rebuilds a trainer from a checkpoint directory (config echo included).
ContinualTrainer load_checkpoint(const std::filesystem::path& dir);

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm);

}  // namespace drape
