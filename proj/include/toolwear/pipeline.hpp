#pragma once

// The four pipeline commands and the dataset preparation they share.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "toolwear/config.hpp"
#include "toolwear/io.hpp"
#include "toolwear/nn/train.hpp"
#include "toolwear/rul.hpp"

namespace toolwear {

struct PreparedSplits {
  std::vector<Spectrogram> train;
  std::vector<Spectrogram> val;
  std::vector<Spectrogram> test;
};

// Split + augment according to cfg.spectrogram. In split-before-augment mode
// the runs are partitioned first and only training runs get augmented copies;
// otherwise originals and copies are pooled and the pool is partitioned.
PreparedSplits prepare_splits(const SpectrogramDataset& ds, const PipelineConfig& cfg);

std::vector<nn::Sample> make_samples(std::span<const Spectrogram> sgs, const nn::Architecture& arch, int n_total);

SpectrogramDataset synthesize(const PipelineConfig& cfg, std::ostream* log = nullptr);

void cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};
nn::TrainResult cmd_train(const PipelineConfig& cfg, const std::filesystem::path& dataset,
                          const TrainOutputs& out, std::ostream& log);

struct EvalOutputs {
  std::filesystem::path report;
  std::filesystem::path plot;
  std::optional<std::filesystem::path> svg;
};
EvalReport cmd_eval(const PipelineConfig& cfg, const std::filesystem::path& dataset,
                    const std::filesystem::path& checkpoint, const EvalOutputs& out, std::ostream& log);

void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, int run_id,
                 int window, std::ostream& out);

// Checkpoint architecture must equal the configured one (ErrorKind::compatibility).
void check_compatible(const nn::Architecture& configured, const nn::Architecture& stored);

std::string metrics_csv(const std::vector<nn::EpochMetrics>& curve);

}  // namespace toolwear
