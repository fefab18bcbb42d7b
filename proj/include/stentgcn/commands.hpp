#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stentgcn/dataset.hpp"
#include "stentgcn/error.hpp"
#include "stentgcn/gcn.hpp"
#include "stentgcn/pipeline.hpp"

namespace stentgcn {

enum class ExitCode : int { Ok = 0, Usage = 2, Validation = 3, Io = 4, Numerical = 5 };

ExitCode exit_code_for(ErrorKind kind);

/// Network, optimizer and augmentation settings for one training run.
struct TrainSettings {
  GcnConfig gcn;
  TrainConfig train;
  bool augment = true;
  AugmentConfig augmentation;

  void validate() const;
  nlohmann::json to_json() const;
};

TrainSettings parse_train_settings(const std::string& text);
TrainSettings load_train_settings(const std::filesystem::path& path);

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<double> loss_history;
  std::size_t training_pairs = 0;
  double train_ms = 0.0;
};

/// Augments (if enabled), initializes from `seed` and trains.
TrainOutcome train_model(const std::vector<SegmentSample>& samples, const TrainSettings& settings, std::uint64_t seed);

RunReport evaluate_dataset(const GcnModel& model, const std::vector<SegmentSample>& samples,
                           const EvaluationOptions& options = {});

struct FoldReport {
  Fold fold;
  RunReport report;
};

struct CrossvalResult {
  std::vector<FoldReport> folds;
  /// Every fold's test rows together; one column per family.
  RunReport combined;
};

CrossvalResult run_crossval(const std::vector<SegmentSample>& samples, const TrainSettings& settings,
                            std::uint64_t seed, const EvaluationOptions& options = {});

/// Writes `<stem>.txt`, `<stem>.json` and `<stem>.timing.json`.
void write_report(const RunReport& report, const std::filesystem::path& stem);

// Command entry points. Progress goes to `log` unless quiet; errors propagate as stentgcn::Error.

struct CommonArgs {
  std::optional<std::uint64_t> seed;
  std::filesystem::path config;
  std::filesystem::path out;
  bool quiet = false;
};

struct TrainOverrides {
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  bool no_augment = false;
};

void cmd_simulate(const CommonArgs& args, std::ostream& log);
void cmd_train(const CommonArgs& args, const std::filesystem::path& dataset, const TrainOverrides& overrides,
               std::ostream& log);
void cmd_predict(const CommonArgs& args, const std::filesystem::path& dataset, const std::filesystem::path& model,
                 std::ostream& log);

struct InstantiateArgs {
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::optional<std::filesystem::path> projection;  // overrides each record's camera
  std::optional<int> index;                         // one record instead of all
  bool ideal = false;                               // project ground truth instead of the observed 2D markers
};

void cmd_instantiate(const CommonArgs& args, const InstantiateArgs& inputs, std::ostream& log);
void cmd_evaluate(const CommonArgs& args, const std::filesystem::path& dataset, const std::filesystem::path& model,
                  bool shape_metrics, std::ostream& log);
void cmd_crossval(const CommonArgs& args, const std::filesystem::path& dataset, const TrainOverrides& overrides,
                  bool shape_metrics, std::ostream& log);

/// The seed in force: the flag, else a fresh one (announced on `log`).
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::ostream& log);

}  // namespace stentgcn
