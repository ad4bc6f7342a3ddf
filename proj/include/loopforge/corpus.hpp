#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace loopforge {

namespace fs = std::filesystem;

struct SeedTask {
  std::string instruction;
  std::optional<std::string> input;  // "" on disk is normalized to absent
  std::string output;
};

enum class RejectStage { heuristic, score, ppl, density };

std::string_view to_string(RejectStage stage);
RejectStage reject_stage_from_string(std::string_view s);

struct PairRecord {
  std::string id;
  int iteration = 1;
  std::string instruction;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<int> quality_score;
  std::optional<int> following_score;
  std::optional<double> ppl;
  std::optional<std::vector<double>> embedding;
  std::optional<RejectStage> rejected_by;

  bool kept() const { return !rejected_by.has_value(); }

  /// Tags the record as rejected. The first stage to reject wins; later calls
  /// are ignored and return false.
  bool reject(RejectStage stage) {
    if (rejected_by) return false;
    rejected_by = stage;
    return true;
  }

  /// Throws if any record invariant is violated.
  void validate() const;

  bool operator==(const PairRecord&) const = default;
};

/// Content hash of (iteration, instruction, input): stable across resumes.
std::string make_record_id(int iteration, std::string_view instruction,
                           const std::optional<std::string>& input);

/// instruction, or instruction + "\n" + input when input is present. This is
/// the text the model sees as "the instruction" everywhere in the pipeline.
std::string render_instruction(std::string_view instruction,
                               const std::optional<std::string>& input);
std::string render_instruction(const PairRecord& r);

enum class ModelKind { base, finetuned };

/// Opaque handle to model weights. `parent` is shared and immutable, so copies
/// stay cheap while behaving like values.
struct ModelRef {
  ModelKind kind = ModelKind::base;
  std::string locator;
  std::shared_ptr<const ModelRef> parent;
  std::optional<std::string> adapter_path;

  static ModelRef base(std::string locator);
  static ModelRef finetuned(std::string locator, const ModelRef& parent,
                            std::optional<std::string> adapter_path = std::nullopt);

  /// Walks parents up to the base model.
  const ModelRef& root() const;
  void validate() const;

  friend bool operator==(const ModelRef& a, const ModelRef& b);
};

nlohmann::json to_json(const ModelRef& m);
ModelRef model_ref_from_json(const nlohmann::json& j);
ModelRef read_model_ref(const fs::path& path);
void write_model_ref(const ModelRef& m, const fs::path& path);

enum class Strategy { one_base, one_last, total_base, direct };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct StageCounts {
  std::size_t generated = 0;
  std::size_t heuristic_kept = 0;
  std::size_t scored = 0;
  std::size_t filtered_kept = 0;

  bool monotone() const {
    return generated >= heuristic_kept && heuristic_kept >= filtered_kept;
  }
  bool operator==(const StageCounts&) const = default;
};

enum class ManifestStatus { complete, failed };

struct IterationManifest {
  int t = 1;
  Strategy strategy = Strategy::one_base;
  ManifestStatus status = ManifestStatus::complete;
  ModelRef model_in;                    // the generator for this iteration
  std::optional<ModelRef> model_out;    // absent on failure
  ModelRef train_base;
  std::vector<std::string> train_datasets;
  // Paths are relative to the run directory.
  std::string raw_path;
  std::string scored_path;
  std::string filtered_path;
  std::string rejected_path;
  StageCounts counts;
  std::uint64_t rng_seed = 0;
  std::string config_digest;
  std::string started;
  std::string finished;
  std::string error;  // failure reason; empty when complete

  bool complete() const { return status == ManifestStatus::complete; }
  bool operator==(const IterationManifest&) const = default;
};

nlohmann::ordered_json to_json(const IterationManifest& m);
IterationManifest manifest_from_json(const nlohmann::json& j);

std::vector<SeedTask> load_seed_pool(const fs::path& path);

enum class DatasetMode { alpaca, scored };

/// Writes JSONL. Alpaca mode refuses records that are rejected or lack output.
std::size_t save_dataset(const std::vector<PairRecord>& records, const fs::path& path,
                         DatasetMode mode);

/// Reads either mode. Records missing id get one derived from their content.
std::vector<PairRecord> load_dataset(const fs::path& path, int default_iteration = 1);

fs::path manifest_path(const fs::path& dir, int t);
fs::path write_manifest(const IterationManifest& m, const fs::path& dir, bool force = false);
/// Throws ErrorCode::not_found if absent, ErrorCode::parse if unreadable.
IterationManifest read_manifest(const fs::path& dir, int t);

/// Writes via a temporary file and rename so readers never see partial output.
void write_file_atomic(const fs::path& path, std::string_view contents);
std::string read_file(const fs::path& path);

}  // namespace loopforge
