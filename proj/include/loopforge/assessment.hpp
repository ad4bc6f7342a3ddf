#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "loopforge/corpus.hpp"
#include "loopforge/gateway.hpp"

namespace loopforge {

enum class AssessmentVariant { simple_standard, combined_standard, icl };
enum class AssessmentLevel { none, quality, following, both };
enum class Axis { quality, following };

std::string_view to_string(AssessmentVariant v);
std::string_view to_string(AssessmentLevel l);
std::string_view to_string(Axis a);
AssessmentVariant assessment_variant_from_string(std::string_view s);
AssessmentLevel assessment_level_from_string(std::string_view s);

/// Axes a level asks for, in call order.
std::vector<Axis> axes_for(AssessmentLevel level);

struct AssessmentConfig {
  AssessmentVariant variant = AssessmentVariant::simple_standard;
  AssessmentLevel level = AssessmentLevel::both;
  GenerationParams params{0.0, 1.0, 128, {}, std::nullopt};
  std::size_t max_inflight = 4;
};

/// Raw template text for (variant, axis), with {instruction} and {output}
/// slots. The in-context variant uses one template for both axes.
std::string_view assessment_template(AssessmentVariant variant, Axis axis);

/// Throws if the record has no output.
std::string render_assessment_prompt(AssessmentVariant variant, Axis axis, const PairRecord& record);

enum class ScoreParseStatus { ok, unparseable, out_of_range };

struct ScoreReply {
  ScoreParseStatus status = ScoreParseStatus::unparseable;
  int value = 0;  // meaningful only when status == ok
  std::string explanation;

  bool ok() const { return status == ScoreParseStatus::ok; }
};

/// Accepts "N || text", "<N> || <text>", "ScoreK: N" and a bare leading
/// integer. Total: any input yields a value or a classified failure.
ScoreReply parse_score_reply(std::string_view reply);

struct AssessmentScore {
  Axis axis = Axis::quality;
  int value = 1;
  std::string explanation;
  std::string raw_reply;
};

struct AssessmentReport {
  std::size_t calls = 0;
  std::size_t unparseable = 0;  // includes out-of-range scores
  std::size_t out_of_range = 0;
  std::size_t failed_calls = 0;
  std::vector<AssessmentScore> scores;  // one per call, record-major
};

/// Fills the score fields the level implies. A failed call or a reply that
/// does not parse scores that axis 1, the bottom of the scale.
AssessmentReport assess(std::vector<PairRecord>& records, const ModelRef& model, Gateway& gateway,
                        const AssessmentConfig& config);

}  // namespace loopforge
