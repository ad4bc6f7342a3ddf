#include "loopforge/assessment.hpp"

#include <cctype>
#include <charconv>

#include "loopforge/assets.inc"
#include "loopforge/text.hpp"

namespace loopforge {

std::string_view to_string(AssessmentVariant v) {
  switch (v) {
    case AssessmentVariant::simple_standard: return "simple_standard";
    case AssessmentVariant::combined_standard: return "combined_standard";
    case AssessmentVariant::icl: return "icl";
  }
  return "simple_standard";
}

std::string_view to_string(AssessmentLevel l) {
  switch (l) {
    case AssessmentLevel::none: return "none";
    case AssessmentLevel::quality: return "quality";
    case AssessmentLevel::following: return "following";
    case AssessmentLevel::both: return "both";
  }
  return "both";
}

std::string_view to_string(Axis a) { return a == Axis::quality ? "quality" : "following"; }

AssessmentVariant assessment_variant_from_string(std::string_view s) {
  if (s == "simple_standard") return AssessmentVariant::simple_standard;
  if (s == "combined_standard") return AssessmentVariant::combined_standard;
  if (s == "icl") return AssessmentVariant::icl;
  fail(ErrorCode::invalid_argument, "unknown assessment variant '" + std::string(s) + "'");
}

AssessmentLevel assessment_level_from_string(std::string_view s) {
  if (s == "none") return AssessmentLevel::none;
  if (s == "quality") return AssessmentLevel::quality;
  if (s == "following") return AssessmentLevel::following;
  if (s == "both") return AssessmentLevel::both;
  fail(ErrorCode::invalid_argument, "unknown assessment level '" + std::string(s) + "'");
}

std::vector<Axis> axes_for(AssessmentLevel level) {
  switch (level) {
    case AssessmentLevel::none: return {};
    case AssessmentLevel::quality: return {Axis::quality};
    case AssessmentLevel::following: return {Axis::following};
    case AssessmentLevel::both: return {Axis::quality, Axis::following};
  }
  return {};
}

std::string_view assessment_template(AssessmentVariant variant, Axis axis) {
  switch (variant) {
    case AssessmentVariant::simple_standard:
      return axis == Axis::quality ? assets::simple_standard_quality : assets::simple_standard_following;
    case AssessmentVariant::combined_standard:
      return axis == Axis::quality ? assets::combined_standard_quality : assets::combined_standard_following;
    case AssessmentVariant::icl:
      return assets::icl;
  }
  return assets::simple_standard_quality;
}

std::string render_assessment_prompt(AssessmentVariant variant, Axis axis, const PairRecord& record) {
  if (!record.output) fail(ErrorCode::invalid_argument, "record " + record.id + " has no output to assess");
  const std::string instruction = render_instruction(record);
  return text::fill_slots(assessment_template(variant, axis),
                          {{"instruction", instruction}, {"output", *record.output}});
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// "Score", optional digits and spaces, then ':' or '='.
std::string_view strip_score_label(std::string_view s) {
  if (!text::starts_with_icase(s, "score")) return s;
  std::size_t i = 5;
  while (i < s.size() && is_digit(s[i])) ++i;
  while (i < s.size() && is_space(s[i])) ++i;
  if (i < s.size() && (s[i] == ':' || s[i] == '=')) return text::trim(s.substr(i + 1));
  return s;
}

std::string_view strip_brackets(std::string_view s) {
  s = text::trim(s);
  if (!s.empty() && s.front() == '<') s.remove_prefix(1);
  if (!s.empty() && s.back() == '>') s.remove_suffix(1);
  return text::trim(s);
}

}  // namespace

ScoreReply parse_score_reply(std::string_view reply) {
  ScoreReply out;
  std::string_view s = text::trim(reply);
  std::string_view head = s;
  if (const auto bar = s.find("||"); bar != std::string_view::npos) {
    head = s.substr(0, bar);
    out.explanation = std::string(strip_brackets(s.substr(bar + 2)));
  }
  head = strip_score_label(text::trim(head));
  while (!head.empty() && (head.front() == '<' || head.front() == '[' || head.front() == '(' ||
                           head.front() == '*' || head.front() == '"' || head.front() == '\'' ||
                           is_space(head.front()))) {
    head.remove_prefix(1);
  }

  bool negative = false;
  if (!head.empty() && (head.front() == '-' || head.front() == '+')) {
    negative = head.front() == '-';
    head.remove_prefix(1);
  }
  std::size_t digits = 0;
  while (digits < head.size() && is_digit(head[digits])) ++digits;
  if (digits == 0) {
    out.status = ScoreParseStatus::unparseable;
    return out;
  }
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + digits, value);
  (void)ptr;
  if (ec != std::errc() || negative || value < 1 || value > 10) {
    out.status = ScoreParseStatus::out_of_range;
    return out;
  }
  out.status = ScoreParseStatus::ok;
  out.value = static_cast<int>(value);
  if (out.explanation.empty() && s.find("||") == std::string_view::npos) {
    out.explanation = std::string(text::trim(head.substr(digits)));
  }
  return out;
}

AssessmentReport assess(std::vector<PairRecord>& records, const ModelRef& model, Gateway& gateway,
                        const AssessmentConfig& config) {
  AssessmentReport report;
  const auto axes = axes_for(config.level);
  if (axes.empty()) return report;
  for (const auto& r : records) {
    if (!r.output) fail(ErrorCode::invalid_argument, "assess: record " + r.id + " has no output");
  }

  std::vector<std::string> prompts;
  prompts.reserve(records.size() * axes.size());
  for (const auto& r : records) {
    for (Axis axis : axes) prompts.push_back(render_assessment_prompt(config.variant, axis, r));
  }
  const auto replies = gateway.complete_batch(model, prompts, config.params, config.max_inflight);
  report.calls = prompts.size();

  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& reply = replies[i * axes.size() + a];
      AssessmentScore score;
      score.axis = axes[a];
      if (!reply.ok()) {
        ++report.failed_calls;
        score.explanation = reply.error;
      } else {
        score.raw_reply = reply.completion->text;
        const ScoreReply parsed = parse_score_reply(score.raw_reply);
        if (parsed.ok()) {
          score.value = parsed.value;
          score.explanation = parsed.explanation;
        } else {
          ++report.unparseable;
          if (parsed.status == ScoreParseStatus::out_of_range) ++report.out_of_range;
        }
      }
      (axes[a] == Axis::quality ? records[i].quality_score : records[i].following_score) = score.value;
      report.scores.push_back(std::move(score));
    }
  }
  return report;
}

}  // namespace loopforge
