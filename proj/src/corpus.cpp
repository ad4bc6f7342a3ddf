#include "loopforge/corpus.hpp"

#include <fstream>
#include <sstream>

#include "loopforge/error.hpp"
#include "loopforge/hashing.hpp"
#include "loopforge/text.hpp"

namespace loopforge {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(RejectStage stage) {
  switch (stage) {
    case RejectStage::heuristic: return "heuristic";
    case RejectStage::score: return "score";
    case RejectStage::ppl: return "ppl";
    case RejectStage::density: return "density";
  }
  return "heuristic";
}

RejectStage reject_stage_from_string(std::string_view s) {
  if (s == "heuristic") return RejectStage::heuristic;
  if (s == "score") return RejectStage::score;
  if (s == "ppl") return RejectStage::ppl;
  if (s == "density") return RejectStage::density;
  fail(ErrorCode::parse, "unknown rejected_by stage '" + std::string(s) + "'");
}

void PairRecord::validate() const {
  auto check_score = [this](const std::optional<int>& s, const char* name) {
    if (s && (*s < 1 || *s > 10)) {
      fail(ErrorCode::invalid_argument,
           "record " + id + ": " + name + " " + std::to_string(*s) + " outside [1,10]");
    }
  };
  if (iteration < 1) fail(ErrorCode::invalid_argument, "record " + id + ": iteration < 1");
  if (text::trim(instruction).empty()) {
    fail(ErrorCode::invalid_argument, "record " + id + ": empty instruction");
  }
  check_score(quality_score, "quality_score");
  check_score(following_score, "following_score");
  if ((quality_score || following_score) && !output) {
    fail(ErrorCode::invalid_argument, "record " + id + ": scored without output");
  }
  if (ppl && !(*ppl > 0.0)) fail(ErrorCode::invalid_argument, "record " + id + ": ppl must be > 0");
}

std::string make_record_id(int iteration, std::string_view instruction,
                           const std::optional<std::string>& input) {
  const std::string t = std::to_string(iteration);
  const std::string_view in = input ? std::string_view(*input) : std::string_view();
  return sha256_parts({t, instruction, input ? "1" : "0", in}).substr(0, 16);
}

std::string render_instruction(std::string_view instruction,
                               const std::optional<std::string>& input) {
  std::string out(instruction);
  if (input) {
    out += '\n';
    out += *input;
  }
  return out;
}

std::string render_instruction(const PairRecord& r) {
  return render_instruction(r.instruction, r.input);
}

// ---------------------------------------------------------------------------
// ModelRef

ModelRef ModelRef::base(std::string locator) {
  ModelRef m;
  m.kind = ModelKind::base;
  m.locator = std::move(locator);
  return m;
}

ModelRef ModelRef::finetuned(std::string locator, const ModelRef& parent,
                             std::optional<std::string> adapter_path) {
  ModelRef m;
  m.kind = ModelKind::finetuned;
  m.locator = std::move(locator);
  m.parent = std::make_shared<const ModelRef>(parent);
  m.adapter_path = std::move(adapter_path);
  return m;
}

const ModelRef& ModelRef::root() const {
  const ModelRef* cur = this;
  while (cur->parent) cur = cur->parent.get();
  return *cur;
}

void ModelRef::validate() const {
  if (locator.empty()) fail(ErrorCode::invalid_argument, "model ref: empty locator");
  if (kind == ModelKind::base && parent) {
    fail(ErrorCode::invalid_argument, "model ref '" + locator + "': base model cannot have a parent");
  }
  if (kind == ModelKind::finetuned && !parent) {
    fail(ErrorCode::invalid_argument, "model ref '" + locator + "': finetuned model needs a parent");
  }
  if (parent) parent->validate();
}

bool operator==(const ModelRef& a, const ModelRef& b) {
  if (a.kind != b.kind || a.locator != b.locator || a.adapter_path != b.adapter_path) return false;
  if (static_cast<bool>(a.parent) != static_cast<bool>(b.parent)) return false;
  return !a.parent || *a.parent == *b.parent;
}

json to_json(const ModelRef& m) {
  json j;
  j["kind"] = m.kind == ModelKind::base ? "base" : "finetuned";
  j["locator"] = m.locator;
  j["parent"] = m.parent ? to_json(*m.parent) : json(nullptr);
  j["adapter_path"] = m.adapter_path ? json(*m.adapter_path) : json(nullptr);
  return j;
}

ModelRef model_ref_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::parse, "model ref: expected object");
  ModelRef m;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "base") {
    m.kind = ModelKind::base;
  } else if (kind == "finetuned") {
    m.kind = ModelKind::finetuned;
  } else {
    fail(ErrorCode::parse, "model ref: unknown kind '" + kind + "'");
  }
  m.locator = j.at("locator").get<std::string>();
  if (j.contains("parent") && !j["parent"].is_null()) {
    m.parent = std::make_shared<const ModelRef>(model_ref_from_json(j["parent"]));
  }
  if (j.contains("adapter_path") && !j["adapter_path"].is_null()) {
    m.adapter_path = j["adapter_path"].get<std::string>();
  }
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::parse, e.what());
  }
  return m;
}

ModelRef read_model_ref(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::not_found, "model ref file missing: " + path.string());
  try {
    return model_ref_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

void write_model_ref(const ModelRef& m, const fs::path& path) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Strategy / manifest

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::one_base: return "one_base";
    case Strategy::one_last: return "one_last";
    case Strategy::total_base: return "total_base";
    case Strategy::direct: return "direct";
  }
  return "one_base";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "one_base") return Strategy::one_base;
  if (s == "one_last") return Strategy::one_last;
  if (s == "total_base") return Strategy::total_base;
  if (s == "direct") return Strategy::direct;
  fail(ErrorCode::invalid_argument, "unknown strategy '" + std::string(s) + "'");
}

ordered_json to_json(const IterationManifest& m) {
  ordered_json j;
  j["t"] = m.t;
  j["status"] = m.complete() ? "complete" : "failed";
  j["strategy"] = to_string(m.strategy);
  j["model_in"] = to_json(m.model_in);
  j["model_out"] = m.model_out ? to_json(*m.model_out) : json(nullptr);
  j["train_base"] = to_json(m.train_base);
  j["train_datasets"] = m.train_datasets;
  j["raw_path"] = m.raw_path;
  j["scored_path"] = m.scored_path;
  j["filtered_path"] = m.filtered_path;
  j["rejected_path"] = m.rejected_path;
  j["counts"] = {{"generated", m.counts.generated},
                 {"heuristic_kept", m.counts.heuristic_kept},
                 {"scored", m.counts.scored},
                 {"filtered_kept", m.counts.filtered_kept}};
  j["rng_seed"] = m.rng_seed;
  j["config_digest"] = m.config_digest;
  j["started"] = m.started;
  j["finished"] = m.finished;
  if (!m.error.empty()) j["error"] = m.error;
  return j;
}

IterationManifest manifest_from_json(const json& j) {
  IterationManifest m;
  m.t = j.at("t").get<int>();
  const std::string status = j.at("status").get<std::string>();
  if (status == "complete") {
    m.status = ManifestStatus::complete;
  } else if (status == "failed") {
    m.status = ManifestStatus::failed;
  } else {
    fail(ErrorCode::parse, "manifest: unknown status '" + status + "'");
  }
  m.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  m.model_in = model_ref_from_json(j.at("model_in"));
  if (!j.at("model_out").is_null()) m.model_out = model_ref_from_json(j["model_out"]);
  m.train_base = model_ref_from_json(j.at("train_base"));
  m.train_datasets = j.at("train_datasets").get<std::vector<std::string>>();
  m.raw_path = j.at("raw_path").get<std::string>();
  m.scored_path = j.at("scored_path").get<std::string>();
  m.filtered_path = j.at("filtered_path").get<std::string>();
  m.rejected_path = j.at("rejected_path").get<std::string>();
  const auto& c = j.at("counts");
  m.counts.generated = c.at("generated").get<std::size_t>();
  m.counts.heuristic_kept = c.at("heuristic_kept").get<std::size_t>();
  m.counts.scored = c.at("scored").get<std::size_t>();
  m.counts.filtered_kept = c.at("filtered_kept").get<std::size_t>();
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  if (j.contains("error")) m.error = j["error"].get<std::string>();
  if (m.complete() && !m.model_out) fail(ErrorCode::parse, "manifest: complete without model_out");
  return m;
}

fs::path manifest_path(const fs::path& dir, int t) {
  return dir / ("manifest_" + std::to_string(t) + ".json");
}

fs::path write_manifest(const IterationManifest& m, const fs::path& dir, bool force) {
  const fs::path p = manifest_path(dir, m.t);
  if (!force && fs::exists(p)) {
    fail(ErrorCode::already_exists, "manifest for t=" + std::to_string(m.t) + " already exists: " + p.string());
  }
  fs::create_directories(dir);
  write_file_atomic(p, to_json(m).dump(2) + "\n");
  return p;
}

IterationManifest read_manifest(const fs::path& dir, int t) {
  const fs::path p = manifest_path(dir, t);
  if (!fs::exists(p)) fail(ErrorCode::not_found, "no manifest for t=" + std::to_string(t) + " in " + dir.string());
  try {
    IterationManifest m = manifest_from_json(json::parse(read_file(p)));
    if (m.t != t) fail(ErrorCode::parse, "manifest t mismatch in " + p.string());
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "corrupt manifest t=" + std::to_string(t) + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse) throw;
    fail(ErrorCode::parse, "corrupt manifest t=" + std::to_string(t) + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

std::optional<std::string> optional_input(const json& obj) {
  if (!obj.contains("input") || obj["input"].is_null()) return std::nullopt;
  std::string s = obj["input"].get<std::string>();
  if (text::trim(s).empty()) return std::nullopt;
  return s;
}

template <typename Fn>
void for_each_jsonl_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::not_found, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      json obj = json::parse(line);
      if (!obj.is_object()) fail(ErrorCode::parse, "expected a JSON object");
      fn(obj, lineno);
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::optional<int> optional_score(const json& obj, const char* key) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return obj[key].get<int>();
}

}  // namespace

std::vector<SeedTask> load_seed_pool(const fs::path& path) {
  std::vector<SeedTask> pool;
  for_each_jsonl_line(path, [&](const json& obj, std::size_t) {
    if (!obj.contains("instruction") || !obj["instruction"].is_string()) {
      fail(ErrorCode::parse, "missing \"instruction\"");
    }
    SeedTask task;
    task.instruction = std::string(text::trim(obj["instruction"].get<std::string>()));
    if (task.instruction.empty()) fail(ErrorCode::parse, "empty \"instruction\"");
    task.input = optional_input(obj);
    if (task.input) task.input = std::string(text::trim(*task.input));
    if (obj.contains("output") && !obj["output"].is_null()) {
      task.output = obj["output"].get<std::string>();
    }
    pool.push_back(std::move(task));
  });
  if (pool.empty()) fail(ErrorCode::invalid_argument, "seed pool is empty: " + path.string());
  return pool;
}

std::size_t save_dataset(const std::vector<PairRecord>& records, const fs::path& path,
                         DatasetMode mode) {
  std::ostringstream out;
  for (const auto& r : records) {
    ordered_json j;
    if (mode == DatasetMode::alpaca) {
      if (!r.output) fail(ErrorCode::invalid_argument, "record " + r.id + " has no output");
      if (r.rejected_by) {
        fail(ErrorCode::invalid_argument,
             "record " + r.id + " was rejected by " + std::string(to_string(*r.rejected_by)));
      }
      j["instruction"] = r.instruction;
      j["input"] = r.input.value_or("");
      j["output"] = *r.output;
    } else {
      j["id"] = r.id;
      j["iteration"] = r.iteration;
      j["instruction"] = r.instruction;
      j["input"] = r.input.value_or("");
      j["output"] = r.output ? json(*r.output) : json(nullptr);
      if (r.quality_score) j["quality_score"] = *r.quality_score;
      if (r.following_score) j["following_score"] = *r.following_score;
      if (r.ppl) j["ppl"] = *r.ppl;
      if (r.rejected_by) j["rejected_by"] = to_string(*r.rejected_by);
    }
    out << j.dump() << '\n';
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, out.str());
  return records.size();
}

std::vector<PairRecord> load_dataset(const fs::path& path, int default_iteration) {
  std::vector<PairRecord> records;
  for_each_jsonl_line(path, [&](const json& obj, std::size_t) {
    PairRecord r;
    if (!obj.contains("instruction") || !obj["instruction"].is_string()) {
      fail(ErrorCode::parse, "missing \"instruction\"");
    }
    r.instruction = obj["instruction"].get<std::string>();
    r.input = optional_input(obj);
    r.iteration = obj.contains("iteration") ? obj["iteration"].get<int>() : default_iteration;
    if (obj.contains("output") && !obj["output"].is_null()) r.output = obj["output"].get<std::string>();
    r.quality_score = optional_score(obj, "quality_score");
    r.following_score = optional_score(obj, "following_score");
    if (obj.contains("ppl") && !obj["ppl"].is_null()) r.ppl = obj["ppl"].get<double>();
    if (obj.contains("rejected_by") && !obj["rejected_by"].is_null()) {
      r.rejected_by = reject_stage_from_string(obj["rejected_by"].get<std::string>());
    }
    r.id = obj.contains("id") ? obj["id"].get<std::string>()
                              : make_record_id(r.iteration, r.instruction, r.input);
    r.validate();
    records.push_back(std::move(r));
  });
  return records;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorCode::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace loopforge
