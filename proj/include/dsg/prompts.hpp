#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/core.hpp"
#include "dsg/rng.hpp"

namespace dsg {

enum class PromptStrategy { classname, captions, llm_combined };

inline const char* prompt_strategy_name(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::classname: return "classname";
    case PromptStrategy::captions: return "captions";
    case PromptStrategy::llm_combined: return "llm_combined";
  }
  return "?";
}

inline PromptStrategy prompt_strategy_from_name(const std::string& s) {
  if (s == "classname") return PromptStrategy::classname;
  if (s == "captions") return PromptStrategy::captions;
  if (s == "llm_combined") return PromptStrategy::llm_combined;
  fail(Errc::parse_error, "unknown prompt strategy '" + s + "'");
}

struct PromptSpec {
  std::string object_text;
  std::string background_text;
  std::string combined;
  PromptStrategy strategy = PromptStrategy::classname;
  std::vector<int64_t> source_ids;  // provenance: caption line / pool indices
};

inline PromptSpec classname_prompt(const std::string& category) {
  if (category.empty()) fail(Errc::empty_category, "classname_prompt: empty category");
  PromptSpec p;
  p.strategy = PromptStrategy::classname;
  p.combined = "A photo of a " + category;
  p.object_text = p.combined;
  return p;
}

namespace detail {

inline std::vector<std::string> read_nonblank_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

// n uniform draws with replacement from a newline-delimited caption file;
// blank lines are skipped.
inline std::vector<PromptSpec> sample_caption_prompts(const std::filesystem::path& file, size_t n,
                                                      uint64_t seed) {
  auto captions = detail::read_nonblank_lines(file);
  if (captions.empty()) fail(Errc::empty_file, "no captions in " + file.string());
  Rng rng = Rng::from_stream(seed, 0, Stream::prompt);
  std::vector<PromptSpec> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    size_t k = rng.uniform_index(captions.size());
    PromptSpec p;
    p.strategy = PromptStrategy::captions;
    p.combined = captions[k];
    p.object_text = captions[k];
    p.source_ids = {static_cast<int64_t>(k)};
    out.push_back(std::move(p));
  }
  return out;
}

struct DescriptionPool {
  std::vector<std::string> object_descriptions;
  std::vector<std::string> surface_descriptions;

  bool valid() const { return !object_descriptions.empty() && !surface_descriptions.empty(); }

  // JSON format: {"objects": [...], "surfaces": [...]}.
  static DescriptionPool load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot read " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, path.string() + ": " + e.what());
    }
    DescriptionPool pool;
    for (const auto& s : j.at("objects")) pool.object_descriptions.push_back(s.get<std::string>());
    for (const auto& s : j.at("surfaces")) pool.surface_descriptions.push_back(s.get<std::string>());
    return pool;
  }

  static DescriptionPool load_text(const std::filesystem::path& objects_file,
                                   const std::filesystem::path& surfaces_file) {
    DescriptionPool pool;
    pool.object_descriptions = detail::read_nonblank_lines(objects_file);
    pool.surface_descriptions = detail::read_nonblank_lines(surfaces_file);
    return pool;
  }
};

// n independent uniform (object, surface) pairs joined as
// "{object}, on {surface}"; deterministic per seed.
inline std::vector<PromptSpec> combine_descriptions(const DescriptionPool& pool, size_t n,
                                                    uint64_t seed) {
  if (!pool.valid()) fail(Errc::empty_pool, "description pool needs objects and surfaces");
  Rng rng = Rng::from_stream(seed, 1, Stream::prompt);
  std::vector<PromptSpec> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    size_t oi = rng.uniform_index(pool.object_descriptions.size());
    size_t si = rng.uniform_index(pool.surface_descriptions.size());
    PromptSpec p;
    p.strategy = PromptStrategy::llm_combined;
    p.object_text = pool.object_descriptions[oi];
    p.background_text = pool.surface_descriptions[si];
    p.combined = p.object_text + ", on " + p.background_text;
    p.source_ids = {static_cast<int64_t>(oi), static_cast<int64_t>(si)};
    out.push_back(std::move(p));
  }
  return out;
}

// The description query sent to an LLM (an offline step; the resulting
// description files are what the pipeline ingests).
inline std::string llm_description_request(const std::string& category_or_surface) {
  if (category_or_surface.empty()) fail(Errc::empty_category, "llm_description_request: empty subject");
  return "provide a description for " + category_or_surface +
         ". Include color, patterns, materials and other visual characteristics.";
}

}  // namespace dsg
