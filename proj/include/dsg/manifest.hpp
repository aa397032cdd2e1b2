#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/core.hpp"

namespace dsg {

// JSON-lines dataset ledger: a header line followed by one record per kept
// image, sorted by image_id. Wall-clock timings deliberately live in
// logs/*.jsonl instead, so manifests from identical configs are byte-equal.

struct ManifestRecord {
  int64_t image_id = 0;
  int64_t scene_id = 0;
  int camera_index = 0;
  std::string texture_method;
  std::string prompt;   // combined prompt; empty for random texturing
  uint64_t seed = 0;    // per-image texture seed
  std::map<std::string, std::string> paths;  // rgb/depth/mask/control, relative to the root
  std::string status;   // "ok" | "failed"
  std::string error;    // failure detail when status == "failed"
};

struct ManifestHeader {
  int version = 1;
  std::string generator;
  std::string config_hash;
  int64_t images = 0;   // scenes x cameras_per_scene
  int64_t records = 0;  // images - dropped
  int64_t dropped = 0;
  std::vector<int64_t> dropped_image_ids;
};

struct DatasetManifest {
  ManifestHeader header;
  std::vector<ManifestRecord> records;
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j{{"type", "record"},
                   {"image_id", r.image_id},
                   {"scene_id", r.scene_id},
                   {"camera_index", r.camera_index},
                   {"texture_method", r.texture_method},
                   {"prompt", r.prompt},
                   {"seed", r.seed},
                   {"paths", r.paths},
                   {"status", r.status}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.image_id = j.at("image_id").get<int64_t>();
  r.scene_id = j.at("scene_id").get<int64_t>();
  r.camera_index = j.at("camera_index").get<int>();
  r.texture_method = j.at("texture_method").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  for (auto& [k, v] : j.at("paths").items()) r.paths[k] = v.get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", "");
  return r;
}

inline void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  const ManifestHeader& h = manifest.header;
  nlohmann::json header{{"type", "header"},       {"version", h.version},
                        {"generator", h.generator}, {"config_hash", h.config_hash},
                        {"images", h.images},     {"records", h.records},
                        {"dropped", h.dropped},   {"dropped_image_ids", h.dropped_image_ids}};
  out << header.dump() << "\n";
  for (const auto& r : manifest.records) out << to_json(r).dump() << "\n";
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read " + path.string());
  DatasetManifest manifest;
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    std::string type = j.value("type", "record");
    if (type == "header") {
      manifest.header.version = j.at("version").get<int>();
      manifest.header.generator = j.value("generator", "");
      manifest.header.config_hash = j.value("config_hash", "");
      manifest.header.images = j.value("images", int64_t{0});
      manifest.header.records = j.value("records", int64_t{0});
      manifest.header.dropped = j.value("dropped", int64_t{0});
      if (j.contains("dropped_image_ids"))
        for (const auto& v : j.at("dropped_image_ids"))
          manifest.header.dropped_image_ids.push_back(v.get<int64_t>());
      have_header = true;
    } else {
      manifest.records.push_back(record_from_json(j));
    }
  }
  if (!have_header) fail(Errc::schema_error, path.string() + ": manifest header missing");
  return manifest;
}

}  // namespace dsg
