// Copyright 2026 The affsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Labeled dataset assembly: cleaning, episode-level splits, manifests.
//
// On disk a dataset directory holds
//   manifest.json              metadata, counts and split membership
//   train.jsonl, val.jsonl, test.jsonl
//   frames/epNNNN_NNNN.ppm

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "affsim/affordance.hpp"
#include "affsim/common.hpp"
#include "affsim/raster.hpp"
#include "affsim/sim.hpp"
#include "affsim/world.hpp"

namespace affsim {

inline constexpr int kManifestVersion = 1;

struct LabeledFrame {
  std::string frame_path;  // relative to the dataset directory
  std::optional<AffordanceVector> raw;  // absent when the ego was off-road
  EncodedAffordances encoded;
  double sim_time = 0.0;
  double time_of_day = 0.0;
  int episode = 0;
  std::uint64_t episode_seed = 0;
  int index = 0;
  int ego_segment = -1;
  bool collision = false;
  bool operator==(const LabeledFrame&) const = default;
};

inline nlohmann::json record_to_json(const LabeledFrame& r) {
  return {{"frame", r.frame_path},
          {"raw", r.raw ? affordances_to_json(*r.raw) : nlohmann::json(nullptr)},
          {"encoded", r.encoded.value},
          {"t", r.sim_time},
          {"time_of_day", r.time_of_day},
          {"episode", r.episode},
          {"episode_seed", r.episode_seed},
          {"index", r.index},
          {"segment", r.ego_segment},
          {"collision", r.collision}};
}

inline LabeledFrame record_from_json(const nlohmann::json& j) {
  LabeledFrame r;
  r.frame_path = j.at("frame").get<std::string>();
  if (!j.at("raw").is_null()) r.raw = affordances_from_json(j["raw"]);
  r.encoded.value = j.at("encoded").get<std::array<double, kNumAffordances>>();
  r.sim_time = j.at("t").get<double>();
  r.time_of_day = j.at("time_of_day").get<double>();
  r.episode = j.at("episode").get<int>();
  r.episode_seed = j.at("episode_seed").get<std::uint64_t>();
  r.index = j.at("index").get<int>();
  r.ego_segment = j.at("segment").get<int>();
  r.collision = j.at("collision").get<bool>();
  return r;
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

inline constexpr const char* kRejectOffRoad = "off-road ego";
inline constexpr const char* kRejectNonFinite = "non-finite label";
inline constexpr const char* kRejectCollision = "collision";
inline constexpr const char* kRejectEncode = "label outside encodable domain";

struct Rejection {
  LabeledFrame record;
  std::string reason;
};

struct CleanResult {
  std::vector<LabeledFrame> kept;
  std::vector<Rejection> rejected;
};

// Reason a record must be dropped, if any. Kept records get their encoded
// label refreshed from the raw one.
inline std::optional<std::string> rejection_reason(LabeledFrame& r, const NormalizationRanges& ranges) {
  if (!r.raw) return kRejectOffRoad;
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    if (r.raw->active[i] && !std::isfinite(r.raw->value[i])) return kRejectNonFinite;
  }
  if (r.collision) return kRejectCollision;
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    if (!r.raw->active[i]) continue;
    const double v = r.raw->value[i];
    if (i == idx(Aff::Angle) ? std::abs(v) > 180.0 : v < 0.0) return kRejectEncode;
  }
  try {
    r.encoded = encode(*r.raw, ranges);
  } catch (const Error&) {
    return kRejectEncode;
  }
  return std::nullopt;
}

inline CleanResult clean(std::vector<LabeledFrame> records, const NormalizationRanges& ranges) {
  CleanResult out;
  for (LabeledFrame& r : records) {
    if (auto why = rejection_reason(r, ranges)) {
      out.rejected.push_back({std::move(r), *why});
    } else {
      out.kept.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits and manifest
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.725;
  double val = 0.1375;
  double test = 0.1375;

  void validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9) {
      throw ConfigError("split ratios must be non-negative and sum to 1");
    }
  }
};

// Episode counts per split: val and test are floored from cumulative
// proportions and train takes the remainder.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& r) {
  r.validate();
  const auto nv = static_cast<std::size_t>(std::floor(n * r.val + 1e-9));
  const auto nvt = static_cast<std::size_t>(std::floor(n * (r.val + r.test) + 1e-9));
  return {n - nvt, nv, nvt - nv};
}

inline constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  NormalizationRanges ranges = NormalizationRanges::defaults();
  std::array<double, 3> channel_means{};
  CameraRig rig;
  std::array<std::vector<int>, 3> episodes;  // per split, sorted
  std::array<std::vector<LabeledFrame>, 3> records;
  std::map<std::string, int> rejected;  // reason -> count

  const std::vector<LabeledFrame>& split(const std::string& name) const {
    for (std::size_t i = 0; i < 3; ++i) {
      if (name == kSplitNames[i]) return records[i];
    }
    throw ConfigError("unknown split '" + name + "'");
  }
  std::size_t total() const { return records[0].size() + records[1].size() + records[2].size(); }
};

// Seeded episode-level split. Frames of one episode always share a split.
inline DatasetManifest split(const std::vector<LabeledFrame>& records, const SplitRatios& ratios,
                             std::uint64_t seed) {
  std::vector<int> ids;
  for (const auto& r : records) ids.push_back(r.episode);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  shuffle(ids, rng);
  const auto counts = split_counts(ids.size(), ratios);

  DatasetManifest m;
  m.seed = seed;
  m.ratios = ratios;
  std::map<int, std::size_t> which;
  // Shuffled order: val first, then test, then train.
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t s = i < counts[1] ? 1 : i < counts[1] + counts[2] ? 2 : 0;
    which[ids[i]] = s;
    m.episodes[s].push_back(ids[i]);
  }
  for (auto& e : m.episodes) std::sort(e.begin(), e.end());
  for (const auto& r : records) m.records[which.at(r.episode)].push_back(r);
  return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json counts = nlohmann::json::object(), episodes = nlohmann::json::object();
  for (std::size_t i = 0; i < 3; ++i) {
    counts[kSplitNames[i]] = m.records[i].size();
    episodes[kSplitNames[i]] = m.episodes[i];
  }
  counts["total"] = m.total();
  return {{"format", "affsim-dataset"},
          {"version", m.version},
          {"seed", m.seed},
          {"ratios", {{"train", m.ratios.train}, {"val", m.ratios.val}, {"test", m.ratios.test}}},
          {"ranges", m.ranges},
          {"channel_means", m.channel_means},
          {"rig", rig_to_json(m.rig)},
          {"counts", counts},
          {"episodes", episodes},
          {"rejected", m.rejected}};
}

// Parses the manifest metadata; records are loaded separately.
inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "affsim-dataset") throw ConfigError("not a dataset manifest");
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kManifestVersion) throw ConfigError("unsupported manifest version");
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& r = j.at("ratios");
  m.ratios = {r.at("train").get<double>(), r.at("val").get<double>(), r.at("test").get<double>()};
  m.ranges = j.at("ranges").get<NormalizationRanges>();
  m.channel_means = j.at("channel_means").get<std::array<double, 3>>();
  m.rig = rig_from_json(j.at("rig"));
  for (std::size_t i = 0; i < 3; ++i) m.episodes[i] = j.at("episodes").at(kSplitNames[i]).get<std::vector<int>>();
  m.rejected = j.at("rejected").get<std::map<std::string, int>>();
  return m;
}

inline std::string records_to_jsonl(const std::vector<LabeledFrame>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<LabeledFrame> records_from_jsonl(std::string_view text) {
  std::vector<LabeledFrame> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    if (!line.empty()) {
      try {
        out.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad record: ") + e.what(), start);
      }
    }
    start = end + 1;
  }
  return out;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file((dir / "manifest.json").string(), manifest_to_json(m).dump(2) + "\n");
  for (std::size_t i = 0; i < 3; ++i) {
    write_file((dir / (std::string(kSplitNames[i]) + ".jsonl")).string(), records_to_jsonl(m.records[i]));
  }
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
  DatasetManifest m;
  try {
    m = manifest_from_json(nlohmann::json::parse(read_file((dir / "manifest.json").string())));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what(), 0);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    m.records[i] = records_from_jsonl(read_file((dir / (std::string(kSplitNames[i]) + ".jsonl")).string()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerateConfig {
  int episodes = 100;
  int frames_per_episode = 40;
  std::uint64_t seed = 1;
  SplitRatios ratios;
  EpisodeConfig episode;  // seed and duration are set per episode
  CameraRig rig;
  std::filesystem::path out_dir;  // empty: frames are not written
};

inline std::string frame_name(int episode, int index) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "frames/ep%04d_%04d.ppm", episode, index);
  return buf;
}

// Called for every rendered frame that survives cleaning.
using FrameSink = std::function<void(const LabeledFrame&, const Frame&)>;

inline DatasetManifest generate_dataset(std::shared_ptr<const WorldMap> map, const GenerateConfig& cfg,
                                        const FrameSink& sink = {}) {
  if (cfg.episodes < 1 || cfg.frames_per_episode < 1) throw ConfigError("need at least one episode and frame");
  cfg.rig.validate();
  const NormalizationRanges ranges = NormalizationRanges::defaults(cfg.episode.max_car_distance);
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir / "frames");

  Rng seeds(cfg.seed);
  std::vector<LabeledFrame> kept;
  std::map<std::string, int> rejected;
  std::map<int, std::array<double, 4>> sums;  // per episode: r, g, b, pixel count
  for (int e = 0; e < cfg.episodes; ++e) {
    EpisodeConfig ec = cfg.episode;
    ec.seed = seeds();
    ec.duration_s = (cfg.frames_per_episode - 1) * ec.sample_interval_s;
    const EpisodeTrace trace = run_episode(map, ec);
    for (const Snapshot& s : trace.snapshots) {
      LabeledFrame r;
      r.frame_path = frame_name(e, s.index);
      r.raw = s.affordances;
      r.sim_time = s.sim_time;
      r.time_of_day = s.time_of_day;
      r.episode = e;
      r.episode_seed = ec.seed;
      r.index = s.index;
      r.ego_segment = s.ego_segment;
      r.collision = s.collision;
      if (auto why = rejection_reason(r, ranges)) {
        ++rejected[*why];
        continue;
      }
      const Frame f = render(*map, s, cfg.rig);
      if (!cfg.out_dir.empty()) write_file((cfg.out_dir / r.frame_path).string(), encode_ppm(f));
      auto& acc = sums[e];
      for (std::size_t i = 0; i < f.rgb.size(); i += 3) {
        acc[0] += f.rgb[i];
        acc[1] += f.rgb[i + 1];
        acc[2] += f.rgb[i + 2];
      }
      acc[3] += static_cast<double>(f.rgb.size() / 3);
      if (sink) sink(r, f);
      kept.push_back(std::move(r));
    }
  }

  DatasetManifest m = split(kept, cfg.ratios, cfg.seed);
  m.ranges = ranges;
  m.rig = cfg.rig;
  m.rejected = rejected;
  std::array<double, 4> train{};
  for (int e : m.episodes[0]) {
    for (std::size_t c = 0; c < 4; ++c) train[c] += sums[e][c];
  }
  if (train[3] > 0.0) {
    for (std::size_t c = 0; c < 3; ++c) m.channel_means[c] = train[c] / train[3];
  }
  if (!cfg.out_dir.empty()) save_manifest(m, cfg.out_dir);
  return m;
}

}  // namespace affsim
