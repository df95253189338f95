#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "moprior/core/error.hpp"
#include "moprior/core/rng.hpp"
#include "moprior/io/volume.hpp"

namespace moprior {

enum class Split { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
  case Split::train: return "train";
  case Split::val: return "val";
  case Split::test: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split label: " + s);
}

struct SubjectFiles {
  std::string subject_id;
  std::map<Contrast, std::string> files; // paths relative to the manifest dir
};

/// Index of a dataset on disk: per-subject contrast files plus an optional
/// train/val/test assignment. A subject appears in at most one split.
struct DatasetManifest {
  std::vector<SubjectFiles> entries; // sorted by subject_id, unique
  std::map<std::string, Split> split;

  const SubjectFiles* find(const std::string& subject) const {
    for (const auto& e : entries)
      if (e.subject_id == subject) return &e;
    return nullptr;
  }

  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.subject_id);
    return out;
  }

  std::vector<std::string> subjects_in(Split s) const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
      const auto it = split.find(e.subject_id);
      if (it != split.end() && it->second == s) out.push_back(e.subject_id);
    }
    return out;
  }

  std::optional<Split> split_of(const std::string& subject) const {
    const auto it = split.find(subject);
    if (it == split.end()) return std::nullopt;
    return it->second;
  }

  bool has_contrast(const std::string& subject, Contrast c) const {
    const SubjectFiles* e = find(subject);
    return e != nullptr && e->files.count(c) > 0;
  }

  /// Eligibility for the contrast-prior workflow: the subject must have the
  /// target contrast and every prior contrast.
  bool has_all(const std::string& subject, std::span<const Contrast> contrasts) const {
    const SubjectFiles* e = find(subject);
    if (e == nullptr) return false;
    for (const Contrast c : contrasts)
      if (e->files.count(c) == 0) return false;
    return true;
  }

  void sort_entries() {
    std::sort(entries.begin(), entries.end(),
              [](const SubjectFiles& a, const SubjectFiles& b) { return a.subject_id < b.subject_id; });
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    auto& arr = j["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
      nlohmann::json files = nlohmann::json::object();
      for (const auto& [c, p] : e.files) files[to_string(c)] = p;
      arr.push_back({{"subject", e.subject_id}, {"files", files}});
    }
    auto& sp = j["split"] = nlohmann::json::object();
    for (const auto& [sub, s] : split) sp[sub] = to_string(s);
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    for (const auto& e : j.at("entries")) {
      SubjectFiles f;
      f.subject_id = e.at("subject").get<std::string>();
      for (const auto& [key, val] : e.at("files").items())
        f.files[contrast_from_string(key)] = val.get<std::string>();
      m.entries.push_back(std::move(f));
    }
    if (j.contains("split"))
      for (const auto& [sub, s] : j["split"].items())
        m.split[sub] = split_from_string(s.get<std::string>());
    m.sort_entries();
    m.check();
    return m;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(IoErrc::write_failed, path.string());
    out << to_json().dump(2) << "\n";
    if (!out) throw IoError(IoErrc::write_failed, path.string());
  }

  static DatasetManifest load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoErrc::unreadable, path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw IoError(IoErrc::unreadable, path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  void check() const {
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].subject_id == entries[i - 1].subject_id)
        throw ConfigError("manifest: duplicate subject " + entries[i].subject_id);
    for (const auto& [sub, s] : split) {
      (void)s;
      if (find(sub) == nullptr) throw ConfigError("manifest: split references unknown subject " + sub);
    }
  }
};

namespace detail {

inline bool strip_suffix(const std::string& s, const std::string& suffix, std::string& stem) {
  if (s.size() <= suffix.size()) return false;
  if (s.compare(s.size() - suffix.size(), suffix.size(), suffix) != 0) return false;
  stem = s.substr(0, s.size() - suffix.size());
  return true;
}

} // namespace detail

/// Builds a manifest from filenames following <SubjectID>-<Site>-<Num>-<Contrast>.nii[.gz]
/// (also accepts the same pattern with .raw, and the short <SubjectID>-<Contrast> form).
/// Files with unparseable names or contrasts are skipped; subjects missing a
/// contrast stay listed and merely become ineligible for contrast priors.
inline DatasetManifest scan_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(IoErrc::unreadable, dir.string());
  DatasetManifest m;
  std::map<std::string, std::map<Contrast, std::string>> by_subject;

  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());

  for (const auto& p : paths) {
    std::string name = p.filename().string();
    std::string stem;
    if (detail::strip_suffix(name, ".nii.gz", stem) || detail::strip_suffix(name, ".nii", stem) ||
        detail::strip_suffix(name, ".raw", stem)) {
      const std::size_t dash = stem.rfind('-');
      if (dash == std::string::npos || dash + 1 >= stem.size()) continue;
      const std::string label = stem.substr(dash + 1);
      Contrast c;
      try {
        c = contrast_from_string(label);
      } catch (const ConfigError&) {
        continue;
      }
      if (c == Contrast::unknown) continue;
      const std::size_t first_dash = stem.find('-');
      const std::string subject = stem.substr(0, first_dash);
      by_subject[subject][c] = p.filename().string();
    }
  }

  for (auto& [subject, files] : by_subject)
    m.entries.push_back(SubjectFiles{subject, std::move(files)});
  m.sort_entries();
  return m;
}

/// Deterministically assigns disjoint train/val/test splits of the requested
/// sizes. Pure function of (manifest, counts, seed); subjects beyond the
/// requested total stay unassigned.
inline DatasetManifest split_subjects(const DatasetManifest& manifest, int n_train, int n_val,
                                      int n_test, std::uint64_t seed) {
  if (n_train < 0 || n_val < 0 || n_test < 0)
    throw ConfigError("split_subjects: negative split size");
  const int total = n_train + n_val + n_test;
  std::vector<std::string> subjects = manifest.subjects();
  if (static_cast<int>(subjects.size()) < total)
    throw ConfigError("split_subjects: insufficient subjects (" + std::to_string(subjects.size()) +
                      " < " + std::to_string(total) + ")");

  std::sort(subjects.begin(), subjects.end());
  Pcg32 rng(derive_seed(seed, "split"));
  rng.shuffle(subjects);

  DatasetManifest out = manifest;
  out.split.clear();
  int i = 0;
  for (; i < n_train; ++i) out.split[subjects[static_cast<std::size_t>(i)]] = Split::train;
  for (; i < n_train + n_val; ++i) out.split[subjects[static_cast<std::size_t>(i)]] = Split::val;
  for (; i < total; ++i) out.split[subjects[static_cast<std::size_t>(i)]] = Split::test;
  return out;
}

} // namespace moprior
