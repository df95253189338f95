#pragma once

#include <bit>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "moprior/io/nifti.hpp"
#include "moprior/io/volume.hpp"

namespace moprior {

static_assert(std::endian::native == std::endian::little,
              "raw volume format assumes a little-endian host");

namespace detail {

inline std::filesystem::path raw_sidecar_path(const std::filesystem::path& raw) {
  std::filesystem::path p = raw;
  p.replace_extension(".json");
  return p;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace detail

/// Reads the desk-test format: little-endian float32 array in C order for
/// shape (nx, ny, nz), with a JSON sidecar (same stem, .json) carrying shape,
/// spacing, contrast, subject_id and the normalized flag.
inline Volume read_raw_volume(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError(IoErrc::unreadable, path.string());
  const auto sidecar = detail::raw_sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) throw IoError(IoErrc::bad_sidecar, sidecar.string() + " missing");

  nlohmann::json j;
  try {
    std::ifstream in(sidecar);
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(IoErrc::bad_sidecar, sidecar.string() + ": " + e.what());
  }

  Volume v;
  try {
    const auto shape = j.at("shape");
    if (shape.size() != 3) throw IoError(IoErrc::non_3d_image, path.string());
    v.shape = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    if (j.contains("spacing"))
      v.spacing = {j["spacing"][0].get<double>(), j["spacing"][1].get<double>(),
                   j["spacing"][2].get<double>()};
    if (j.contains("contrast")) v.contrast = contrast_from_string(j["contrast"].get<std::string>());
    if (j.contains("subject_id")) v.subject_id = j["subject_id"].get<std::string>();
    if (j.contains("normalized")) v.normalized = j["normalized"].get<bool>();
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(IoErrc::bad_sidecar, sidecar.string() + ": " + e.what());
  }

  const std::size_t n = static_cast<std::size_t>(v.shape[0]) * v.shape[1] * v.shape[2];
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::unreadable, path.string());
  v.data.resize(n);
  in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
    throw IoError(IoErrc::unreadable, path.string() + " truncated");
  v.validate();
  return v;
}

inline void write_raw_volume(const Volume& v, const std::filesystem::path& path) {
  v.validate();
  nlohmann::json j;
  j["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
  j["spacing"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
  j["contrast"] = to_string(v.contrast);
  j["subject_id"] = v.subject_id;
  j["normalized"] = v.normalized;

  std::ofstream side(detail::raw_sidecar_path(path), std::ios::trunc);
  if (!side) throw IoError(IoErrc::write_failed, detail::raw_sidecar_path(path).string());
  side << j.dump(2) << "\n";
  if (!side) throw IoError(IoErrc::write_failed, detail::raw_sidecar_path(path).string());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failed, path.string());
  out.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  if (!out) throw IoError(IoErrc::write_failed, path.string());
}

/// Dispatching reader: .nii / .nii.gz -> NIfTI-1, .raw -> raw + JSON sidecar.
inline Volume read_volume(const std::filesystem::path& path) {
  const std::string s = path.string();
  if (detail::has_suffix(s, ".nii") || detail::has_suffix(s, ".nii.gz")) return read_nifti(path);
  if (detail::has_suffix(s, ".raw")) return read_raw_volume(path);
  throw IoError(IoErrc::unreadable, s + ": unrecognized volume extension");
}

/// Dispatching writer; data round-trips bit-exactly through read_volume.
inline void write_volume(const Volume& v, const std::filesystem::path& path) {
  const std::string s = path.string();
  if (detail::has_suffix(s, ".nii") || detail::has_suffix(s, ".nii.gz")) {
    write_nifti(v, path);
    return;
  }
  if (detail::has_suffix(s, ".raw")) {
    write_raw_volume(v, path);
    return;
  }
  throw IoError(IoErrc::write_failed, s + ": unrecognized volume extension");
}

} // namespace moprior
