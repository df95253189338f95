#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "moprior/core/error.hpp"
#include "moprior/io/volume.hpp"

namespace moprior {

namespace nifti_detail {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

// NIfTI-1 datatype codes.
constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;

template <typename T>
void bswap(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

inline void swap_header(Nifti1Header& h) {
  bswap(h.sizeof_hdr);
  bswap(h.extents);
  bswap(h.session_error);
  for (auto& d : h.dim) bswap(d);
  bswap(h.intent_p1);
  bswap(h.intent_p2);
  bswap(h.intent_p3);
  bswap(h.intent_code);
  bswap(h.datatype);
  bswap(h.bitpix);
  bswap(h.slice_start);
  for (auto& p : h.pixdim) bswap(p);
  bswap(h.vox_offset);
  bswap(h.scl_slope);
  bswap(h.scl_inter);
  bswap(h.slice_end);
  bswap(h.cal_max);
  bswap(h.cal_min);
  bswap(h.slice_duration);
  bswap(h.toffset);
  bswap(h.glmax);
  bswap(h.glmin);
  bswap(h.qform_code);
  bswap(h.sform_code);
  bswap(h.quatern_b);
  bswap(h.quatern_c);
  bswap(h.quatern_d);
  bswap(h.qoffset_x);
  bswap(h.qoffset_y);
  bswap(h.qoffset_z);
  for (auto& s : h.srow_x) bswap(s);
  for (auto& s : h.srow_y) bswap(s);
  for (auto& s : h.srow_z) bswap(s);
}

/// Parses "moprior;subject=S;contrast=T2;normalized=1" descrip strings the
/// writer emits, so metadata survives a NIfTI round trip.
inline void parse_descrip(const std::string& descrip, Volume& v) {
  const std::string prefix = "moprior;";
  if (descrip.rfind(prefix, 0) != 0) return;
  std::size_t pos = prefix.size();
  while (pos < descrip.size()) {
    const std::size_t eq = descrip.find('=', pos);
    if (eq == std::string::npos) break;
    std::size_t end = descrip.find(';', eq);
    if (end == std::string::npos) end = descrip.size();
    const std::string key = descrip.substr(pos, eq - pos);
    const std::string val = descrip.substr(eq + 1, end - eq - 1);
    if (key == "subject") v.subject_id = val;
    else if (key == "contrast") v.contrast = contrast_from_string(val);
    else if (key == "normalized") v.normalized = (val == "1");
    pos = end + 1;
  }
}

class GzReader {
public:
  explicit GzReader(const std::filesystem::path& p) : f_(gzopen(p.string().c_str(), "rb")) {
    if (f_ == nullptr) throw IoError(IoErrc::unreadable, p.string());
  }
  ~GzReader() {
    if (f_ != nullptr) gzclose(f_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(void* dst, std::size_t n, const std::string& what) {
    std::size_t done = 0;
    auto* out = static_cast<unsigned char*>(dst);
    while (done < n) {
      const unsigned chunk =
          static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 28));
      const int got = gzread(f_, out + done, chunk);
      if (got <= 0) throw IoError(IoErrc::unreadable, "truncated " + what);
      done += static_cast<std::size_t>(got);
    }
  }

  void skip(std::size_t n) {
    std::vector<unsigned char> sink(std::min<std::size_t>(n, 65536));
    std::size_t left = n;
    while (left > 0) {
      const std::size_t chunk = std::min(left, sink.size());
      read_exact(sink.data(), chunk, "header padding");
      left -= chunk;
    }
  }

private:
  gzFile f_;
};

} // namespace nifti_detail

/// Reads a 3D NIfTI-1 image (.nii or .nii.gz; gzip detected transparently).
/// Integer and float datatypes are cast to float32; scl_slope/scl_inter are
/// applied when set. Detached .hdr/.img pairs are not supported.
inline Volume read_nifti(const std::filesystem::path& path) {
  using namespace nifti_detail;
  if (!std::filesystem::exists(path)) throw IoError(IoErrc::unreadable, path.string());
  GzReader in(path);

  Nifti1Header h{};
  in.read_exact(&h, sizeof(h), "NIfTI header");
  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348)
      throw IoError(IoErrc::unreadable, path.string() + " is not a NIfTI-1 file");
  }
  if (std::memcmp(h.magic, "n+1", 3) != 0) {
    if (std::memcmp(h.magic, "ni1", 3) == 0)
      throw IoError(IoErrc::unreadable, "detached .hdr/.img pairs are not supported");
    throw IoError(IoErrc::unreadable, path.string() + " has no NIfTI-1 magic");
  }

  int ndim = h.dim[0];
  // Trailing singleton dimensions are tolerated (e.g. 4D with one volume).
  while (ndim > 3 && h.dim[ndim] == 1) --ndim;
  if (ndim != 3) throw IoError(IoErrc::non_3d_image, path.string());
  for (int a = 1; a <= 3; ++a)
    if (h.dim[a] <= 0) throw IoError(IoErrc::unreadable, "non-positive dimension");

  const int nx = h.dim[1];
  const int ny = h.dim[2];
  const int nz = h.dim[3];
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;

  std::size_t elem = 0;
  switch (h.datatype) {
  case DT_UINT8: elem = 1; break;
  case DT_INT16: elem = 2; break;
  case DT_INT32: elem = 4; break;
  case DT_FLOAT32: elem = 4; break;
  case DT_FLOAT64: elem = 8; break;
  default:
    throw IoError(IoErrc::unknown_datatype,
                  path.string() + " datatype code " + std::to_string(h.datatype));
  }

  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < sizeof(Nifti1Header)) throw IoError(IoErrc::unreadable, "bad vox_offset");
  in.skip(offset - sizeof(Nifti1Header));

  std::vector<unsigned char> raw(n * elem);
  in.read_exact(raw.data(), raw.size(), "voxel data");

  // NIfTI stores x fastest; convert to this library's C order (z fastest).
  Volume v(nx, ny, nz);
  v.spacing = {static_cast<double>(h.pixdim[1]), static_cast<double>(h.pixdim[2]),
               static_cast<double>(h.pixdim[3])};
  for (auto& s : v.spacing)
    if (!(s > 0.0)) s = 1.0;

  const bool rescale = h.scl_slope != 0.0f && (h.scl_slope != 1.0f || h.scl_inter != 0.0f);
  std::size_t src = 0;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x, ++src) {
        const unsigned char* p = raw.data() + src * elem;
        float val = 0.0f;
        switch (h.datatype) {
        case DT_UINT8: val = static_cast<float>(*p); break;
        case DT_INT16: {
          std::int16_t t;
          std::memcpy(&t, p, 2);
          if (swapped) bswap(t);
          val = static_cast<float>(t);
          break;
        }
        case DT_INT32: {
          std::int32_t t;
          std::memcpy(&t, p, 4);
          if (swapped) bswap(t);
          val = static_cast<float>(t);
          break;
        }
        case DT_FLOAT32: {
          float t;
          std::memcpy(&t, p, 4);
          if (swapped) bswap(t);
          val = t;
          break;
        }
        case DT_FLOAT64: {
          double t;
          std::memcpy(&t, p, 8);
          if (swapped) bswap(t);
          val = static_cast<float>(t);
          break;
        }
        default: break;
        }
        if (rescale) val = h.scl_slope * val + h.scl_inter;
        v.at(x, y, z) = val;
      }
    }
  }

  std::string descrip(h.descrip, h.descrip + sizeof(h.descrip));
  descrip = descrip.substr(0, descrip.find('\0'));
  parse_descrip(descrip, v);
  v.validate();
  return v;
}

/// Writes float32 NIfTI-1 (.nii plain, .nii.gz via zlib). Subject, contrast
/// and the normalized flag are stashed in descrip so they round-trip.
inline void write_nifti(const Volume& v, const std::filesystem::path& path) {
  using namespace nifti_detail;
  v.validate();

  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(v.shape[0]);
  h.dim[2] = static_cast<std::int16_t>(v.shape[1]);
  h.dim[3] = static_cast<std::int16_t>(v.shape[2]);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.datatype = DT_FLOAT32;
  h.bitpix = 32;
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = static_cast<float>(v.spacing[0]);
  h.pixdim[2] = static_cast<float>(v.spacing[1]);
  h.pixdim[3] = static_cast<float>(v.spacing[2]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2; // millimetres
  h.sform_code = 1;
  h.srow_x[0] = static_cast<float>(v.spacing[0]);
  h.srow_y[1] = static_cast<float>(v.spacing[1]);
  h.srow_z[2] = static_cast<float>(v.spacing[2]);
  std::memcpy(h.magic, "n+1", 4);

  const std::string descrip = "moprior;subject=" + v.subject_id +
                              ";contrast=" + to_string(v.contrast) +
                              ";normalized=" + (v.normalized ? "1" : "0");
  std::memset(h.descrip, 0, sizeof(h.descrip));
  std::memcpy(h.descrip, descrip.data(), std::min(descrip.size(), sizeof(h.descrip) - 1));

  // Repack into NIfTI x-fastest order.
  std::vector<float> packed(v.numel());
  std::size_t dst = 0;
  for (int z = 0; z < v.shape[2]; ++z)
    for (int y = 0; y < v.shape[1]; ++y)
      for (int x = 0; x < v.shape[0]; ++x, ++dst) packed[dst] = v.at(x, y, z);

  const char extender[4] = {0, 0, 0, 0};
  const std::string name = path.string();
  const bool gz = name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(name.c_str(), "wb");
    if (f == nullptr) throw IoError(IoErrc::write_failed, name);
    bool ok = gzwrite(f, &h, sizeof(h)) == static_cast<int>(sizeof(h));
    ok = ok && gzwrite(f, extender, 4) == 4;
    const auto bytes = static_cast<unsigned>(packed.size() * sizeof(float));
    ok = ok && gzwrite(f, packed.data(), bytes) == static_cast<int>(bytes);
    ok = (gzclose(f) == Z_OK) && ok;
    if (!ok) throw IoError(IoErrc::write_failed, name);
  } else {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(IoErrc::write_failed, name);
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    f.write(extender, 4);
    f.write(reinterpret_cast<const char*>(packed.data()),
            static_cast<std::streamsize>(packed.size() * sizeof(float)));
    if (!f) throw IoError(IoErrc::write_failed, name);
  }
}

} // namespace moprior
