#include <catch2/catch.hpp>

#include <fstream>
#include <set>

#include "moprior/io/manifest.hpp"
#include "moprior/io/phantom.hpp"
#include "support/oracles.hpp"

using namespace moprior;

namespace {

DatasetManifest synthetic_manifest(int n) {
  DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%04d", i);
    SubjectFiles e;
    e.subject_id = buf;
    e.files[Contrast::T1] = std::string(buf) + "-T1.nii";
    e.files[Contrast::T2] = std::string(buf) + "-T2.nii";
    e.files[Contrast::PD] = std::string(buf) + "-PD.nii";
    m.entries.push_back(std::move(e));
  }
  return m;
}

} // namespace

TEST_CASE("scan_directory groups IXI-style filenames by subject", "[io]") {
  const auto dir = oracles::fresh_temp_dir("scan");
  for (const char* name :
       {"IXI002-Guys-0828-T1.nii.gz", "IXI002-Guys-0828-T2.nii.gz", "IXI002-Guys-0828-PD.nii.gz",
        "IXI013-HH-1212-T2.nii", "IXI013-HH-1212-T1.nii", "notes.txt", "IXI999-bad.xyz"}) {
    std::ofstream(dir / name) << "x";
  }
  const DatasetManifest m = scan_directory(dir);
  REQUIRE(m.entries.size() == 2);
  REQUIRE(m.find("IXI002") != nullptr);
  REQUIRE(m.find("IXI013") != nullptr);
  const Contrast all3[] = {Contrast::T1, Contrast::T2, Contrast::PD};
  REQUIRE(m.has_all("IXI002", all3));
  REQUIRE_FALSE(m.has_all("IXI013", all3)); // PD missing: ineligible for contrast priors
  REQUIRE(m.has_contrast("IXI013", Contrast::T2));
}

TEST_CASE("split_subjects produces disjoint splits of the requested sizes", "[io]") {
  const DatasetManifest m = synthetic_manifest(300);
  const DatasetManifest s = split_subjects(m, 100, 100, 100, 7);

  const auto train = s.subjects_in(Split::train);
  const auto val = s.subjects_in(Split::val);
  const auto test = s.subjects_in(Split::test);
  REQUIRE(train.size() == 100);
  REQUIRE(val.size() == 100);
  REQUIRE(test.size() == 100);

  std::set<std::string> all;
  for (const auto& v : {train, val, test}) all.insert(v.begin(), v.end());
  REQUIRE(all.size() == 300);
}

TEST_CASE("split_subjects is a pure function of (manifest, counts, seed)", "[io]") {
  const DatasetManifest m = synthetic_manifest(30);
  const DatasetManifest a = split_subjects(m, 10, 5, 5, 99);
  const DatasetManifest b = split_subjects(m, 10, 5, 5, 99);
  REQUIRE(a.to_json() == b.to_json());
  const DatasetManifest c = split_subjects(m, 10, 5, 5, 100);
  REQUIRE(a.to_json() != c.to_json());
}

TEST_CASE("split_subjects rejects insufficient subjects", "[io]") {
  const DatasetManifest m = synthetic_manifest(150);
  REQUIRE_THROWS_AS(split_subjects(m, 100, 100, 100, 1), ConfigError);
}

TEST_CASE("manifest JSON round trip", "[io]") {
  DatasetManifest m = synthetic_manifest(4);
  m = split_subjects(m, 2, 1, 1, 3);
  const DatasetManifest r = DatasetManifest::from_json(m.to_json());
  REQUIRE(r.to_json() == m.to_json());
  REQUIRE(r.split_of(r.subjects().front()).has_value());
}

TEST_CASE("phantom generation is deterministic in the seed", "[io]") {
  PhantomSpec spec;
  spec.nx = spec.ny = 32;
  spec.nz = 4;
  const auto a = generate_phantom(5, spec, "P");
  const auto b = generate_phantom(5, spec, "P");
  const auto c = generate_phantom(6, spec, "P");
  for (const Contrast k : {Contrast::T1, Contrast::T2, Contrast::PD})
    REQUIRE(a.at(k).data == b.at(k).data);
  REQUIRE(a.at(Contrast::T2).data != c.at(Contrast::T2).data);
}

TEST_CASE("phantom contrasts share identical support masks", "[io]") {
  PhantomSpec spec;
  spec.nx = spec.ny = 48;
  spec.nz = 6;
  const auto vols = generate_phantom(21, spec, "P");
  const Volume& t1 = vols.at(Contrast::T1);
  const Volume& t2 = vols.at(Contrast::T2);
  const Volume& pd = vols.at(Contrast::PD);
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < t1.data.size(); ++i) {
    REQUIRE((t1.data[i] > 0.0f) == (t2.data[i] > 0.0f));
    REQUIRE((t1.data[i] > 0.0f) == (pd.data[i] > 0.0f));
    if (t1.data[i] > 0.0f) ++nonzero;
  }
  REQUIRE(nonzero > t1.data.size() / 10); // meaningful foreground
}

TEST_CASE("phantom volumes are normalized and bounded", "[io]") {
  PhantomSpec spec;
  const auto vols = generate_phantom(33, spec, "P");
  for (const auto& [k, v] : vols) {
    REQUIRE(v.normalized);
    REQUIRE_NOTHROW(v.validate());
  }
}

TEST_CASE("n_shapes = 0 yields background-only volumes", "[io]") {
  PhantomSpec spec;
  spec.n_shapes = 0;
  const auto vols = generate_phantom(1, spec, "P");
  for (const auto& [k, v] : vols)
    for (const float x : v.data) REQUIRE(x == 0.0f);
}

TEST_CASE("phantom rejects tiny in-plane sizes", "[io]") {
  PhantomSpec spec;
  spec.nx = 8;
  REQUIRE_THROWS_AS(spec.validate(), ConfigError);
}
