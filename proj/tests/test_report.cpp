#include <catch2/catch.hpp>

#include "moprior/metrics/report.hpp"
#include "support/oracles.hpp"

using namespace moprior;

namespace {

std::vector<SliceSample> eval_samples(int n, std::uint64_t seed) {
  std::vector<SliceSample> out;
  for (int i = 0; i < n; ++i) {
    SliceSample s;
    s.subject_id = "S" + std::to_string(i);
    s.slice_index = i;
    s.target = oracles::structured_image(24, 24, seed + static_cast<std::uint64_t>(i));
    s.corrupted = s.target;
    Pcg32 rng(derive_seed(seed, "noise", static_cast<std::uint64_t>(i)));
    for (float& v : s.corrupted.data)
      v = std::clamp(v + static_cast<float>(rng.uniform(-0.2, 0.2)), 0.0f, 1.0f);
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace

TEST_CASE("identity predictor mirrors the corrupted scores", "[report]") {
  const auto samples = eval_samples(4, 1);
  const EvalReport r = evaluate(identity_predictor(), samples, {}, "corrupted");
  REQUIRE(r.ssim_corrupted == r.ssim_output);
  REQUIRE(r.sample_ids.size() == 4);
}

TEST_CASE("a perfect predictor scores 1 everywhere", "[report]") {
  const auto samples = eval_samples(3, 2);
  const EvalReport r =
      evaluate([](const SliceSample& s) { return s.target; }, samples, {}, "oracle");
  for (const double v : r.ssim_output) REQUIRE(v == Approx(1.0).margin(1e-9));
}

TEST_CASE("three samples give lists of length three with the middle median", "[report]") {
  const auto samples = eval_samples(3, 3);
  const EvalReport r = evaluate(identity_predictor(), samples, {}, "m");
  REQUIRE(r.ssim_output.size() == 3);
  std::vector<double> sorted = r.ssim_output;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(r.output_summary().median == Approx(sorted[1]));
  REQUIRE(r.output_summary().min == Approx(sorted[0]));
  REQUIRE(r.output_summary().max == Approx(sorted[2]));
}

TEST_CASE("summary aggregates are recomputable and consistent", "[report]") {
  const Summary s = Summary::of({0.1, 0.9, 0.5, 0.3, 0.7});
  REQUIRE(s.mean == Approx(0.5));
  REQUIRE(s.median == Approx(0.5));
  REQUIRE(s.q1 == Approx(0.3));
  REQUIRE(s.q3 == Approx(0.7));
  REQUIRE(s.min == 0.1);
  REQUIRE(s.max == 0.9);
}

TEST_CASE("aggregate emits one row per report and pairwise diffs", "[report]") {
  const auto samples = eval_samples(4, 4);
  const EvalReport a = evaluate(identity_predictor(), samples, {}, "a");
  const EvalReport b = evaluate([](const SliceSample& s) { return s.target; }, samples, {}, "b");

  const Comparison single = aggregate({a});
  REQUIRE(single.rows.size() == 1);
  REQUIRE(single.rows[0].output.median == Approx(a.output_summary().median));
  REQUIRE(single.median_diffs.empty());

  const Comparison pair = aggregate({a, b});
  REQUIRE(pair.rows.size() == 2);
  REQUIRE(pair.median_diffs.size() == 1);
  REQUIRE(pair.median_diffs[0].diff ==
          Approx(a.output_summary().median - b.output_summary().median));

  EvalReport same = a;
  same.method = "a2";
  const Comparison dup = aggregate({a, same});
  REQUIRE(dup.median_diffs[0].diff == Approx(0.0).margin(1e-15));
}

TEST_CASE("per-slice domination implies median ordering", "[report]") {
  const auto samples = eval_samples(5, 5);
  const EvalReport base = evaluate(identity_predictor(), samples, {}, "base");
  EvalReport worse = base;
  worse.method = "worse";
  for (double& v : worse.ssim_output) v -= 0.05;
  const Comparison c = aggregate({base, worse});
  REQUIRE(c.rows[0].output.median >= c.rows[1].output.median);
}

TEST_CASE("aggregate rejects mismatched sample sets", "[report]") {
  const EvalReport a = evaluate(identity_predictor(), eval_samples(3, 6), {}, "a");
  const EvalReport b = evaluate(identity_predictor(), eval_samples(4, 7), {}, "b");
  REQUIRE_THROWS_AS(aggregate({a, b}), ConfigError);
}

TEST_CASE("report JSON and comparison CSV round trips", "[report]") {
  const auto dir = oracles::fresh_temp_dir("report");
  const auto samples = eval_samples(4, 8);
  const EvalReport r = evaluate(identity_predictor(), samples, {}, "method-x");
  r.save(dir / "r.json");

  std::ifstream in(dir / "r.json");
  nlohmann::json j;
  in >> j;
  const EvalReport back = EvalReport::from_json(j);
  REQUIRE(back.method == r.method);
  REQUIRE(back.ssim_output == r.ssim_output);

  const Comparison c = aggregate({r});
  write_comparison_csv(c, dir / "c.csv");
  write_median_diffs_csv(c, dir / "d.csv");
  const Comparison cc = read_comparison_csv(dir / "c.csv");
  REQUIRE(cc.rows.size() == 1);
  REQUIRE(cc.rows[0].method == "method-x");
  REQUIRE(cc.rows[0].output.median == Approx(c.rows[0].output.median).margin(1e-9));
}

TEST_CASE("empty sample list is rejected", "[report]") {
  REQUIRE_THROWS_AS(evaluate(identity_predictor(), {}, {}, "x"), ConfigError);
}
