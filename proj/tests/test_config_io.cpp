#include <cstdlib>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "vcn/config.hpp"
#include "vcn/errors.hpp"
#include "vcn/io.hpp"

using namespace vcn;

TEST_CASE("fnv1a64 matches the published reference digests") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("ab") != fnv1a64("ba"));
}

TEST_CASE("number formatting is shortest and round-trips exactly") {
  CHECK(fmt(2.0) == "2");
  CHECK(fmt(0.5) == "0.5");
  CHECK(fmt(1.0 / 3.0) == "0.3333333333333333");
  CHECK(fmt(3.0 / 22.0) == "0.13636363636363635");

  for (double x : {1.0 / 3.0, 0.1, 1e-10, 1.7976931348623157e308, -2.5e-7,
                   3.141592653589793, 0.0, 123456.789}) {
    const std::string s = fmt(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }

  CHECK(fmt_u64(0) == "0");
  CHECK(fmt_u64(18446744073709551615ull) == "18446744073709551615");
  CHECK(fmt_hex16(0xabcull) == "0000000000000abc");
  CHECK(fmt_hex16(0xffffffffffffffffull) == "ffffffffffffffff");
  CHECK(csv_row({"a", "b", "c"}) == "a,b,c\n");
  CHECK(csv_row({"x"}) == "x\n");
}

TEST_CASE("artifact headers carry only inputs that define the run") {
  RunMeta meta;
  meta.config_hash = 0x0123456789abcdefull;
  meta.seed = 7;
  CHECK(artifact_header(meta) ==
        "# tool_version: vcn 1.0.0\n"
        "# config_hash: 0123456789abcdef\n"
        "# seed: 7\n");
}

TEST_CASE("artifacts write atomically and read back verbatim") {
  ensure_dir("io_test_tmp/deep/nested");
  RunMeta meta;
  meta.config_hash = fnv1a64("demo");
  meta.seed = 3;
  const std::string path = "io_test_tmp/deep/nested/out.csv";
  write_artifact(path, meta, "v,g\n1,2\n");
  const std::string back = read_file(path);
  CHECK(back == artifact_header(meta) + "v,g\n1,2\n");
  CHECK(read_file(path) == back);  // stable reread
  CHECK_THROWS_AS(read_file("io_test_tmp/does_not_exist"), ConfigError);
  CHECK_NOTHROW(ensure_dir("io_test_tmp/deep/nested"));  // idempotent
}

TEST_CASE("sample CSVs accept comments and reject junk") {
  ensure_dir("io_test_tmp");
  {
    std::ofstream out("io_test_tmp/samples.csv");
    out << "# v, g pairs\n"
        << "0.25, 0.5\n"
        << "\n"
        << "0.75,1.25\n";
  }
  const auto pts = read_samples_csv("io_test_tmp/samples.csv");
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].first == 0.25);
  CHECK(pts[0].second == 0.5);
  CHECK(pts[1].first == 0.75);
  CHECK(pts[1].second == 1.25);

  {
    std::ofstream out("io_test_tmp/bad.csv");
    out << "0.25, banana\n";
  }
  CHECK_THROWS_AS(read_samples_csv("io_test_tmp/bad.csv"), ConfigError);
  {
    std::ofstream out("io_test_tmp/empty.csv");
    out << "# nothing\n";
  }
  CHECK_THROWS_AS(read_samples_csv("io_test_tmp/empty.csv"), ConfigError);
  CHECK_THROWS_AS(read_samples_csv("io_test_tmp/missing.csv"), ConfigError);
}

namespace {

const char* kFullConfig = R"(
# full-surface configuration
[model]
g_L = 1.0
V_E = 2.0
V_R = 0.0
V_F = 1.0
a = 1.0
g_in = 1.0

[run]
seed = 42
threads = 3
out_dir = results/demo

[particle]
dt = 0.005
horizon = 12
n = 5000
snapshot_times = 0.5, 1.0, 2.5
record_spikes = no
zero_noise = on

[initial]
kind = box
v_lo = 0.1
v_hi = 0.6
g_lo = 0.5
g_hi = 2.5

[pde]
n_v = 100
n_g = 96
g_max = 8
dt = 0.02
scheme = explicit
mode = both
horizon = 5
snapshot_dt = 1
steady_tol = 1e-9
steady_max_iter = 200
steady_dt = 4

[ergodicity]
beta = 0.5
R = 2
R_compare = 9
v_r = 0.04
g_r = 0.02
lyapunov_R = 4
lyapunov_points_v = 3
lyapunov_points_g = 5
lyapunov_samples = 2000
lyapunov_horizon = 3
lyapunov_times = 10
minor_points_v = 6
minor_points_g = 7
minor_n_per_point = 1234
minor_dt = 0.02
hist_nv = 20
hist_ng = 22
hist_gmax = 9
block_v = 3
block_g = 5
study_horizon = 8
study_snapshot_dt = 0.5
study_dt = 0.02
study_mode = particle
study_floor = 1e-7

[validate]
times = 1, 2
n = 4000
particle_dt = 0.02
window_lo = 5
window_hi = 9
c1 = 0.5
c2 = 0.6
agg_v = 10
agg_g = 12
flux_tol = 1e-11
marginal_tol = 1e-7
rate_tol = 0.04
profile_tol = 0.2
marginal_horizon = 3
marginal_snapshot_dt = 0.5
)";

}  // namespace

TEST_CASE("a full config file lands every value in its slot") {
  const RunConfig rc = RunConfig::from_text(kFullConfig, ".");

  CHECK(rc.model.g_L == 1.0);
  CHECK(rc.model.V_E == 2.0);
  CHECK(rc.model.a == 1.0);
  CHECK(rc.seed == 42);
  CHECK(rc.threads == 3);
  CHECK(rc.out_dir == "results/demo");
  CHECK(rc.config_hash == fnv1a64(kFullConfig));

  CHECK(rc.particle.dt == 0.005);
  CHECK(rc.particle.horizon == 12.0);
  CHECK(rc.particle.n_particles == 5000);
  CHECK((rc.particle.snapshot_times == std::vector<double>{0.5, 1.0, 2.5}));
  CHECK(rc.particle.record_spikes == false);
  CHECK(rc.particle.zero_noise == true);
  CHECK(rc.particle.seed == 42);   // propagated from [run]
  CHECK(rc.particle.threads == 3);

  REQUIRE(std::holds_alternative<BoxInit>(rc.initial));
  const auto& box = std::get<BoxInit>(rc.initial);
  CHECK(box.v_lo == 0.1);
  CHECK(box.v_hi == 0.6);
  CHECK(box.g_lo == 0.5);
  CHECK(box.g_hi == 2.5);

  CHECK(rc.pde.n_v == 100);
  CHECK(rc.pde.n_g == 96);
  CHECK(rc.pde.g_max == 8.0);
  CHECK(rc.pde.dt == 0.02);
  CHECK(rc.pde.scheme == Scheme::explicit_euler);
  CHECK(rc.pde.mode == PdeRunConfig::Mode::both);
  CHECK(rc.pde.horizon == 5.0);
  CHECK(rc.pde.snapshot_dt == 1.0);
  CHECK(rc.pde.steady_tol == 1e-9);
  CHECK(rc.pde.steady_max_iter == 200);
  CHECK(rc.pde.steady_dt == 4.0);

  CHECK(rc.ergodicity.beta == 0.5);
  CHECK(rc.ergodicity.R == 2.0);
  CHECK(rc.ergodicity.R_compare == 9.0);
  CHECK(rc.ergodicity.v_r == 0.04);
  CHECK(rc.ergodicity.g_r == 0.02);
  CHECK(rc.ergodicity.lyapunov_R == 4.0);
  CHECK(rc.ergodicity.lyapunov_points_v == 3);
  CHECK(rc.ergodicity.lyapunov_points_g == 5);
  CHECK(rc.ergodicity.lyapunov_samples == 2000);
  CHECK(rc.ergodicity.lyapunov_horizon == 3.0);
  CHECK(rc.ergodicity.lyapunov_times == 10);
  CHECK(rc.ergodicity.minor.points_v == 6);
  CHECK(rc.ergodicity.minor.points_g == 7);
  CHECK(rc.ergodicity.minor.n_per_point == 1234);
  CHECK(rc.ergodicity.minor.dt == 0.02);
  CHECK(rc.ergodicity.minor.hist_nv == 20);
  CHECK(rc.ergodicity.minor.hist_ng == 22);
  CHECK(rc.ergodicity.minor.hist_gmax == 9.0);
  CHECK(rc.ergodicity.minor.block_v == 3);
  CHECK(rc.ergodicity.minor.block_g == 5);
  CHECK(rc.ergodicity.minor.seed == 42);
  CHECK(rc.ergodicity.minor.threads == 3);
  CHECK(rc.ergodicity.study_horizon == 8.0);
  CHECK(rc.ergodicity.study_snapshot_dt == 0.5);
  CHECK(rc.ergodicity.study_dt == 0.02);
  CHECK(rc.ergodicity.study_mode == StudyMode::particle);
  CHECK(rc.ergodicity.study_floor == 1e-7);

  CHECK((rc.validation.times == std::vector<double>{1.0, 2.0}));
  CHECK(rc.validation.n == 4000);
  CHECK(rc.validation.particle_dt == 0.02);
  CHECK(rc.validation.window_lo == 5.0);
  CHECK(rc.validation.window_hi == 9.0);
  CHECK(rc.validation.budget.c1 == 0.5);
  CHECK(rc.validation.budget.c2 == 0.6);
  CHECK(rc.validation.budget.agg_v == 10);
  CHECK(rc.validation.budget.agg_g == 12);
  CHECK(rc.validation.flux_tol == 1e-11);
  CHECK(rc.validation.marginal_tol == 1e-7);
  CHECK(rc.validation.rate_tol == 0.04);
  CHECK(rc.validation.profile_tol == 0.2);
  CHECK(rc.validation.marginal_horizon == 3.0);
  CHECK(rc.validation.marginal_snapshot_dt == 0.5);
}

TEST_CASE("an empty config is all defaults") {
  const RunConfig rc = RunConfig::from_text("", ".");
  CHECK(rc.seed == 1);
  CHECK(rc.threads == 1);
  CHECK(rc.out_dir == "out");
  CHECK(rc.pde.n_v == 200);
  CHECK(rc.pde.n_g == 200);
  CHECK(rc.validation.budget.c1 == 0.45);
  CHECK(rc.validation.budget.c2 == 0.45);
  CHECK(rc.ergodicity.beta == 1.0);
  REQUIRE(std::holds_alternative<PointInit>(rc.initial));
  CHECK(rc.config_hash == fnv1a64(""));
}

TEST_CASE("config errors name the offending entity") {
  CHECK_THROWS_WITH_AS(RunConfig::from_text("[cheese]\nx = 1\n", "."),
                       doctest::Contains("cheese"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_text("[model]\nbogus = 3\n", "."),
                       doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_text("[run]\nseed = 1\nseed = 2\n", "."),
                       doctest::Contains("duplicate key 'seed'"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_text("[run]\nthreads = zero\n", "."),
                       doctest::Contains("threads"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[run]\nseed\n", "."), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[particle]\nzero_noise = maybe\n", "."),
                  ConfigError);
  CHECK_THROWS_WITH_AS(
      RunConfig::from_text("[initial]\nkind = samples\n", "."),
      doctest::Contains("file"), ConfigError);
  // Values are validated, not just parsed.
  CHECK_THROWS_AS(
      RunConfig::from_text("[initial]\nkind = point\nv = 2.0\ng = 1.0\n", "."),
      ConfigError);
  CHECK_THROWS_AS(
      RunConfig::from_text("[model]\ng_L = -1\n", "."), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[run]\nthreads = 0\n", "."),
                  ConfigError);
}

TEST_CASE("sample-file initial conditions resolve against the config dir") {
  ensure_dir("io_test_tmp/cfgdir");
  {
    std::ofstream out("io_test_tmp/cfgdir/init.csv");
    out << "0.2, 0.8\n0.4, 1.6\n";
  }
  const char* text =
      "[initial]\n"
      "kind = samples\n"
      "file = init.csv\n";
  const RunConfig rc = RunConfig::from_text(text, "io_test_tmp/cfgdir");
  REQUIRE(std::holds_alternative<SampleInit>(rc.initial));
  const auto& pts = std::get<SampleInit>(rc.initial).points;
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].first == 0.2);
  CHECK(pts[1].second == 1.6);

  // An absolute-style path is taken as-is (still relative to cwd here).
  const RunConfig rc2 =
      RunConfig::from_text("[initial]\nkind = samples\nfile = io_test_tmp/cfgdir/init.csv\n", ".");
  CHECK(std::get<SampleInit>(rc2.initial).points.size() == 2);
}

TEST_CASE("from_file reads, hashes, and resolves like from_text") {
  ensure_dir("io_test_tmp/cfgdir");
  {
    std::ofstream out("io_test_tmp/cfgdir/run.ini");
    out << "[run]\nseed = 9\n[initial]\nkind = samples\nfile = init.csv\n";
  }
  const RunConfig rc = RunConfig::from_file("io_test_tmp/cfgdir/run.ini");
  CHECK(rc.seed == 9);
  CHECK(rc.config_hash ==
        fnv1a64(read_file("io_test_tmp/cfgdir/run.ini")));
  CHECK(std::get<SampleInit>(rc.initial).points.size() == 2);
  CHECK_THROWS_AS(RunConfig::from_file("io_test_tmp/nope.ini"), ConfigError);
}
