#include <gtest/gtest.h>

#include <string>

#include "maps/harness.hpp"

namespace {

using namespace maps;
using namespace maps::harness;

const std::string kSamples = MAPS_SAMPLES_DIR;

TEST(KeyValueConfig, ParsesSeparatorsCommentsSectionsQuotes) {
  const auto kv = KeyValueConfig::parse_string(
      "# header\n[motor]\nkt = 0.05  # trailing\nrm: 9\nname = \"quoted name\"\n\n"
      "tag = 'x'\n");
  EXPECT_EQ(kv.get_double("kt", 0), 0.05);
  EXPECT_EQ(kv.get_double("rm", 0), 9.0);
  EXPECT_EQ(kv.get_string("name", ""), "quoted name");
  EXPECT_EQ(kv.get_string("tag", ""), "x");
  EXPECT_EQ(kv.get_string("missing", "fallback"), "fallback");
  EXPECT_TRUE(kv.unused_keys().empty());
}

TEST(KeyValueConfig, RejectsMalformedLines) {
  EXPECT_THROW(KeyValueConfig::parse_string("just words\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse_string("= 3\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse_string("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::load("/nonexistent/x.cfg"), ConfigError);
}

TEST(KeyValueConfig, TypedGetters) {
  const auto kv = KeyValueConfig::parse_string(
      "n = 42\nbad_n = 4.5\nflag = yes\noff = 0\nbad_flag = maybe\nlist = 1, 2.5 ,3\n"
      "bad_x = 1.0abc\n");
  EXPECT_EQ(kv.get_int("n", 0), 42);
  EXPECT_THROW(kv.get_int("bad_n", 0), ConfigError);
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_FALSE(kv.get_bool("off", true));
  EXPECT_THROW(kv.get_bool("bad_flag", false), ConfigError);
  EXPECT_EQ(kv.get_doubles("list", {}), (std::vector<double>{1.0, 2.5, 3.0}));
  EXPECT_THROW(kv.get_double("bad_x", 0), ConfigError);
  EXPECT_EQ(kv.get_int("absent", -7), -7);
}

TEST(KeyValueConfig, UnusedKeysAreReported) {
  const auto kv = KeyValueConfig::parse_string("a = 1\nb = 2\n");
  kv.get_double("a", 0);
  EXPECT_EQ(kv.unused_keys(), std::vector<std::string>{"b"});
  EXPECT_THROW(kv.reject_unknown(), ConfigError);
  kv.get_double("b", 0);
  EXPECT_NO_THROW(kv.reject_unknown());
}

TEST(MotorConfig, DefaultsAndOverrides) {
  const auto d = read_motor_config(KeyValueConfig{});
  EXPECT_EQ(d.params.kt, 0.042);
  EXPECT_EQ(d.b_min, 2.46e-6);
  EXPECT_EQ(d.b_max, 1.63e-4);
  EXPECT_EQ(d.sample_time, 0.002);
  EXPECT_EQ(d.discretization, Discretization::kForwardEuler);

  const auto o = read_motor_config(
      KeyValueConfig::parse_string("rm = 10\nb_max = 2e-4\ndiscretization = zoh\n"));
  EXPECT_EQ(o.params.rm, 10.0);
  EXPECT_EQ(o.b_max, 2e-4);
  EXPECT_EQ(o.discretization, Discretization::kExactZoh);
}

TEST(MotorConfig, RejectsInvalidValues) {
  auto bad = [](const std::string& text) {
    return read_motor_config(KeyValueConfig::parse_string(text));
  };
  EXPECT_THROW(bad("rm = -1\n"), ParameterError);
  EXPECT_THROW(bad("b_min = 1e-3\n"), ConfigError);
  EXPECT_THROW(bad("sample_time = 0\n"), ConfigError);
  EXPECT_THROW(bad("discretization = tustin\n"), ConfigError);
  EXPECT_THROW(bad("tau_s = 0.001\ntau_c = 0.002\n"), ParameterError);
}

TEST(MotorConfig, ShippedFilesLoad) {
  const auto e = read_motor_config(KeyValueConfig::load(kSamples + "/motor.cfg"));
  const auto z = read_motor_config(KeyValueConfig::load(kSamples + "/motor_zoh.cfg"));
  EXPECT_EQ(e.discretization, Discretization::kForwardEuler);
  EXPECT_EQ(z.discretization, Discretization::kExactZoh);
  EXPECT_NEAR(e.params.jeq(), 2.06e-5, 1e-12);
}

TEST(RunConfig, DefaultsToStepNoLoad) {
  const auto rc = read_run_config(KeyValueConfig{});
  EXPECT_EQ(rc.scenario.name, "step-no-load");
  EXPECT_EQ(rc.scenario.reference.kind, ReferenceKind::kStep);
  EXPECT_EQ(rc.scenario.reference.amplitude, 2.0);
  EXPECT_EQ(rc.scenario.ticks(), 15000u);
  EXPECT_EQ(rc.scenario.friction.b_at(12.0), rc.motor.b_min);
}

TEST(RunConfig, KeysOverridePreset) {
  const auto rc = read_run_config(KeyValueConfig::parse_string(
      "preset = sine-load\nfrequency = 0.25\nduration = 4\nseed = 99\nestimator = kf\n"
      "controller = fixed\nkf_model = 1\ncontroller_vertex = nominal\nq_lqr = 50, 1, 2\n"
      "r_lqr = 5\ninitial_state = 0.1, 0, 0\nmeasurement_noise = false\njoseph = true\n"));
  const auto& s = rc.scenario;
  EXPECT_EQ(s.reference.kind, ReferenceKind::kSine);
  EXPECT_EQ(s.reference.frequency, 0.25);
  EXPECT_EQ(s.ticks(), 2000u);
  EXPECT_EQ(s.seed, 99u);
  EXPECT_EQ(s.estimator, EstimatorKind::kKf);
  EXPECT_EQ(s.controller, ControllerKind::kFixed);
  EXPECT_EQ(s.kf_point, DesignPoint(1));
  EXPECT_FALSE(s.controller_point.has_value());
  EXPECT_EQ(rc.weights.Q(0, 0), 50.0);
  EXPECT_EQ(rc.weights.R, 5.0);
  EXPECT_EQ(s.initial_state[0], 0.1);
  EXPECT_FALSE(s.measurement_noise);
  EXPECT_EQ(s.covariance_form, CovarianceForm::kJoseph);
}

TEST(RunConfig, RejectsBadInput) {
  auto bad = [](const std::string& text) {
    return read_run_config(KeyValueConfig::parse_string(text));
  };
  EXPECT_THROW(bad("preset = nope\n"), ConfigError);
  EXPECT_THROW(bad("colour = blue\n"), ConfigError);
  EXPECT_THROW(bad("reference = ramp\n"), ConfigError);
  EXPECT_THROW(bad("sample_rate = 1000\n"), ConfigError);
  EXPECT_THROW(bad("kf_model = 2\n"), ConfigError);
  EXPECT_THROW(bad("controller_vertex = -1\n"), ConfigError);
  EXPECT_THROW(bad("estimator = ukf\n"), ConfigError);
  EXPECT_THROW(bad("initial_state = 1, 2\n"), ConfigError);
  EXPECT_THROW(bad("r_kf = 0\n"), ConfigError);
  EXPECT_THROW(bad("friction = 0:1e-5; 0:2e-5\n"), ConfigError);
  EXPECT_THROW(bad("friction = 0\n"), ConfigError);
  EXPECT_THROW(bad("friction_interp = ramp\n"), ConfigError);
  EXPECT_THROW(bad("duration = -1\n"), ConfigError);
  EXPECT_THROW(bad("v_limit = 0\n"), ConfigError);
}

TEST(RunConfig, FrictionSegmentsAndRamp) {
  const auto rc = read_run_config(KeyValueConfig::load(kSamples + "/custom_ramp.cfg"));
  const auto& f = rc.scenario.friction;
  ASSERT_EQ(f.segments.size(), 3u);
  EXPECT_TRUE(f.segments[1].dry);
  EXPECT_FALSE(f.segments[2].dry);
  EXPECT_EQ(f.interp, FrictionInterp::kRamp);
  EXPECT_NEAR(f.b_at(4.25), 0.5 * (2.46e-6 + 1.63e-4), 1e-15);
  EXPECT_EQ(f.b_at(5.0), 1.63e-4);
  EXPECT_EQ(rc.motor.discretization, Discretization::kExactZoh);
}

TEST(RunConfig, NamedFrictionSchedules) {
  const auto sw = read_run_config(
      KeyValueConfig::parse_string("friction = switch\nswitch_first = 1\nswitch_period = 2\n"
                                   "duration = 6\n"));
  EXPECT_EQ(sw.scenario.friction.b_at(0.5), sw.motor.b_min);
  EXPECT_EQ(sw.scenario.friction.b_at(1.5), sw.motor.b_max);
  EXPECT_EQ(sw.scenario.friction.b_at(3.5), sw.motor.b_min);
  const auto ld = read_run_config(
      KeyValueConfig::parse_string("friction = load\nload_start = 2\nload_end = 3\n"));
  EXPECT_TRUE(ld.scenario.friction.dry_at(2.5));
  EXPECT_FALSE(ld.scenario.friction.dry_at(3.5));
  const auto nom = read_run_config(KeyValueConfig::parse_string("friction = nominal\n"));
  EXPECT_EQ(nom.scenario.friction.b_at(0), nom.motor.params.b_m);
}

TEST(RunConfig, ShippedScenariosLoad) {
  for (const char* f : {"step_no_load.cfg", "sine_load.cfg", "friction_switch.cfg",
                        "custom_ramp.cfg"}) {
    EXPECT_NO_THROW(read_run_config(KeyValueConfig::load(kSamples + "/" + f))) << f;
  }
}

}  // namespace
