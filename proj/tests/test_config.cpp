#include <catch2/catch_amalgamated.hpp>

#include "flowguide/config.hpp"

using namespace flowguide;

namespace {

const char* kMinimalConfig = R"(
name = "unit"            # experiment id
seed = 3

[schedule]
kind = "cond_ot"
eps = 1e-3

[model]
type = "mixture"
dim = 2
weights = [0.5, 0.5]
means = [
  [2.0, 0.0],
  [-2.0, 0.0],   # trailing comma tolerated
]

[solver]
scheme = "midpoint"
n_steps = 24
grid = "uniform_gamma"

[loss]
kind = "quadratic"
target = [2.0, 0.0]
)";

}  // namespace

TEST_CASE("toml parsing: scalars, arrays, comments") {
    const auto root = parse_toml(R"(
title = "a # not a comment"  # real comment
count = 42
ratio = -1.5e-3
flag = true
xs = [1, 2.5, 3]
[outer.inner]
key = "v"
)");
    CHECK(root.find("title")->as_string() == "a # not a comment");
    CHECK(root.find("count")->as_int() == 42);
    CHECK(root.find("ratio")->as_double() == Catch::Approx(-1.5e-3));
    CHECK(root.find("flag")->as_bool() == true);
    CHECK(root.find("xs")->items().size() == 3u);
    CHECK(root.find("xs")->items()[1].as_double() == 2.5);
    CHECK(root.find("outer")->find("inner")->find("key")->as_string() == "v");
}

TEST_CASE("toml parsing rejects malformed input") {
    CHECK_THROWS_AS(parse_toml("key ="), ConfigError);
    CHECK_THROWS_AS(parse_toml("justtext"), ConfigError);
    CHECK_THROWS_AS(parse_toml("a = 1\na = 2"), ConfigError);       // duplicate
    CHECK_THROWS_AS(parse_toml("a = [1, 2"), ConfigError);          // unterminated
    CHECK_THROWS_AS(parse_toml("a = \"oops"), ConfigError);         // unterminated string
    CHECK_THROWS_AS(parse_toml("a = 12abc"), ConfigError);          // junk scalar
    CHECK_THROWS_AS(parse_toml("[t]\na = 1\n[t.a]\nb = 2"), ConfigError);
}

TEST_CASE("set_path creates intermediate tables and overrides leaves") {
    TomlValue root = parse_toml("a = 1\n[s]\nb = 2");
    root.set_path({"s", "b"}, TomlValue::integer(9));
    CHECK(root.find("s")->find("b")->as_int() == 9);
    root.set_path({"fresh", "leaf"}, TomlValue::real(0.5));
    CHECK(root.find("fresh")->find("leaf")->as_double() == 0.5);
}

TEST_CASE("experiment config parses and builds the model") {
    const auto cfg = ExperimentConfig::parse(parse_toml(kMinimalConfig));
    CHECK(cfg.name() == "unit");
    CHECK(cfg.seed() == 3u);
    CHECK(cfg.solver().scheme == Scheme::Midpoint);
    CHECK(cfg.solver().n_steps == 24);
    CHECK(cfg.solver().grid == GridKind::UniformGamma);
    const auto model = cfg.build_model();
    CHECK(model.dim() == 2);
    CHECK(model.backend() == Backend::AnalyticMixture);
    CHECK(cfg.loss().kind() == LossKind::Quadratic);
}

TEST_CASE("strict mode rejects unknown keys, naming them") {
    std::string text = kMinimalConfig;
    text += "\n[solver2]\nx = 1\n";
    try {
        ExperimentConfig::parse(parse_toml(text));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("solver2") != std::string::npos);
    }

    std::string typo = kMinimalConfig;
    typo += "\n[guidance]\neta = 0.5\netaschedule = \"constant\"\n";
    try {
        ExperimentConfig::parse(parse_toml(typo));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("etaschedule") != std::string::npos);
    }
}

TEST_CASE("config validation names the offending field") {
    std::string bad = kMinimalConfig;
    // negative n_steps must be rejected with a message carrying the field name
    TomlValue root = parse_toml(bad);
    root.set_path({"solver", "n_steps"}, TomlValue::integer(-4));
    const auto cfg = ExperimentConfig::parse(root);
    try {
        make_grid(cfg.schedule(), cfg.solver());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("n_steps") != std::string::npos);
    }
}

TEST_CASE("loss and problem blocks are mutually exclusive") {
    std::string text = kMinimalConfig;
    text += R"(
[problem]
kind = "mask"
mask = [0]
truth = [2.0, 0.0]
beta_y = 0.05
)";
    CHECK_THROWS_AS(ExperimentConfig::parse(parse_toml(text)), ConfigError);
}

TEST_CASE("covariance options: explicit row-major matrices") {
    const char* text = R"(
name = "cov"
[model]
type = "mixture"
dim = 2
weights = [1.0]
means = [[0.0, 0.0]]
covariances = [[2.0, 0.5, 0.5, 1.0]]
)";
    const auto cfg = ExperimentConfig::parse(parse_toml(text));
    const auto& cov = cfg.mixture().cov_of(0);
    CHECK(cov(0, 0) == 2.0);
    CHECK(cov(0, 1) == 0.5);
    CHECK(cov(1, 0) == 0.5);
    CHECK(cov(1, 1) == 1.0);
}

TEST_CASE("verify block parses study knobs") {
    const char* text = R"(
name = "v"
[verify]
studies = ["identities", "order_euler"]
n_models = 4
dims = [2]
[verify.order]
ref_steps = 256
)";
    const auto cfg = ExperimentConfig::parse(parse_toml(text));
    CHECK(cfg.verify().studies.size() == 2u);
    CHECK(cfg.verify().n_models == 4);
    CHECK(cfg.verify().order.ref_steps == 256);
}
