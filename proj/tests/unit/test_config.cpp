#include <doctest.h>

#include "tapnet/config.hpp"
#include "tapnet/errors.hpp"

using namespace tapnet;

TEST_CASE("config parsing with sections and comments") {
    const std::string text = R"(# experiment
[train]
episodes = 100   # inline comment
way = 7

[data]
dataset = synthetic
)";
    const ConfigMap map = ConfigMap::parse_text(text);
    CHECK(map.get_size("train.episodes", 0) == 100);
    CHECK(map.get_size("train.way", 0) == 7);
    CHECK(map.get_string("data.dataset", "") == "synthetic");
    CHECK(map.get_size("train.missing", 55) == 55);
}

TEST_CASE("config parse errors") {
    CHECK_THROWS_AS(ConfigMap::parse_text("episodes = 5\n"), ConfigError); // no section
    CHECK_THROWS_AS(ConfigMap::parse_text("[train\nepisodes = 5\n"), ConfigError);
    CHECK_THROWS_AS(ConfigMap::parse_text("[train]\nnot a pair\n"), ConfigError);
    CHECK_THROWS_AS(ConfigMap::parse_file("/definitely/not/here.cfg"), ConfigError);
}

TEST_CASE("unknown keys are listed") {
    ConfigMap map = ConfigMap::parse_text("[train]\nepisodes = 5\nbogus = 1\n[zap]\nx = 2\n");
    try {
        map.require_known(ExperimentConfig::known_keys());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("train.bogus") != std::string::npos);
        CHECK(what.find("zap.x") != std::string::npos);
        CHECK(what.find("train.episodes") == std::string::npos);
    }
}

TEST_CASE("override precedence: defaults < file < command line") {
    ConfigMap base; // empty: pure defaults
    ConfigMap file = ConfigMap::parse_text("[train]\nepisodes = 500\nway = 6\n");
    base.merge_from(file);
    base.set("train.episodes", "750"); // flag wins

    const ExperimentConfig cfg = ExperimentConfig::from_map(base);
    CHECK(cfg.train.n_episodes == 750);
    CHECK(cfg.train.n_way_train == 6);
    CHECK(cfg.train.n_shot == 1); // untouched default

    // the echo reflects the effective values
    const std::string echo = cfg.to_map().echo();
    CHECK(echo.find("episodes = 750") != std::string::npos);
    CHECK(echo.find("way = 6") != std::string::npos);
}

TEST_CASE("echo parses back to the same map") {
    ExperimentConfig cfg;
    cfg.train.n_episodes = 123;
    cfg.train.proj_dim = 9;
    cfg.eval.seed = 42;
    const ConfigMap map = cfg.to_map();
    const ConfigMap reparsed = ConfigMap::parse_text(map.echo());
    CHECK(reparsed.values() == map.values());

    const ExperimentConfig back = ExperimentConfig::from_map(reparsed);
    CHECK(back.train.n_episodes == 123);
    REQUIRE(back.train.proj_dim.has_value());
    CHECK(*back.train.proj_dim == 9);
    CHECK(back.eval.seed == 42);
}

TEST_CASE("typed getters validate") {
    ConfigMap map = ConfigMap::parse_text("[train]\nepisodes = abc\nlr_factor = fast\n"
                                          "proj_dim = zero\n[data]\naugment_rotations = maybe\n");
    CHECK_THROWS_AS(map.get_size("train.episodes", 0), ConfigError);
    CHECK_THROWS_AS(map.get_double("train.lr_factor", 0.5), ConfigError);
    CHECK_THROWS_AS(map.get_proj_dim("train.proj_dim"), ConfigError);
    CHECK_THROWS_AS(map.get_bool("data.augment_rotations", false), ConfigError);

    ConfigMap ok = ConfigMap::parse_text("[train]\nproj_dim = full\n");
    CHECK(ok.get_proj_dim("train.proj_dim") == std::nullopt);
    ConfigMap ok2 = ConfigMap::parse_text("[train]\nproj_dim = 32\n");
    CHECK(ok2.get_proj_dim("train.proj_dim") == std::size_t{32});
}

TEST_CASE("experiment config validation") {
    ConfigMap bad_arch = ConfigMap::parse_text("[model]\narch = resnet\n");
    CHECK_THROWS_AS(ExperimentConfig::from_map(bad_arch), ConfigError);
    ConfigMap bad_dist = ConfigMap::parse_text("[train]\ndistance = cosine\n");
    CHECK_THROWS_AS(ExperimentConfig::from_map(bad_dist), ConfigError);
    ConfigMap bad_policy = ConfigMap::parse_text("[train]\ngrad_through_projection = sometimes\n");
    CHECK_THROWS_AS(ExperimentConfig::from_map(bad_policy), ConfigError);

    ConfigMap euclid = ConfigMap::parse_text("[train]\ndistance = euclidean\n");
    CHECK(ExperimentConfig::from_map(euclid).train.distance == DistanceKind::Euclidean);
}

TEST_CASE("metrics and report formatting") {
    std::vector<MetricsRecord> records(2);
    records[0].episode = 0;
    records[0].loss = 1.5;
    records[0].lr = 1e-3;
    records[0].min_ref_distance = 0.25;
    records[1].episode = 1;
    records[1].loss = 1.25;
    records[1].lr = 1e-3;
    records[1].min_ref_distance = 0.5;
    records[1].val_accuracy = 0.75;

    const std::string text = format_metrics(records);
    CHECK(text.find("episode=0 loss=1.5 lr=0.001 min_ref_distance=0.25\n") != std::string::npos);
    CHECK(text.find("episode=1") != std::string::npos);
    CHECK(text.find("val_accuracy=0.75") != std::string::npos);

    EvalReport report;
    report.n_episodes = 2;
    report.mean_accuracy = 0.9;
    report.ci95_halfwidth = 0.05;
    report.per_episode = {1.0, 0.8};
    report.config.n_way = 5;
    report.config.n_shot = 1;
    report.config.n_query = 15;
    const std::string rep = format_eval_report(report);
    CHECK(rep.find("record=summary mean_accuracy=0.9") != std::string::npos);
    CHECK(rep.find("proj_dim=full") != std::string::npos);
    CHECK(rep.find("record=episode index=1 accuracy=0.8") != std::string::npos);

    std::vector<SweepEntry> entries(2);
    entries[0].proj_dim_label = "4";
    entries[0].report = report;
    entries[1].proj_dim_label = "64";
    entries[1].error = "projection dimension too large";
    const std::string sweep = format_sweep_report(entries);
    CHECK(sweep.find("record=sweep proj_dim=4 mean_accuracy=0.9") != std::string::npos);
    CHECK(sweep.find("record=sweep proj_dim=64 error=\"projection dimension too large\"") !=
          std::string::npos);
}

TEST_CASE("load_dataset dispatches and validates") {
    ExperimentConfig cfg;
    cfg.dataset = "synthetic";
    cfg.synthetic.n_classes_pool = 8;
    cfg.synthetic.input_dim = 4;
    cfg.synthetic.samples_per_class = 5;
    cfg.splits = {4, 2, 2};
    const DatasetBundle bundle = load_dataset(cfg);
    CHECK(bundle.train.class_count() == 4);
    CHECK(bundle.test.class_count() == 2);

    cfg.dataset = "csv:/tmp/whatever";
    CHECK_THROWS_AS(load_dataset(cfg), ConfigError);
    cfg.dataset = "image-folder:/no/such/dir";
    CHECK_THROWS_AS(load_dataset(cfg), DataError);
}
