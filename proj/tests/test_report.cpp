#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fimlab/report.hpp"

using namespace fimlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunRecord tiny_run(Mode mode, std::uint64_t seed) {
    RunConfig rc;
    rc.mode = mode;
    rc.seed = seed;
    rc.total_steps = 800;
    rc.estimation_samples = 300;
    rc.reestimate_interval = 400;
    rc.eval_interval = 400;
    rc.eval_episodes = 4;
    return run_training(rc);
}

}  // namespace

TEST_CASE("numeric formatting round-trips exactly") {
    for (double v : {0.1, 1.0 / 3.0, -2.75e-9, 123456.789, 0.0, 1e300}) {
        CHECK(parse_double(fmt(v)) == v);
    }
    CHECK(fmt(std::int64_t{42}) == "42");
    CHECK_THROWS_AS(parse_double("12,5"), ConfigError);
}

TEST_CASE("empty config with no flags gives the documented defaults") {
    auto spec = load_config("", {});
    CHECK(spec.base.mode == Mode::fim);
    CHECK(spec.base.alpha == 5.0);
    CHECK(spec.base.phi == 0.05);
    CHECK(spec.base.tau == 0.1);
    CHECK(spec.base.gamma == 0.99);
    CHECK(spec.base.learning_rate == 5e-4);
    CHECK(spec.base.target_interval == 200);
    CHECK(spec.base.batch_size == 32);
    CHECK(spec.base.buffer_capacity == 5000);
    CHECK(spec.base.grid.width == 8);
    CHECK(spec.base.grid.height == 8);
    CHECK(spec.base.grid.episode_limit == 60);
    CHECK(spec.modes == std::vector<Mode>{Mode::fim});
    CHECK(spec.seeds == std::vector<std::uint64_t>{0});
}

TEST_CASE("flags override file values which override defaults") {
    TempDir tmp("fimlab_cfg_test");
    auto cfg = tmp.path / "run.cfg";
    {
        std::ofstream out(cfg);
        out << "# comment\n";
        out << "[run]\n";
        out << "alpha = 2.5\n";
        out << "mode = sfi_only\n";
        out << "grid = 10x6\n";
    }
    auto spec = load_config(cfg.string(), {{"alpha", "7.5"}, {"seed", "3"}});
    CHECK(spec.base.alpha == 7.5);
    CHECK(spec.base.mode == Mode::sfi_only);
    CHECK(spec.base.grid.width == 10);
    CHECK(spec.base.grid.height == 6);
    CHECK(spec.seeds == std::vector<std::uint64_t>{3});
}

TEST_CASE("unknown keys are rejected by name") {
    TempDir tmp("fimlab_cfg_unknown");
    auto cfg = tmp.path / "run.cfg";
    {
        std::ofstream out(cfg);
        out << "alpa = 5\n";
    }
    try {
        load_config(cfg.string(), {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("alpa") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config("no_such_file.cfg", {}), ConfigError);
    CHECK_THROWS_AS(load_config("", {{"tau", "abc"}}), ConfigError);
}

TEST_CASE("sweep lists expand to the mode-seed cross product") {
    auto spec = load_config("", {{"modes", "fim,baseline"}, {"seeds", "1,2,3"}});
    auto runs = spec.runs();
    REQUIRE(runs.size() == 6);
    CHECK(runs[0] == std::pair{Mode::fim, std::uint64_t{1}});
    CHECK(runs[5] == std::pair{Mode::baseline, std::uint64_t{3}});
}

TEST_CASE("visitation counters track entities exactly") {
    GridConfig grid;
    HeatmapGrid hm(grid);
    PushBoxState s;
    s.agent_pos = {{1, 2}, {3, 4}};
    s.box_pos = {{5, 6}, {0, 0}};

    record_visitation(hm, s);
    CHECK(hm.steps_recorded == 1);
    CHECK(hm.at(0, 1, 2) == 1);
    CHECK(hm.at(1, 3, 4) == 1);
    CHECK(hm.at(2, 5, 6) == 1);
    CHECK(hm.at(3, 0, 0) == 1);

    const int n = 25;
    for (int i = 1; i < n; ++i) record_visitation(hm, s);
    for (const auto& plane : hm.counts) {
        std::int64_t total = 0;
        for (auto c : plane) total += c;
        CHECK(total == n);
    }
    CHECK(hm.at(0, 1, 2) == n);  // parked entity accumulates in one cell
}

TEST_CASE("exports are shape-consistent and re-readable") {
    auto rec = tiny_run(Mode::fim, 5);
    TempDir tmp("fimlab_export_test");
    export_reports(rec, rec.visits, rec.profile, tmp.path.string());

    for (const auto& label : rec.visits.labels) {
        auto lines = detail::read_lines(tmp.path / ("heatmap_" + label + ".txt"));
        CHECK(static_cast<int>(lines.size()) == rec.config.grid.height);
        CHECK(static_cast<int>(detail::split(lines[0], '\t').size()) == rec.config.grid.width);
    }

    auto success = detail::read_lines(tmp.path / "success_rate.tsv");
    CHECK(success.size() == rec.success.size() + 1);  // header + one row per eval point

    auto weights = detail::read_lines(tmp.path / "weights_series.tsv");
    REQUIRE(weights.size() == rec.weights_series.size() + 1);
    for (std::size_t i = 1; i < weights.size(); ++i) {
        auto cols = detail::split(weights[i], '\t');
        double sum = 0.0;
        for (std::size_t k = 1; k < cols.size(); ++k) sum += parse_double(cols[k]);
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }

    auto profile = detail::read_lines(tmp.path / "profile.tsv");
    REQUIRE(profile.size() == 9);  // header + 8 dimensions
    CHECK(detail::split(profile[0], '\t') ==
          std::vector<std::string>{"dim", "label", "scale", "raw_entropy", "norm_entropy",
                                   "weight"});
    CHECK(detail::split(profile[5], '\t')[1] == "box0.x");
}

TEST_CASE("save, load and re-export are byte-identical") {
    auto rec = tiny_run(Mode::fim, 9);
    TempDir a("fimlab_record_a"), b("fimlab_record_b");
    save_run_record(rec, a.path.string());

    auto loaded = load_run_record(a.path.string());
    CHECK(loaded.train_steps == rec.train_steps);
    CHECK(loaded.config.mode == rec.config.mode);
    CHECK(loaded.config.alpha == rec.config.alpha);
    CHECK(loaded.success.size() == rec.success.size());
    CHECK(loaded.visits.counts == rec.visits.counts);
    CHECK(loaded.profile.weight == rec.profile.weight);

    save_run_record(loaded, b.path.string());
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.path)) {
        auto name = entry.path().filename();
        INFO("file " << name);
        CHECK(slurp(entry.path()) == slurp(b.path / name));
        ++files;
    }
    CHECK(files >= 12);
}

TEST_CASE("re-export of the same record is deterministic") {
    auto rec = tiny_run(Mode::uniform, 2);
    TempDir a("fimlab_redo_a"), b("fimlab_redo_b");
    export_reports(rec, rec.visits, rec.profile, a.path.string());
    export_reports(rec, rec.visits, rec.profile, b.path.string());
    for (const auto& entry : fs::directory_iterator(a.path))
        CHECK(slurp(entry.path()) == slurp(b.path / entry.path().filename()));
}
