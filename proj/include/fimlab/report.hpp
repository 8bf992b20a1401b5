#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fimlab/entropy.hpp"
#include "fimlab/harness.hpp"
#include "fimlab/heatmap.hpp"

namespace fimlab {

// Locale-independent shortest round-trip formatting for every numeric
// value written to disk; exports must be byte-identical across re-runs.
inline std::string fmt(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string fmt(std::int64_t x) { return std::to_string(x); }
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }
inline std::string fmt(int x) { return std::to_string(x); }

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("not a number: '" + s + "'");
    return v;
}

inline std::int64_t parse_int(const std::string& s) {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("not an integer: '" + s + "'");
    return v;
}

namespace detail {

class FileWriter {
public:
    explicit FileWriter(const std::filesystem::path& path) : path_(path.string()) {
        out_.open(path, std::ios::binary);
        if (!out_) throw IoError("cannot open for writing: " + path_);
    }
    ~FileWriter() { out_.close(); }

    void line(const std::string& s) {
        out_ << s << '\n';
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace detail

inline std::vector<std::string> dimension_labels(const GridConfig& grid) {
    std::vector<std::string> labels;
    for (int i = 0; i < grid.n_agents; ++i) {
        labels.push_back("agent" + std::to_string(i) + ".x");
        labels.push_back("agent" + std::to_string(i) + ".y");
    }
    for (int b = 0; b < grid.n_boxes; ++b) {
        labels.push_back("box" + std::to_string(b) + ".x");
        labels.push_back("box" + std::to_string(b) + ".y");
    }
    return labels;
}

inline void write_profile(const DimensionProfile& profile, const GridConfig& grid,
                          const std::filesystem::path& path) {
    auto labels = dimension_labels(grid);
    detail::FileWriter out(path);
    out.line("dim\tlabel\tscale\traw_entropy\tnorm_entropy\tweight");
    for (std::size_t d = 0; d < profile.weight.size(); ++d)
        out.line(fmt(static_cast<int>(d)) + "\t" + labels.at(d) + "\t" + fmt(profile.scale[d]) +
                 "\t" + fmt(profile.raw_entropy[d]) + "\t" + fmt(profile.entropy[d]) + "\t" +
                 fmt(profile.weight[d]));
}

// Plot-ready delimited text products: visitation heatmaps, the dimension
// profile, weight/trace/success series.
inline void export_reports(const RunRecord& rec, const HeatmapGrid& grids,
                           const DimensionProfile& profile, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    for (std::size_t e = 0; e < grids.labels.size(); ++e) {
        detail::FileWriter out(fs::path(dir) / ("heatmap_" + grids.labels[e] + ".txt"));
        for (int y = 0; y < grids.height; ++y) {
            std::string row;
            for (int x = 0; x < grids.width; ++x) {
                if (x) row += '\t';
                row += fmt(grids.at(e, x, y));
            }
            out.line(row);
        }
    }

    if (!profile.weight.empty())
        write_profile(profile, rec.config.grid, fs::path(dir) / "profile.tsv");

    const int dims = 2 * (rec.config.grid.n_agents + rec.config.grid.n_boxes);
    {
        detail::FileWriter out(fs::path(dir) / "weights_series.tsv");
        std::string header = "step";
        for (int d = 0; d < dims; ++d) header += "\tw" + std::to_string(d);
        out.line(header);
        for (const auto& pt : rec.weights_series) {
            std::string row = fmt(pt.step);
            for (double w : pt.w) row += "\t" + fmt(w);
            out.line(row);
        }
    }
    {
        detail::FileWriter out(fs::path(dir) / "success_rate.tsv");
        out.line("step\tsuccess_rate");
        for (const auto& pt : rec.success) out.line(fmt(pt.step) + "\t" + fmt(pt.success_rate));
    }
    {
        detail::FileWriter out(fs::path(dir) / "traces.tsv");
        std::string header = "step";
        for (int d = 0; d < dims; ++d) header += "\te" + std::to_string(d);
        out.line(header);
        for (const auto& pt : rec.trace_series) {
            std::string row = fmt(pt.step);
            for (double e : pt.trace) row += "\t" + fmt(e);
            out.line(row);
        }
    }
}

inline std::string wall_name(Wall w) {
    switch (w) {
        case Wall::north: return "north";
        case Wall::south: return "south";
        case Wall::east: return "east";
        case Wall::west: return "west";
    }
    return "north";
}

inline Wall wall_from_string(const std::string& s) {
    for (Wall w : {Wall::north, Wall::south, Wall::east, Wall::west})
        if (wall_name(w) == s) return w;
    throw ConfigError("unknown wall: " + s);
}

// Full record on disk: the report files plus a manifest with the resolved
// configuration and the remaining data tables.
inline void save_run_record(const RunRecord& rec, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    export_reports(rec, rec.visits, rec.profile, dir);

    const RunConfig& c = rec.config;
    {
        detail::FileWriter out(fs::path(dir) / "manifest.txt");
        out.line("mode=" + to_string(c.mode));
        out.line("seed=" + fmt(c.seed));
        out.line("grid=" + fmt(c.grid.width) + "x" + fmt(c.grid.height));
        out.line("n_agents=" + fmt(c.grid.n_agents));
        out.line("n_boxes=" + fmt(c.grid.n_boxes));
        out.line("episode_limit=" + fmt(c.grid.episode_limit));
        out.line("goal_wall=" + wall_name(c.grid.goal_wall));
        out.line("grid_seed=" + fmt(c.grid.seed));
        out.line("alpha=" + fmt(c.alpha));
        out.line("phi=" + fmt(c.phi));
        out.line("tau=" + fmt(c.tau));
        out.line("gamma_trace=" + fmt(c.gamma_trace));
        out.line("steps=" + fmt(c.total_steps));
        out.line("reestimate_interval=" + fmt(c.reestimate_interval));
        out.line("estimation_samples=" + fmt(c.estimation_samples));
        out.line("eval_interval=" + fmt(c.eval_interval));
        out.line("eval_episodes=" + fmt(c.eval_episodes));
        std::string mask;
        for (std::size_t i = 0; i < c.efi_mask.size(); ++i)
            mask += (i ? "," : "") + fmt(c.efi_mask[i]);
        out.line("efi_mask=" + mask);
        out.line("gamma=" + fmt(c.gamma));
        out.line("learning_rate=" + fmt(c.learning_rate));
        out.line("target_interval=" + fmt(c.target_interval));
        out.line("batch_size=" + fmt(c.batch_size));
        out.line("buffer_capacity=" + fmt(static_cast<std::int64_t>(c.buffer_capacity)));
        out.line("agent_hidden=" + fmt(c.agent_hidden));
        out.line("mixing_dim=" + fmt(c.mixing_dim));
        out.line("vdn=" + std::string(c.vdn ? "true" : "false"));
        out.line("updates_per_episode=" + fmt(c.updates_per_episode));
        out.line("dynamics_batch=" + fmt(c.dynamics_batch));
        out.line("dynamics_warmup_steps=" + fmt(c.dynamics_warmup_steps));
        out.line("eps_start=" + fmt(c.eps_start));
        out.line("eps_end=" + fmt(c.eps_end));
        out.line("eps_decay_fraction=" + fmt(c.eps_decay_fraction));
        out.line("trace_snapshot_interval=" + fmt(c.trace_snapshot_interval));
        out.line("train_steps=" + fmt(rec.train_steps));
        out.line("estimation_steps=" + fmt(rec.estimation_steps));
        out.line("episodes=" + fmt(rec.episodes));
    }
    {
        detail::FileWriter out(fs::path(dir) / "rewards.tsv");
        out.line("step\treward");
        for (std::size_t i = 0; i < rec.step_rewards.size(); ++i)
            out.line(fmt(static_cast<std::int64_t>(i + 1)) + "\t" +
                     fmt(static_cast<double>(rec.step_rewards[i])));
    }
    {
        detail::FileWriter out(fs::path(dir) / "dynamics_loss.tsv");
        out.line("step\tloss\tepsilon");
        for (const auto& pt : rec.dynamics_losses)
            out.line(fmt(pt.step) + "\t" + fmt(pt.loss) + "\t" + fmt(pt.epsilon));
    }
    {
        detail::FileWriter out(fs::path(dir) / "metrics.tsv");
        out.line("step\ttd_loss\tepsilon\tsuccess_rate");
        std::size_t eval_idx = 0;
        double latest = 0.0;
        for (const auto& pt : rec.td_losses) {
            while (eval_idx < rec.success.size() && rec.success[eval_idx].step <= pt.step)
                latest = rec.success[eval_idx++].success_rate;
            out.line(fmt(pt.step) + "\t" + fmt(pt.loss) + "\t" + fmt(pt.epsilon) + "\t" +
                     fmt(latest));
        }
    }
}

inline RunRecord load_run_record(const std::string& dir) {
    namespace fs = std::filesystem;
    RunRecord rec;

    auto manifest = detail::read_lines(fs::path(dir) / "manifest.txt");
    std::map<std::string, std::string> kv;
    for (const auto& line : manifest) {
        auto pos = line.find('=');
        if (pos == std::string::npos) throw IoError("bad manifest line: " + line);
        kv[line.substr(0, pos)] = line.substr(pos + 1);
    }
    RunConfig& c = rec.config;
    c.mode = mode_from_string(kv.at("mode"));
    c.seed = static_cast<std::uint64_t>(parse_int(kv.at("seed")));
    auto wh = detail::split(kv.at("grid"), 'x');
    c.grid.width = static_cast<int>(parse_int(wh.at(0)));
    c.grid.height = static_cast<int>(parse_int(wh.at(1)));
    c.grid.n_agents = static_cast<int>(parse_int(kv.at("n_agents")));
    c.grid.n_boxes = static_cast<int>(parse_int(kv.at("n_boxes")));
    c.grid.episode_limit = static_cast<int>(parse_int(kv.at("episode_limit")));
    c.grid.goal_wall = wall_from_string(kv.at("goal_wall"));
    c.grid.seed = static_cast<std::uint64_t>(parse_int(kv.at("grid_seed")));
    c.alpha = parse_double(kv.at("alpha"));
    c.phi = parse_double(kv.at("phi"));
    c.tau = parse_double(kv.at("tau"));
    c.gamma_trace = parse_double(kv.at("gamma_trace"));
    c.total_steps = parse_int(kv.at("steps"));
    c.reestimate_interval = parse_int(kv.at("reestimate_interval"));
    c.estimation_samples = parse_int(kv.at("estimation_samples"));
    c.eval_interval = parse_int(kv.at("eval_interval"));
    c.eval_episodes = static_cast<int>(parse_int(kv.at("eval_episodes")));
    if (!kv.at("efi_mask").empty())
        for (const auto& part : detail::split(kv.at("efi_mask"), ','))
            c.efi_mask.push_back(static_cast<int>(parse_int(part)));
    c.gamma = parse_double(kv.at("gamma"));
    c.learning_rate = parse_double(kv.at("learning_rate"));
    c.target_interval = static_cast<int>(parse_int(kv.at("target_interval")));
    c.batch_size = static_cast<int>(parse_int(kv.at("batch_size")));
    c.buffer_capacity = static_cast<std::size_t>(parse_int(kv.at("buffer_capacity")));
    c.agent_hidden = static_cast<int>(parse_int(kv.at("agent_hidden")));
    c.mixing_dim = static_cast<int>(parse_int(kv.at("mixing_dim")));
    c.vdn = kv.at("vdn") == "true";
    c.updates_per_episode = static_cast<int>(parse_int(kv.at("updates_per_episode")));
    c.dynamics_batch = static_cast<int>(parse_int(kv.at("dynamics_batch")));
    c.dynamics_warmup_steps = static_cast<int>(parse_int(kv.at("dynamics_warmup_steps")));
    c.eps_start = parse_double(kv.at("eps_start"));
    c.eps_end = parse_double(kv.at("eps_end"));
    c.eps_decay_fraction = parse_double(kv.at("eps_decay_fraction"));
    c.trace_snapshot_interval = parse_int(kv.at("trace_snapshot_interval"));
    rec.train_steps = parse_int(kv.at("train_steps"));
    rec.estimation_steps = parse_int(kv.at("estimation_steps"));
    rec.episodes = parse_int(kv.at("episodes"));

    rec.visits = HeatmapGrid(c.grid);
    rec.visits.steps_recorded = rec.train_steps;
    for (std::size_t e = 0; e < rec.visits.labels.size(); ++e) {
        auto rows = detail::read_lines(fs::path(dir) /
                                       ("heatmap_" + rec.visits.labels[e] + ".txt"));
        if (static_cast<int>(rows.size()) != c.grid.height)
            throw IoError("heatmap row count mismatch");
        for (int y = 0; y < c.grid.height; ++y) {
            auto cells = detail::split(rows[y], '\t');
            if (static_cast<int>(cells.size()) != c.grid.width)
                throw IoError("heatmap column count mismatch");
            for (int x = 0; x < c.grid.width; ++x)
                rec.visits.counts[e][static_cast<std::size_t>(y) * c.grid.width + x] =
                    parse_int(cells[x]);
        }
    }

    auto prof = fs::path(dir) / "profile.tsv";
    if (fs::exists(prof)) {
        auto rows = detail::read_lines(prof);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            auto cols = detail::split(rows[i], '\t');
            rec.profile.scale.push_back(parse_double(cols.at(2)));
            rec.profile.raw_entropy.push_back(parse_double(cols.at(3)));
            rec.profile.entropy.push_back(parse_double(cols.at(4)));
            rec.profile.weight.push_back(parse_double(cols.at(5)));
        }
    }

    for (auto& line : detail::read_lines(fs::path(dir) / "weights_series.tsv")) {
        if (line.rfind("step", 0) == 0) continue;
        auto cols = detail::split(line, '\t');
        WeightsPoint pt;
        pt.step = parse_int(cols.at(0));
        for (std::size_t i = 1; i < cols.size(); ++i) pt.w.push_back(parse_double(cols[i]));
        rec.weights_series.push_back(std::move(pt));
    }
    for (auto& line : detail::read_lines(fs::path(dir) / "success_rate.tsv")) {
        if (line.rfind("step", 0) == 0) continue;
        auto cols = detail::split(line, '\t');
        rec.success.push_back({parse_int(cols.at(0)), parse_double(cols.at(1))});
    }
    for (auto& line : detail::read_lines(fs::path(dir) / "traces.tsv")) {
        if (line.rfind("step", 0) == 0) continue;
        auto cols = detail::split(line, '\t');
        TracePoint pt;
        pt.step = parse_int(cols.at(0));
        for (std::size_t i = 1; i < cols.size(); ++i) pt.trace.push_back(parse_double(cols[i]));
        rec.trace_series.push_back(std::move(pt));
    }
    for (auto& line : detail::read_lines(fs::path(dir) / "rewards.tsv")) {
        if (line.rfind("step", 0) == 0) continue;
        auto cols = detail::split(line, '\t');
        rec.step_rewards.push_back(static_cast<float>(parse_double(cols.at(1))));
    }
    for (auto& line : detail::read_lines(fs::path(dir) / "dynamics_loss.tsv")) {
        if (line.rfind("step", 0) == 0) continue;
        auto cols = detail::split(line, '\t');
        rec.dynamics_losses.push_back(
            {parse_int(cols.at(0)), parse_double(cols.at(1)), parse_double(cols.at(2))});
    }
    for (auto& line : detail::read_lines(fs::path(dir) / "metrics.tsv")) {
        if (line.rfind("step", 0) == 0) continue;
        auto cols = detail::split(line, '\t');
        rec.td_losses.push_back(
            {parse_int(cols.at(0)), parse_double(cols.at(1)), parse_double(cols.at(2))});
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Configuration files: flat key=value lines with optional [section] headers
// and '#' comments. Unknown keys are rejected by name. Precedence is
// defaults, then file, then flag overrides.

struct ExperimentSpec {
    RunConfig base;
    std::vector<Mode> modes;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "runs";

    std::vector<std::pair<Mode, std::uint64_t>> runs() const {
        std::vector<std::pair<Mode, std::uint64_t>> out;
        for (Mode m : modes)
            for (std::uint64_t s : seeds) out.push_back({m, s});
        return out;
    }
};

namespace detail {

inline void apply_key(ExperimentSpec& spec, const std::string& key, const std::string& value,
                      const std::string& where) {
    RunConfig& c = spec.base;
    try {
        if (key == "mode") {
            c.mode = mode_from_string(value);
            spec.modes = {c.mode};
        } else if (key == "modes") {
            spec.modes.clear();
            for (const auto& part : split(value, ',')) spec.modes.push_back(mode_from_string(part));
        } else if (key == "seed") {
            c.seed = static_cast<std::uint64_t>(parse_int(value));
            spec.seeds = {c.seed};
        } else if (key == "seeds") {
            spec.seeds.clear();
            for (const auto& part : split(value, ','))
                spec.seeds.push_back(static_cast<std::uint64_t>(parse_int(part)));
        } else if (key == "alpha") {
            c.alpha = parse_double(value);
        } else if (key == "phi") {
            c.phi = parse_double(value);
        } else if (key == "tau") {
            c.tau = parse_double(value);
        } else if (key == "gamma_trace") {
            c.gamma_trace = parse_double(value);
        } else if (key == "steps") {
            c.total_steps = parse_int(value);
        } else if (key == "reestimate_interval") {
            c.reestimate_interval = parse_int(value);
        } else if (key == "estimation_samples") {
            c.estimation_samples = parse_int(value);
        } else if (key == "eval_interval") {
            c.eval_interval = parse_int(value);
        } else if (key == "eval_episodes") {
            c.eval_episodes = static_cast<int>(parse_int(value));
        } else if (key == "efi_mask") {
            c.efi_mask.clear();
            for (const auto& part : split(value, ','))
                c.efi_mask.push_back(static_cast<int>(parse_int(part)));
        } else if (key == "gamma") {
            c.gamma = parse_double(value);
        } else if (key == "learning_rate") {
            c.learning_rate = parse_double(value);
        } else if (key == "target_interval") {
            c.target_interval = static_cast<int>(parse_int(value));
        } else if (key == "batch_size") {
            c.batch_size = static_cast<int>(parse_int(value));
        } else if (key == "buffer_capacity") {
            c.buffer_capacity = static_cast<std::size_t>(parse_int(value));
        } else if (key == "agent_hidden") {
            c.agent_hidden = static_cast<int>(parse_int(value));
        } else if (key == "mixing_dim") {
            c.mixing_dim = static_cast<int>(parse_int(value));
        } else if (key == "vdn") {
            if (value != "true" && value != "false" && value != "0" && value != "1")
                throw ConfigError("vdn expects true/false");
            c.vdn = (value == "true" || value == "1");
        } else if (key == "updates_per_episode") {
            c.updates_per_episode = static_cast<int>(parse_int(value));
        } else if (key == "dynamics_batch") {
            c.dynamics_batch = static_cast<int>(parse_int(value));
        } else if (key == "dynamics_warmup_steps") {
            c.dynamics_warmup_steps = static_cast<int>(parse_int(value));
        } else if (key == "eps_start") {
            c.eps_start = parse_double(value);
        } else if (key == "eps_end") {
            c.eps_end = parse_double(value);
        } else if (key == "eps_decay_fraction") {
            c.eps_decay_fraction = parse_double(value);
        } else if (key == "trace_snapshot_interval") {
            c.trace_snapshot_interval = parse_int(value);
        } else if (key == "grid") {
            auto wh = split(value, 'x');
            if (wh.size() != 2) throw ConfigError("grid expects WxH");
            c.grid.width = static_cast<int>(parse_int(wh[0]));
            c.grid.height = static_cast<int>(parse_int(wh[1]));
        } else if (key == "episode_limit") {
            c.grid.episode_limit = static_cast<int>(parse_int(value));
        } else if (key == "n_agents") {
            c.grid.n_agents = static_cast<int>(parse_int(value));
        } else if (key == "n_boxes") {
            c.grid.n_boxes = static_cast<int>(parse_int(value));
        } else if (key == "goal_wall") {
            c.grid.goal_wall = wall_from_string(value);
        } else if (key == "grid_seed") {
            c.grid.seed = static_cast<std::uint64_t>(parse_int(value));
        } else if (key == "out") {
            spec.out_dir = value;
        } else {
            throw ConfigError("unknown key '" + key + "' " + where);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("bad value for '" + key + "' " + where + ": " + e.what());
    }
}

}  // namespace detail

// defaults <- file <- flag overrides, in increasing precedence.
inline ExperimentSpec load_config(const std::string& path,
                                  const std::vector<std::pair<std::string, std::string>>& flags) {
    ExperimentSpec spec;
    if (const char* env_out = std::getenv("FIMLAB_OUT")) spec.out_dir = env_out;
    spec.modes = {spec.base.mode};
    spec.seeds = {spec.base.seed};

    if (!path.empty()) {
        if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
        auto lines = detail::read_lines(path);
        for (std::size_t n = 0; n < lines.size(); ++n) {
            std::string line = lines[n];
            if (auto pos = line.find('#'); pos != std::string::npos) line = line.substr(0, pos);
            auto strip = [](std::string s) {
                auto b = s.find_first_not_of(" \t\r");
                auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            line = strip(line);
            if (line.empty()) continue;
            if (line.front() == '[' && line.back() == ']') continue;  // section header
            auto pos = line.find('=');
            std::string where = "at " + path + ":" + std::to_string(n + 1);
            if (pos == std::string::npos)
                throw ConfigError("expected key=value " + where + ": '" + line + "'");
            detail::apply_key(spec, strip(line.substr(0, pos)), strip(line.substr(pos + 1)),
                              where);
        }
    }
    for (const auto& [key, value] : flags) detail::apply_key(spec, key, value, "(flag)");
    if (spec.modes.empty() || spec.seeds.empty())
        throw ConfigError("need at least one mode and one seed");
    return spec;
}

}  // namespace fimlab
