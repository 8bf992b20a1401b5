#pragma once

#include <string>
#include <vector>

#include "fimlab/common.hpp"
#include "fimlab/grid_env.hpp"

namespace fimlab {

// Per-entity visitation counters over the grid; one width x height plane
// per agent and per box, row-major with y as the row index.
struct HeatmapGrid {
    int width = 0;
    int height = 0;
    std::vector<std::string> labels;
    std::vector<std::vector<std::int64_t>> counts;
    std::int64_t steps_recorded = 0;

    HeatmapGrid() = default;
    explicit HeatmapGrid(const GridConfig& cfg) : width(cfg.width), height(cfg.height) {
        for (int i = 0; i < cfg.n_agents; ++i) labels.push_back("agent" + std::to_string(i));
        for (int b = 0; b < cfg.n_boxes; ++b) labels.push_back("box" + std::to_string(b));
        counts.assign(labels.size(),
                      std::vector<std::int64_t>(static_cast<std::size_t>(width) * height, 0));
    }

    std::int64_t at(std::size_t entity, int x, int y) const {
        return counts[entity][static_cast<std::size_t>(y) * width + x];
    }
};

inline void record_visitation(HeatmapGrid& grid, const PushBoxState& state) {
    std::size_t e = 0;
    auto bump = [&](const Cell& c) {
        if (c.x < 0 || c.x >= grid.width || c.y < 0 || c.y >= grid.height)
            throw InputError("visitation outside the grid");
        grid.counts[e][static_cast<std::size_t>(c.y) * grid.width + c.x] += 1;
        ++e;
    };
    for (const Cell& c : state.agent_pos) bump(c);
    for (const Cell& c : state.box_pos) bump(c);
    ++grid.steps_recorded;
}

}  // namespace fimlab
