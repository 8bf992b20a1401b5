#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "fimlab/common.hpp"

namespace fimlab {

enum class Wall { north, south, east, west };

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

// Action indices: up, down, left, right, top-right, right-down, down-left, left-top.
inline constexpr int kNumActions = 8;
inline constexpr std::array<Cell, kNumActions> kActionDelta = {{
    {0, 1},    // up
    {0, -1},   // down
    {-1, 0},   // left
    {1, 0},    // right
    {1, 1},    // top-right
    {1, -1},   // right-down
    {-1, -1},  // down-left
    {-1, 1},   // left-top
}};

inline constexpr bool is_cardinal(int action) { return action >= 0 && action < 4; }

struct GridConfig {
    int width = 8;
    int height = 8;
    int n_agents = 2;
    int n_boxes = 2;
    int episode_limit = 60;
    Wall goal_wall = Wall::north;
    std::uint64_t seed = 0;

    void validate() const {
        if (width < 6 || height < 6) throw ConfigError("grid must be at least 6x6");
        if (n_agents < 2) throw ConfigError("need at least 2 agents");
        if (n_boxes < 1) throw ConfigError("need at least 1 box");
        if (episode_limit < 1) throw ConfigError("episode_limit must be >= 1");
    }
};

struct PushBoxState {
    std::vector<Cell> agent_pos;
    std::vector<Cell> box_pos;
    int t = 0;
};

struct StepResult {
    PushBoxState next_state;
    double reward_ext = 0.0;
    bool done = false;
    bool success = false;
};

// Deterministic two-agent box-pushing gridworld. A box is pushed one cell
// per pushing agent (at most two cells per step); reaching the goal wall
// ends the episode with +100, running out the clock gives -1.
//
// Push rule: a cardinal action pushes a box when the agent stands in the
// three-cell band directly behind the box along that axis (the cardinally
// aligned cell or either diagonal of it). Two agents in the same band
// pushing the same way move the box two cells. Diagonal actions never push.
class PushBoxEnv {
public:
    explicit PushBoxEnv(GridConfig config) : cfg_(config) { cfg_.validate(); }

    const GridConfig& config() const { return cfg_; }
    int n_agents() const { return cfg_.n_agents; }
    int n_actions() const { return kNumActions; }
    int state_dim() const { return 2 * (cfg_.n_agents + cfg_.n_boxes); }
    std::vector<int> action_space_sizes() const {
        return std::vector<int>(cfg_.n_agents, kNumActions);
    }

    // Seed-derived placement keeping the task sparse: boxes spawn on
    // interior cells in the far strip opposite the goal wall, agents spawn
    // between the boxes and the goal wall (distance two or three).
    // Reaching the wall therefore takes a long chain of deliberate
    // same-direction pushes from behind; blind walking toward the wall
    // never pushes anything.
    std::pair<PushBoxState, std::vector<StateVector>> reset(std::uint64_t seed) const {
        Rng rng(cfg_.seed, splitmix64(seed) ^ 0x9d39247e33776d41ULL);

        const bool vertical = cfg_.goal_wall == Wall::north || cfg_.goal_wall == Wall::south;
        const int box_margin = (vertical ? cfg_.height : cfg_.width) - 3;
        std::vector<Cell> box_cells;
        for (int x = 1; x < cfg_.width - 1; ++x)
            for (int y = 1; y < cfg_.height - 1; ++y)
                if (goal_wall_distance({x, y}) >= box_margin) box_cells.push_back({x, y});
        if (static_cast<int>(box_cells.size()) < cfg_.n_boxes)
            throw ConfigError("grid too small to place boxes away from the goal wall");

        PushBoxState state;
        state.t = 0;
        for (int b = 0; b < cfg_.n_boxes; ++b) {
            int k = rng.below(static_cast<int>(box_cells.size()));
            state.box_pos.push_back(box_cells[k]);
            box_cells.erase(box_cells.begin() + k);
        }

        std::vector<Cell> agent_cells;
        for (int x = 0; x < cfg_.width; ++x)
            for (int y = 0; y < cfg_.height; ++y) {
                Cell c{x, y};
                int dist = goal_wall_distance(c);
                if (dist < 2 || dist > 3) continue;
                if (std::find(state.box_pos.begin(), state.box_pos.end(), c) !=
                    state.box_pos.end())
                    continue;
                agent_cells.push_back(c);
            }
        if (static_cast<int>(agent_cells.size()) < cfg_.n_agents)
            throw ConfigError("grid too small to place agents");
        for (int i = 0; i < cfg_.n_agents; ++i) {
            int k = rng.below(static_cast<int>(agent_cells.size()));
            state.agent_pos.push_back(agent_cells[k]);
            agent_cells.erase(agent_cells.begin() + k);
        }

        std::vector<StateVector> obs(cfg_.n_agents, flatten_state(state));
        return {std::move(state), std::move(obs)};
    }

    StepResult step(const PushBoxState& state, const JointAction& joint_action) const {
        if (state.t >= cfg_.episode_limit) throw StateError("step on a terminal state");
        if (box_on_goal_wall(state)) throw StateError("step on a successful terminal state");

        StepResult res;
        res.next_state = move_entities(state, joint_action);
        res.success = box_on_goal_wall(res.next_state);
        if (res.success) {
            res.reward_ext = 100.0;
            res.done = true;
        } else if (res.next_state.t >= cfg_.episode_limit) {
            res.reward_ext = -1.0;
            res.done = true;
        }
        return res;
    }

    StateVector flatten_state(const PushBoxState& state) const {
        StateVector v;
        v.reserve(state_dim());
        for (const Cell& c : state.agent_pos) {
            v.push_back(static_cast<double>(c.x));
            v.push_back(static_cast<double>(c.y));
        }
        for (const Cell& c : state.box_pos) {
            v.push_back(static_cast<double>(c.x));
            v.push_back(static_cast<double>(c.y));
        }
        return v;
    }

    // Ground-truth transition used as a dynamics oracle; no reward or
    // termination bookkeeping.
    StateVector oracle_next(const PushBoxState& state, const JointAction& joint_action) const {
        return flatten_state(move_entities(state, joint_action));
    }

    bool box_on_goal_wall(const PushBoxState& state) const {
        for (const Cell& c : state.box_pos)
            if (goal_wall_distance(c) == 0) return true;
        return false;
    }

    int goal_wall_distance(const Cell& c) const {
        switch (cfg_.goal_wall) {
            case Wall::north: return cfg_.height - 1 - c.y;
            case Wall::south: return c.y;
            case Wall::east: return cfg_.width - 1 - c.x;
            case Wall::west: return c.x;
        }
        return 0;
    }

private:
    GridConfig cfg_;

    bool in_bounds(const Cell& c) const {
        return c.x >= 0 && c.x < cfg_.width && c.y >= 0 && c.y < cfg_.height;
    }

    // Index of the box agent `p` pushes with cardinal delta `d`, or -1.
    // Directly aligned boxes win over diagonal-band ones.
    static int pushed_box(const std::vector<Cell>& boxes, const Cell& p, const Cell& d) {
        int band_match = -1;
        for (int b = 0; b < static_cast<int>(boxes.size()); ++b) {
            int along = (boxes[b].x - p.x) * d.x + (boxes[b].y - p.y) * d.y;
            int ortho = (boxes[b].x - p.x) * d.y + (boxes[b].y - p.y) * d.x;
            if (along != 1) continue;
            if (ortho == 0) return b;
            if (std::abs(ortho) == 1 && band_match < 0) band_match = b;
        }
        return band_match;
    }

    PushBoxState move_entities(const PushBoxState& state, const JointAction& joint_action) const {
        if (static_cast<int>(joint_action.size()) != cfg_.n_agents)
            throw InputError("joint action size mismatch");
        for (int a : joint_action)
            if (a < 0 || a >= kNumActions) throw InputError("action index out of range");

        PushBoxState next = state;
        next.t = state.t + 1;

        // Pushes per box per direction; the first pushing agent's index
        // decides ordering when orthogonal single pushes combine.
        struct Push {
            std::array<int, kNumActions> count{};
            std::array<int, 4> first_agent{-1, -1, -1, -1};
        };
        std::vector<Push> pushes(cfg_.n_boxes);
        for (int i = 0; i < cfg_.n_agents; ++i) {
            int a = joint_action[i];
            if (!is_cardinal(a)) continue;
            int b = pushed_box(state.box_pos, state.agent_pos[i], kActionDelta[a]);
            if (b < 0) continue;
            pushes[b].count[a]++;
            if (pushes[b].first_agent[a] < 0) pushes[b].first_agent[a] = i;
        }

        // Boxes move before agents, in box-index order. Opposing pushes on
        // one axis cancel; same-direction pairs stack to two cells, applied
        // one cell at a time so wall clipping stops at the boundary cell.
        for (int b = 0; b < cfg_.n_boxes; ++b) {
            struct AxisMove {
                int action;
                int cells;
                int agent;
            };
            std::vector<AxisMove> moves;
            auto axis = [&](int pos_a, int neg_a) {
                int np = pushes[b].count[pos_a];
                int nn = pushes[b].count[neg_a];
                if (np > 0 && nn > 0) return;  // opposing pushes cancel
                if (np + nn == 0) return;
                int act = np > 0 ? pos_a : neg_a;
                moves.push_back({act, std::min(2, np + nn), pushes[b].first_agent[act]});
            };
            axis(0, 1);  // up/down
            axis(3, 2);  // right/left
            std::sort(moves.begin(), moves.end(),
                      [](const AxisMove& l, const AxisMove& r) { return l.agent < r.agent; });

            for (const AxisMove& m : moves) {
                for (int c = 0; c < m.cells; ++c) {
                    Cell target{next.box_pos[b].x + kActionDelta[m.action].x,
                                next.box_pos[b].y + kActionDelta[m.action].y};
                    if (!in_bounds(target)) break;
                    bool blocked = false;
                    for (int ob = 0; ob < cfg_.n_boxes && !blocked; ++ob)
                        if (ob != b && next.box_pos[ob] == target) blocked = true;
                    for (const Cell& ap : state.agent_pos)
                        if (ap == target) blocked = true;
                    if (blocked) break;
                    next.box_pos[b] = target;
                }
            }
        }

        // Agents move in index order; blocked moves are no-ops.
        for (int i = 0; i < cfg_.n_agents; ++i) {
            const Cell& d = kActionDelta[joint_action[i]];
            Cell target{next.agent_pos[i].x + d.x, next.agent_pos[i].y + d.y};
            if (!in_bounds(target)) continue;
            bool blocked = false;
            for (const Cell& bp : next.box_pos)
                if (bp == target) blocked = true;
            for (int j = 0; j < cfg_.n_agents && !blocked; ++j)
                if (j != i && next.agent_pos[j] == target) blocked = true;
            if (!blocked) next.agent_pos[i] = target;
        }

        return next;
    }
};

// Inverse of flatten_state; coordinates are exact small integers stored as
// reals, so rounding recovers them.
inline PushBoxState unflatten_state(const GridConfig& cfg, const StateVector& v, int t = 0) {
    if (static_cast<int>(v.size()) != 2 * (cfg.n_agents + cfg.n_boxes))
        throw InputError("state vector length mismatch");
    PushBoxState s;
    s.t = t;
    std::size_t k = 0;
    for (int i = 0; i < cfg.n_agents; ++i) {
        int x = static_cast<int>(std::llround(v[k++]));
        int y = static_cast<int>(std::llround(v[k++]));
        s.agent_pos.push_back({x, y});
    }
    for (int b = 0; b < cfg.n_boxes; ++b) {
        int x = static_cast<int>(std::llround(v[k++]));
        int y = static_cast<int>(std::llround(v[k++]));
        s.box_pos.push_back({x, y});
    }
    return s;
}

}  // namespace fimlab
