#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fimlab/influence.hpp"

using namespace fimlab;

namespace {

// Model whose prediction ignores the joint action entirely.
class ConstantModel : public TransitionModel {
public:
    ConstantModel(StateVector value, std::vector<int> sizes)
        : value_(std::move(value)), sizes_(std::move(sizes)) {}
    int state_dim() const override { return static_cast<int>(value_.size()); }
    const std::vector<int>& action_space_sizes() const override { return sizes_; }
    StateVector predict(const StateVector&, const JointAction&) override { return value_; }

private:
    StateVector value_;
    std::vector<int> sizes_;
};

class NanModel : public TransitionModel {
public:
    explicit NanModel(std::vector<int> sizes) : sizes_(std::move(sizes)) {}
    int state_dim() const override { return 2; }
    const std::vector<int>& action_space_sizes() const override { return sizes_; }
    StateVector predict(const StateVector&, const JointAction&) override {
        return {std::numeric_limits<double>::quiet_NaN(), 0.0};
    }

private:
    std::vector<int> sizes_;
};

// Independent oracle: the formula written as a naive triple loop over
// agents, actions and dimensions, with no caching or reuse.
InfluenceVector brute_force_influence(TransitionModel& model, const StateVector& s,
                                      const JointAction& a) {
    const auto& sizes = model.action_space_sizes();
    InfluenceVector inf(s.size(), 0.0);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        for (std::size_t d = 0; d < s.size(); ++d) {
            double actual = std::fabs(model.predict(s, a)[d] - s[d]);
            double cf_sum = 0.0;
            for (int alt = 0; alt < sizes[i]; ++alt) {
                JointAction cf = a;
                cf[i] = alt;
                cf_sum += std::fabs(model.predict(s, cf)[d] - s[d]);
            }
            inf[d] += actual - cf_sum / static_cast<double>(sizes[i]);
        }
    }
    return inf;
}

}  // namespace

TEST_CASE("action-independent model has exactly zero influence") {
    ConstantModel model({5.0, -3.0, 0.5}, {8, 8});
    StateVector s{1.0, 2.0, 3.0};
    auto inf = counterfactual_influence(model, s, {2, 5});
    CHECK(inf == InfluenceVector{0.0, 0.0, 0.0});
}

TEST_CASE("singleton action set yields zero influence") {
    ConstantModel model({5.0, -3.0}, {1});
    auto inf = counterfactual_influence(model, {0.0, 0.0}, {0});
    CHECK(inf == InfluenceVector{0.0, 0.0});
}

TEST_CASE("non-finite prediction is surfaced") {
    NanModel model({8, 8});
    CHECK_THROWS_AS(counterfactual_influence(model, {0.0, 0.0}, {0, 0}), ComputeError);
}

TEST_CASE("joint double push scores 1.75 on the pushed box dimension") {
    PushBoxEnv env{GridConfig{}};
    auto oracle = make_oracle_model(env);

    // Goal wall north: agent 0 directly behind the box, agent 1 in the
    // diagonal band, both pushing up; box0 displaces two cells. For each
    // agent exactly one of its eight actions keeps the double push; the
    // other seven leave the partner's single push.
    PushBoxState s;
    s.agent_pos = {{4, 3}, {3, 3}};
    s.box_pos = {{4, 4}, {6, 1}};
    auto sv = env.flatten_state(s);
    JointAction a{0, 0};

    auto next = oracle.predict(sv, a);
    REQUIRE(next[5] - sv[5] == 2.0);  // box0.y displaced two cells

    auto inf = counterfactual_influence(oracle, sv, a);
    CHECK(inf[5] == 1.75);  // per agent: 2 - (1*2 + 7*1)/8 = 7/8
}

TEST_CASE("influence matches the brute-force oracle bitwise on random cases") {
    PushBoxEnv env{GridConfig{}};
    auto oracle = make_oracle_model(env);
    Rng rng(42);
    for (int it = 0; it < 100; ++it) {
        auto [s, obs] = env.reset(static_cast<std::uint64_t>(it));
        JointAction a{rng.below(8), rng.below(8)};
        auto sv = env.flatten_state(s);
        auto fast = counterfactual_influence(oracle, sv, a);
        auto slow = brute_force_influence(oracle, sv, a);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t d = 0; d < fast.size(); ++d) REQUIRE(fast[d] == slow[d]);
    }
}

TEST_CASE("learned and oracle models flow through the same influence path") {
    PushBoxEnv env{GridConfig{}};
    auto oracle = make_oracle_model(env);
    Rng rng(5);
    auto learned = LearnedDynamicsModel::for_grid(env.config(), rng);

    auto [s, obs] = env.reset(11);
    auto sv = env.flatten_state(s);
    // Same entry point, same brute-force agreement, regardless of backend.
    for (TransitionModel* m : {static_cast<TransitionModel*>(&oracle),
                               static_cast<TransitionModel*>(&learned)}) {
        auto fast = counterfactual_influence(*m, sv, {3, 1});
        auto slow = brute_force_influence(*m, sv, {3, 1});
        for (std::size_t d = 0; d < fast.size(); ++d) CHECK(fast[d] == slow[d]);
    }
}

TEST_CASE("trace update arithmetic") {
    TraceVector e(2, 0.99);
    auto e1 = update_trace(e, {0.0, 0.0});
    CHECK(e1.values == std::vector<double>{0.0, 0.0});

    e.values = {2.0, 0.0};
    auto e2 = update_trace(e, {1.0, 0.0});
    CHECK(e2.values[0] == Catch::Approx(2.98).margin(1e-15));

    CHECK_THROWS_AS(update_trace(e, {1.0}), InputError);
}

TEST_CASE("constant influence drives the trace to c/(1-gamma)") {
    const double c = 0.5, gamma = 0.9;
    TraceVector e(1, gamma);
    for (int t = 0; t < 400; ++t) e = update_trace(e, {c});
    CHECK(e.values[0] == Catch::Approx(c / (1.0 - gamma)).epsilon(1e-9));
}

TEST_CASE("geometric decay matches the closed form") {
    TraceVector e(1, 0.99);
    e.values[0] = 3.0;
    for (int t = 1; t <= 500; ++t) {
        e = update_trace(e, {0.0});
        CHECK(std::fabs(e.values[0] - 3.0 * std::pow(0.99, t)) < 1e-12);
    }
}

TEST_CASE("traces stay bounded under bounded influence") {
    const double gamma = 0.95, bound = 2.0;
    Rng rng(9);
    TraceVector e(3, gamma);
    for (int t = 0; t < 2000; ++t) {
        InfluenceVector inf{rng.uniform(-bound, bound), rng.uniform(-bound, bound),
                            rng.uniform(-bound, bound)};
        e = update_trace(e, inf);
        for (double v : e.values) CHECK(std::fabs(v) <= bound / (1.0 - gamma) + 1e-12);
    }
}

TEST_CASE("afi reward clamps small traces to one") {
    TraceVector e(3, 0.99);
    e.values = {0.2, 1.0, -5.0};
    InfluenceVector inf{1.0, 2.0, 3.0};
    CHECK(afi_reward(inf, e) == Catch::Approx(6.0));  // sum of influence
}

TEST_CASE("afi reward direct formula and zero influence") {
    TraceVector e(2, 0.99);
    e.values = {3.0, 100.0};
    CHECK(afi_reward({2.0, 0.0}, e) == Catch::Approx(6.0));
    CHECK(afi_reward({0.0, 0.0}, e) == 0.0);
    CHECK_THROWS_AS(afi_reward({1.0}, e), InputError);
}

TEST_CASE("afi reward is monotone in the trace for non-negative influence") {
    Rng rng(31);
    for (int it = 0; it < 200; ++it) {
        InfluenceVector inf{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
        TraceVector lo(2, 0.99), hi(2, 0.99);
        for (int d = 0; d < 2; ++d) {
            lo.values[d] = rng.uniform(-1.0, 4.0);
            hi.values[d] = lo.values[d] + rng.uniform(0.0, 3.0);
        }
        CHECK(afi_reward(inf, hi) >= afi_reward(inf, lo));
    }
}
