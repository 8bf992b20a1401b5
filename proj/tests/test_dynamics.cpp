#include <catch2/catch_amalgamated.hpp>

#include "fimlab/dynamics.hpp"

using namespace fimlab;

namespace {

std::vector<Transition> collect_transitions(const PushBoxEnv& env, int count,
                                                std::uint64_t seed) {
    std::vector<Transition> out;
    out.reserve(count);
    Rng rng(seed);
    std::uint64_t episode = 0;
    while (static_cast<int>(out.size()) < count) {
        auto [state, obs] = env.reset(seed * 1000003 + episode++);
        bool done = false;
        while (!done && static_cast<int>(out.size()) < count) {
            JointAction a{rng.below(8), rng.below(8)};
            auto res = env.step(state, a);
            Transition tr;
            tr.state = env.flatten_state(state);
            tr.action = a;
            tr.next_state = env.flatten_state(res.next_state);
            out.push_back(std::move(tr));
            state = res.next_state;
            done = res.done;
        }
    }
    return out;
}

double held_out_mse(LearnedDynamicsModel& model, const std::vector<Transition>& data) {
    double total = 0.0;
    for (const auto& s : data) {
        auto pred = model.predict(s.state, s.action);
        for (std::size_t d = 0; d < pred.size(); ++d) {
            double r = pred[d] - s.next_state[d];
            total += r * r;
        }
    }
    return total / static_cast<double>(data.size());
}

void zero_final_layer(Mlp& net) {
    std::size_t last = net.layer_sizes().size() - 2;
    std::size_t w0 = net.weight_offset(last);
    for (std::size_t i = w0; i < net.param_count(); ++i) net.params()[i] = 0.0;
}

}  // namespace

TEST_CASE("zeroed final layer predicts the zero vector") {
    Rng rng(1);
    PushBoxEnv env{GridConfig{}};
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    zero_final_layer(model.net());
    auto [s, obs] = env.reset(0);
    auto pred = model.predict(env.flatten_state(s), {0, 1});
    for (double v : pred) CHECK(v == 0.0);
}

TEST_CASE("prediction is deterministic across repeated calls") {
    Rng rng(2);
    PushBoxEnv env{GridConfig{}};
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    auto [s, obs] = env.reset(3);
    auto sv = env.flatten_state(s);
    CHECK(model.predict(sv, {4, 6}) == model.predict(sv, {4, 6}));
}

TEST_CASE("predict validates shapes") {
    Rng rng(3);
    PushBoxEnv env{GridConfig{}};
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    CHECK_THROWS_AS(model.predict({1.0, 2.0}, {0, 0}), InputError);
    auto [s, obs] = env.reset(0);
    CHECK_THROWS_AS(model.predict(env.flatten_state(s), {0}), InputError);
    CHECK_THROWS_AS(model.predict(env.flatten_state(s), {0, 9}), InputError);
}

TEST_CASE("exact predictions give zero loss and unchanged parameters") {
    Rng rng(4);
    PushBoxEnv env{GridConfig{}};
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    zero_final_layer(model.net());
    auto before = model.net().params();

    auto [s, obs] = env.reset(1);
    std::vector<Transition> batch(2);
    batch[0].state = env.flatten_state(s);
    batch[0].action = {0, 1};
    batch[0].next_state = StateVector(8, 0.0);
    batch[1].state = env.flatten_state(s);
    batch[1].action = {2, 3};
    batch[1].next_state = StateVector(8, 0.0);
    double loss = model.train_step(batch);
    CHECK(loss == 0.0);
    CHECK(model.net().params() == before);
}

TEST_CASE("a unit error in one coordinate gives loss 1") {
    Rng rng(5);
    PushBoxEnv env{GridConfig{}};
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    auto [s, obs] = env.reset(2);
    auto sv = env.flatten_state(s);
    auto target = model.predict(sv, {0, 1});
    target[3] += 1.0;
    std::vector<Transition> batch(1);
    batch[0].state = sv;
    batch[0].action = {0, 1};
    batch[0].next_state = target;
    CHECK(model.train_step(batch) == Catch::Approx(1.0));
}

TEST_CASE("empty batch is rejected") {
    Rng rng(6);
    PushBoxEnv env{GridConfig{}};
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    CHECK_THROWS_AS(model.train_step({}), InputError);
}

TEST_CASE("oracle model reproduces the simulator transition exactly") {
    PushBoxEnv env{GridConfig{}};
    auto oracle = make_oracle_model(env);
    Rng rng(7);
    for (int it = 0; it < 1000; ++it) {
        auto [s, obs] = env.reset(static_cast<std::uint64_t>(it));
        JointAction a{rng.below(8), rng.below(8)};
        auto sv = env.flatten_state(s);
        CHECK(oracle.predict(sv, a) == env.oracle_next(s, a));
        CHECK(oracle.predict(sv, a) == oracle.predict(sv, a));
    }
    // Stationary no-push case: boxes stay put.
    PushBoxState s;
    s.agent_pos = {{0, 0}, {7, 0}};
    s.box_pos = {{4, 4}, {3, 3}};
    auto next = oracle.predict(env.flatten_state(s), {0, 0});
    CHECK(next[4] == 4.0);
    CHECK(next[5] == 4.0);
    CHECK(next[6] == 3.0);
    CHECK(next[7] == 3.0);
}

TEST_CASE("trained model beats 0.5 cells held-out error") {
    PushBoxEnv env{GridConfig{}};
    auto train = collect_transitions(env, 50000, 100);
    auto held_out = collect_transitions(env, 5000, 200);

    Rng rng(8);
    auto model = LearnedDynamicsModel::for_grid(env.config(), rng);
    double initial_mse = held_out_mse(model, held_out);

    Rng batch_rng(9);
    std::vector<double> losses;
    for (int step = 0; step < 2500; ++step) {
        std::vector<Transition> batch;
        batch.reserve(128);
        for (int i = 0; i < 128; ++i)
            batch.push_back(train[batch_rng.below(static_cast<int>(train.size()))]);
        losses.push_back(model.train_step(batch));
    }

    double abs_err = 0.0;
    std::size_t n_terms = 0;
    for (const auto& s : held_out) {
        auto pred = model.predict(s.state, s.action);
        for (std::size_t d = 0; d < pred.size(); ++d) {
            abs_err += std::fabs(pred[d] - s.next_state[d]);
            ++n_terms;
        }
    }
    double mae = abs_err / static_cast<double>(n_terms);
    INFO("held-out MAE " << mae);
    CHECK(mae < 0.5);

    // Training reduced held-out MSE on the fixed transition distribution.
    CHECK(held_out_mse(model, held_out) < initial_mse);

    // Window-100 smoothed loss trends down over training.
    auto window_mean = [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t i = k; i < k + 100; ++i) s += losses[i];
        return s / 100.0;
    };
    CHECK(window_mean(losses.size() - 100) < window_mean(0));
}
