#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "otm/engine.hpp"

namespace otm {

struct SchedulerError : std::logic_error {
    using std::logic_error::logic_error;
};

// Scheduling policies over enabled(state).
struct RoundRobin {};
struct SeededRandom {
    std::uint64_t seed = 0;
};
struct Exhaustive {
    std::uint64_t max_steps = 200;
    std::uint64_t max_restarts = 16;
};
using Policy = std::variant<RoundRobin, SeededRandom, Exhaustive>;

enum class Verdict { Finished, QuiescentBlocked, StepBudgetExhausted };

inline const char* verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Finished: return "finished";
    case Verdict::QuiescentBlocked: return "quiescent-blocked";
    case Verdict::StepBudgetExhausted: return "step-budget-exhausted";
    }
    return "?";
}

struct RunResult {
    MachineState state;
    Verdict verdict = Verdict::Finished;
    std::uint64_t steps = 0;

    const History& history() const { return state.history; }
};

namespace detail {

// Budget is charged per history event appended (at least one per step), so a
// run's history length never exceeds max_steps.
inline std::uint64_t charge_step(MachineState& st, const Choice& choice) {
    const std::size_t before = st.history.size();
    step(st, choice);
    const std::size_t appended = st.history.size() - before;
    return appended > 0 ? appended : 1;
}

class RoundRobinPicker {
public:
    Choice pick(const MachineState&, const std::vector<Choice>& en) {
        // Rotate over thread ids: the first enabled thread at or after the
        // cursor goes first; within a thread, rule names in lexicographic
        // order. Keeps runs fair and traces stable.
        const auto better = [this](const Choice& a, const Choice& b) {
            const bool a_wrapped = a.thread.id < cursor_;
            const bool b_wrapped = b.thread.id < cursor_;
            if (a_wrapped != b_wrapped) return !a_wrapped;
            if (!(a.thread == b.thread)) return a.thread < b.thread;
            return a.rule < b.rule;
        };
        const Choice* best = &en.front();
        for (const Choice& c : en)
            if (better(c, *best)) best = &c;
        cursor_ = best->thread.id + 1;
        return *best;
    }

private:
    std::uint64_t cursor_ = 0;
};

class SeededPicker {
public:
    explicit SeededPicker(std::uint64_t seed) : rng_(seed) {}

    Choice pick(const MachineState&, const std::vector<Choice>& en) {
        std::uniform_int_distribution<std::size_t> dist(0, en.size() - 1);
        return en[dist(rng_)];
    }

private:
    std::mt19937_64 rng_;
};

} // namespace detail

template <typename Picker>
RunResult run_with_picker(const Action& program, Picker picker, std::uint64_t max_steps,
                          std::string input) {
    RunResult res;
    res.state = make_machine(program, std::move(input));
    std::uint64_t budget = max_steps;
    while (true) {
        const auto en = enabled(res.state);
        if (en.empty()) {
            res.verdict = res.state.finished() ? Verdict::Finished : Verdict::QuiescentBlocked;
            return res;
        }
        if (budget == 0) {
            res.verdict = Verdict::StepBudgetExhausted;
            return res;
        }
        const Choice choice = picker.pick(res.state, en);
        const std::uint64_t cost = detail::charge_step(res.state, choice);
        budget = cost >= budget ? 0 : budget - cost;
        ++res.steps;
    }
}

// Single reproducible run of a program under a policy. RoundRobin and
// SeededRandom are deterministic given identical inputs.
inline RunResult run(const Action& program, const Policy& policy, std::uint64_t max_steps = 10000,
                     std::string input = "") {
    if (max_steps == 0) throw SchedulerError("max_steps must be positive");
    if (std::holds_alternative<RoundRobin>(policy))
        return run_with_picker(program, detail::RoundRobinPicker{}, max_steps, std::move(input));
    if (const auto* sr = std::get_if<SeededRandom>(&policy))
        return run_with_picker(program, detail::SeededPicker{sr->seed}, max_steps, std::move(input));
    throw SchedulerError("run() needs a RoundRobin or SeededRandom policy; use explore()");
}

struct ExploreResult {
    std::vector<RunResult> terminals; // distinct terminal states
    bool complete = true;             // false when any bound was hit
    std::uint64_t states_seen = 0;
};

// Depth-first enumeration of every scheduler choice sequence within bounds,
// memoised on hashed machine states. Restarts count against max_restarts so
// retry loops terminate.
inline ExploreResult explore(const Action& program, std::uint64_t max_steps = 200,
                             std::uint64_t max_restarts = 8, std::string input = "",
                             std::uint64_t max_states = 2'000'000) {
    if (max_steps == 0 || max_restarts == 0)
        throw SchedulerError("exploration bounds must be positive");

    ExploreResult out;
    // key -> largest remaining budget this state was expanded with; a revisit
    // with more budget must be expanded again or deep terminals could be
    // missed while still claiming completeness
    std::map<std::string, std::uint64_t> visited;
    std::set<std::string> terminal_keys;

    struct Node {
        MachineState state;
        std::uint64_t budget;
    };

    std::vector<Node> stack;
    stack.push_back({make_machine(program, std::move(input)), max_steps});

    while (!stack.empty()) {
        Node node = std::move(stack.back());
        stack.pop_back();

        const std::string key = state_key(node.state);
        const auto [it, fresh] = visited.try_emplace(key, node.budget);
        if (!fresh) {
            if (it->second >= node.budget) continue;
            it->second = node.budget;
        }
        ++out.states_seen;
        if (out.states_seen > max_states) {
            out.complete = false;
            break;
        }

        const auto en = enabled(node.state);
        if (en.empty()) {
            if (terminal_keys.insert(key).second) {
                RunResult r;
                r.verdict =
                    node.state.finished() ? Verdict::Finished : Verdict::QuiescentBlocked;
                r.steps = node.state.labels.size();
                r.state = std::move(node.state);
                out.terminals.push_back(std::move(r));
            }
            continue;
        }

        for (const Choice& choice : en) {
            MachineState next = node.state;
            const std::size_t before = next.history.size();
            step(next, choice);
            const std::uint64_t cost =
                std::max<std::uint64_t>(1, next.history.size() - before);
            if (cost > node.budget || next.restarts > max_restarts) {
                out.complete = false; // path cut by budget, not a real terminal
                continue;
            }
            stack.push_back({std::move(next), node.budget - cost});
        }
    }
    return out;
}

} // namespace otm
