#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "otm/scheduler.hpp"
#include "otm/stdlib.hpp"

namespace otm::scen {

struct ScenarioParams {
    std::map<std::string, std::int64_t> ints;
    std::string input;

    std::int64_t get(const std::string& name, std::int64_t fallback) const {
        auto it = ints.find(name);
        return it == ints.end() ? fallback : it->second;
    }
};

struct Scenario {
    std::string name;
    std::string description;
    std::function<Action(const ScenarioParams&)> build;
    std::vector<Verdict> ok_verdicts{Verdict::Finished};
};

// ITM action allocating one variable per initial value, returning the list of
// handles; scenario continuations unpack it.
inline Action new_vars(std::vector<Value> inits) {
    if (inits.empty()) return itm::ret(Value::list({}));
    const Value head = inits.front();
    const std::vector<Value> rest(inits.begin() + 1, inits.end());
    return itm::seq(itm::new_var(head), [rest](const Value& h) {
        return itm::seq(new_vars(rest), [h](const Value& tail) {
            std::vector<Value> xs{h};
            for (const Value& t : tail.items()) xs.push_back(t);
            return itm::ret(Value::list(std::move(xs)));
        });
    });
}

inline Action setup(std::vector<std::int64_t> inits) {
    std::vector<Value> vs;
    vs.reserve(inits.size());
    for (const auto n : inits) vs.push_back(Value::integer(n));
    return io::atomically(new_vars(std::move(vs)));
}

namespace detail {

using lib::Account;
using lib::Barrier;
using lib::Campaign;
using lib::Future;
using lib::MVar;
using lib::PetriTransition;
using lib::Place;
using lib::Semaphore;

inline Action semaphore_scenario(const ScenarioParams&) {
    // One waiter blocked on an empty semaphore; the main thread releases it.
    return io::seq(setup({0}), [](const Value& hs) {
        const Semaphore s{hs.items()[0].as_var()};
        const Action waiter = io::atomically(lib::down(s));
        return io::then(io::fork(waiter), io::atomically(lib::up(s)));
    });
}

// The motivating example: a master outsources part of an atomic computation
// to a worker; both stay atomic but not isolated, so their transactions merge
// on the shared semaphores and buffer and commit together.
inline Action masterworker_scenario(const ScenarioParams& p) {
    const std::int64_t request = p.get("request", 7);
    return io::seq(setup({0, 0, 0}), [request](const Value& hs) {
        const Semaphore c1{hs.items()[0].as_var()};
        const Semaphore c2{hs.items()[1].as_var()};
        const VarId buf = hs.items()[2].as_var();

        const Action master =
            tx::then(tx::isolated(itm::write(buf, Value::integer(request))),
                     tx::then(tx::isolated(lib::up(c1)),
                              tx::then(tx::isolated(lib::down(c2)),
                                       tx::isolated(itm::read(buf)))));
        const Action worker = tx::then(
            tx::isolated(lib::down(c1)),
            tx::seq(tx::isolated(itm::read(buf)), [buf, c2](const Value& x) {
                const Value answer = Value::integer(2 * x.as_int());
                return tx::then(tx::isolated(itm::write(buf, answer)),
                                tx::isolated(lib::up(c2)));
            }));

        return io::then(io::fork(io::atomic(worker)), io::atomic(master));
    });
}

// Negative control: the same synchronisation inside fully isolated
// transactions deadlocks, as no interleaving of the two blocks exists.
inline Action masterworker_isolated_scenario(const ScenarioParams& p) {
    const std::int64_t request = p.get("request", 7);
    return io::seq(setup({0, 0, 0}), [request](const Value& hs) {
        const Semaphore c1{hs.items()[0].as_var()};
        const Semaphore c2{hs.items()[1].as_var()};
        const VarId buf = hs.items()[2].as_var();

        const Action master = itm::then(
            itm::write(buf, Value::integer(request)),
            itm::then(lib::up(c1), itm::then(lib::down(c2), itm::read(buf))));
        const Action worker =
            itm::then(lib::down(c1), itm::seq(itm::read(buf), [buf, c2](const Value& x) {
                          return itm::then(itm::write(buf, Value::integer(2 * x.as_int())),
                                           lib::up(c2));
                      }));

        return io::then(io::fork(io::atomically(worker)), io::atomically(master));
    });
}

inline Action crowdfunding_scenario(const ScenarioParams& p) {
    const std::int64_t target = p.get("target", 60);
    const std::int64_t backers = p.get("backers", 2);
    const std::int64_t give = p.get("give", 30);
    const std::int64_t balance = p.get("balance", 50);

    std::vector<std::int64_t> inits{0, 0}; // fundraiser, campaign account
    for (std::int64_t i = 0; i < backers; ++i) inits.push_back(balance);

    return io::seq(setup(inits), [target, backers, give](const Value& hs) {
        const Account fundraiser{hs.items()[0].as_var()};
        const Campaign campaign{Account{hs.items()[1].as_var()}, target};

        Action program = io::atomically(lib::commit_campaign(fundraiser, campaign));
        for (std::int64_t i = 0; i < backers; ++i) {
            const Account backer{hs.items()[2 + i].as_var()};
            const Action back = io::atomic(
                tx::then(tx::isolated(lib::withdraw(backer, give)),
                         tx::isolated(lib::deposit(campaign.account, give))));
            program = io::then(io::fork(back), program);
        }
        return program;
    });
}

inline Action barrier_scenario(const ScenarioParams& p) {
    const std::int64_t n = p.get("n", 3);
    return io::seq(io::atomically(lib::new_barrier()), [n](const Value& h) {
        const Barrier b{h.as_var()};
        const Action participant =
            io::then(io::atomically(lib::join(b)), io::atomic(lib::await(b)));
        Action program = io::ret(Value::unit());
        for (std::int64_t i = 0; i < n; ++i) program = io::then(io::fork(participant), program);
        return program;
    });
}

inline Action futures_scenario(const ScenarioParams& p) {
    const std::int64_t answer = p.get("answer", 42);
    const Action job = tx::ret(Value::integer(answer));
    return io::atomic(tx::seq(lib::spawn(job), [](const Value& handle) {
        return tx::isolated(lib::get_future(Future{handle.as_var()}));
    }));
}

inline Action mvar_scenario(const ScenarioParams& p) {
    const std::int64_t message = p.get("message", 5);
    return io::seq(io::atomically(lib::new_mvar()), [message](const Value& h) {
        const MVar m{h.as_var()};
        const Action producer = io::atomically(lib::put_mvar(m, Value::integer(message)));
        return io::then(io::fork(producer), io::atomically(lib::take_mvar(m)));
    });
}

// One-shot firing threads for the simple net: p1 holds the only token, so
// either t1 or t2 fires; t2 can never complete and releases what it took.
inline Action petri_simple_scenario(const ScenarioParams&) {
    return io::seq(setup({1, 0, 0, 0}), [](const Value& hs) {
        const Place p1{hs.items()[0].as_var()};
        const Place p2{hs.items()[1].as_var()};
        const Place p3{hs.items()[2].as_var()};
        const Place p4{hs.items()[3].as_var()};
        const PetriTransition t1{{p1}, {p3, p4}};
        const PetriTransition t2{{p1, p2}, {p4}};
        return io::then(io::fork(io::atomic(lib::fire(t1))),
                        io::fork(io::atomic(lib::fire(t2))));
    });
}

inline Action petri_disjoint_scenario(const ScenarioParams&) {
    return io::seq(setup({1, 0, 1, 0}), [](const Value& hs) {
        const Place p1{hs.items()[0].as_var()};
        const Place p2{hs.items()[1].as_var()};
        const Place p3{hs.items()[2].as_var()};
        const Place p4{hs.items()[3].as_var()};
        const PetriTransition t1{{p1}, {p2}};
        const PetriTransition t2{{p3}, {p4}};
        return io::then(io::fork(io::atomic(lib::fire(t1))),
                        io::fork(io::atomic(lib::fire(t2))));
    });
}

inline Action philosophers_scenario(const ScenarioParams& p) {
    const std::int64_t n = p.get("n", 3);
    std::vector<std::int64_t> forks(static_cast<std::size_t>(n), 1);
    return io::seq(setup(forks), [n](const Value& hs) {
        Action program = io::ret(Value::unit());
        for (std::int64_t i = 0; i < n; ++i) {
            const Place left{hs.items()[static_cast<std::size_t>(i)].as_var()};
            const Place right{hs.items()[static_cast<std::size_t>((i + 1) % n)].as_var()};
            const PetriTransition philosopher{{left, right}, {left, right}};
            program = io::then(io::fork(lib::fire_forever(philosopher)), program);
        }
        return program;
    });
}

inline Action pad(int steps, Action tail) {
    Action acc = std::move(tail);
    for (int i = 0; i < steps; ++i)
        acc = tx::then(tx::pure([] { return Value::unit(); }), acc);
    return acc;
}

// Three transactions chained by two merges; the surviving transaction commits
// for the whole group. Padding keeps the claim order stable under the
// round-robin scheduler: the bridge touches the holder's claim only after the
// toucher has merged into the bridge, and the holder outlives both.
inline Action merge_chain_scenario(const ScenarioParams&) {
    return io::seq(setup({0, 0}), [](const Value& hs) {
        const VarId vb = hs.items()[0].as_var();
        const VarId vc = hs.items()[1].as_var();

        const Action bridge = // claims vb early, touches vc late
            io::atomic(tx::then(tx::isolated(itm::write(vb, Value::integer(1))),
                                pad(3, tx::then(tx::isolated(itm::read(vc)),
                                                tx::ret(Value::unit())))));
        const Action toucher = // merges into the bridge via vb
            io::atomic(pad(1, tx::then(tx::isolated(itm::read(vb)), tx::ret(Value::unit()))));
        const Action holder = // claims vc and stays busy until everyone joined
            io::atomic(tx::then(tx::isolated(itm::write(vc, Value::integer(1))),
                                pad(10, tx::ret(Value::unit()))));

        return io::then(io::fork(bridge), io::then(io::fork(toucher), io::fork(holder)));
    });
}

inline Action echo_scenario(const ScenarioParams& p) {
    Action program = io::ret(Value::unit());
    for (std::size_t i = p.input.size(); i-- > 0;) {
        program = io::then(
            io::seq(io::get_char(), [](const Value& c) { return io::put_char(c.as_char()); }),
            program);
    }
    return program;
}

} // namespace detail

inline const std::vector<Scenario>& all() {
    static const std::vector<Scenario> scenarios = {
        {"semaphore", "a waiter blocked on a semaphore released by another thread",
         detail::semaphore_scenario},
        {"masterworker", "master outsources work to a worker; transactions merge and commit once",
         detail::masterworker_scenario},
        {"masterworker-isolated",
         "the same synchronisation under full isolation; deadlocks by design",
         detail::masterworker_isolated_scenario,
         {Verdict::QuiescentBlocked}},
        {"crowdfunding", "backers fund a campaign; the closer collects once the target is met",
         detail::crowdfunding_scenario},
        {"barrier", "n participants join and cross a thread barrier", detail::barrier_scenario},
        {"futures", "spawn a worker inside a transaction and read its future",
         detail::futures_scenario},
        {"mvar", "one-place channel: producer puts, consumer takes", detail::mvar_scenario},
        {"petri-simple", "the four-place net where t1 and t2 compete for p1's token",
         detail::petri_simple_scenario,
         {Verdict::QuiescentBlocked}},
        {"petri-disjoint", "two transitions without shared places fire without merging",
         detail::petri_disjoint_scenario},
        {"philosophers", "n dining philosophers as a Petri net ring, firing forever",
         detail::philosophers_scenario,
         {Verdict::StepBudgetExhausted}},
        {"merge-chain", "three transactions fused by two merges, committed as one",
         detail::merge_chain_scenario},
        {"echo", "copy the injected input to the output, character by character",
         detail::echo_scenario},
    };
    return scenarios;
}

inline const Scenario* find(const std::string& name) {
    for (const Scenario& s : all())
        if (s.name == name) return &s;
    return nullptr;
}

} // namespace otm::scen
