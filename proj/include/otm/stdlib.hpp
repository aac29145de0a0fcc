#pragma once

#include <cstdint>
#include <vector>

#include "otm/action.hpp"

namespace otm::lib {

// ---- maybe encoding ---------------------------------------------------------
// A none-or-value cell is a list: [] is nothing, [x] is just x.

inline Value nothing() { return Value::list({}); }
inline Value just(Value v) { return Value::list({std::move(v)}); }
inline bool is_just(const Value& v) { return !v.items().empty(); }
inline const Value& from_just(const Value& v) { return v.items().front(); }

// ---- semaphores -------------------------------------------------------------

struct Semaphore {
    VarId var;
};

inline Action new_sem(std::int64_t tokens) { return itm::new_var(Value::integer(tokens)); }

inline Action up(Semaphore s) {
    return itm::modify(s.var, [](const Value& v) { return Value::integer(v.as_int() + 1); });
}

// down blocks (retries) while the counter is zero.
inline Action down(Semaphore s) {
    return itm::then(itm::assert_var(s.var, [](const Value& v) { return v.as_int() > 0; }),
                     itm::modify(s.var, [](const Value& v) { return Value::integer(v.as_int() - 1); }));
}

// downAny: decrement any one of the family, blocking only if none can be.
inline Action down_any(const std::vector<Semaphore>& sems) {
    Action acc = itm::retry();
    for (auto it = sems.rbegin(); it != sems.rend(); ++it) acc = itm::or_else(down(*it), acc);
    return acc;
}

// ---- MVars ------------------------------------------------------------------

struct MVar {
    VarId var;
};

inline Action new_mvar() { return itm::new_var(nothing()); }

inline Action take_mvar(MVar m) {
    return itm::seq(itm::read(m.var), [m](const Value& v) {
        if (!is_just(v)) return itm::retry();
        return itm::then(itm::write(m.var, nothing()), itm::ret(from_just(v)));
    });
}

inline Action put_mvar(MVar m, Value x) {
    return itm::seq(itm::read(m.var), [m, x](const Value& v) {
        if (is_just(v)) return itm::retry();
        return itm::write(m.var, just(x));
    });
}

// ---- accounts and crowdfunding ----------------------------------------------

struct Account {
    VarId var;
};

inline Action deposit(Account a, std::int64_t n) {
    return itm::modify(a.var, [n](const Value& v) { return Value::integer(v.as_int() + n); });
}

// withdraw blocks until the account has enough funds.
inline Action withdraw(Account a, std::int64_t n) {
    return itm::then(itm::assert_var(a.var, [n](const Value& v) { return v.as_int() >= n; }),
                     itm::modify(a.var, [n](const Value& v) { return Value::integer(v.as_int() - n); }));
}

inline Action transfer(Account from, Account to, std::int64_t n) {
    return itm::then(withdraw(from, n), deposit(to, n));
}

struct Campaign {
    Account account; // temporary account holding pledges
    std::int64_t target;
};

inline Action back_campaign(Account backer, Campaign c, std::int64_t amount) {
    return transfer(backer, c.account, amount);
}

// Blocks until the goal is met, then moves the whole balance to the
// fundraiser's account.
inline Action commit_campaign(Account fundraiser, Campaign c) {
    return itm::seq(itm::read(c.account.var), [fundraiser, c](const Value& v) {
        const std::int64_t x = v.as_int();
        return itm::then(itm::check(x >= c.target),
                         transfer(c.account, fundraiser, x));
    });
}

// ---- thread barriers ---------------------------------------------------------
// A barrier holds (running, waiting). join is isolated on its own; await is
// two isolated blocks on purpose: one isolated block would prevent the other
// participants from moving running -> waiting.

struct Barrier {
    VarId var;
};

inline Action new_barrier() { return itm::new_var(Value::pair(Value::integer(0), Value::integer(0))); }

inline Action join(Barrier b) {
    return itm::then(
        itm::assert_var(b.var, [](const Value& v) { return v.second().as_int() == 0; }),
        itm::modify(b.var, [](const Value& v) {
            return Value::pair(Value::integer(v.first().as_int() + 1), v.second());
        }));
}

inline Action await(Barrier b) {
    const Action arrive = itm::modify(b.var, [](const Value& v) {
        return Value::pair(Value::integer(v.first().as_int() - 1),
                           Value::integer(v.second().as_int() + 1));
    });
    const Action cross = itm::then(
        itm::assert_var(b.var, [](const Value& v) { return v.first().as_int() == 0; }),
        itm::modify(b.var, [](const Value& v) {
            return Value::pair(v.first(), Value::integer(v.second().as_int() - 1));
        }));
    return tx::then(tx::isolated(arrive), tx::isolated(cross));
}

// ---- atomic futures -----------------------------------------------------------

struct Future {
    VarId var;
};

inline Action get_future(Future f) {
    return itm::seq(itm::read(f.var), [](const Value& v) {
        if (!is_just(v)) return itm::retry();
        return itm::ret(from_just(v));
    });
}

// spawn allocates the future and forks the worker into the same transaction;
// the handle value is the future's variable.
inline Action spawn(Action job) {
    detail::require_kind(job, Kind::Otm, "lib::spawn");
    return tx::seq(tx::isolated(itm::new_var(nothing())), [job](const Value& handle) {
        const Future f{handle.as_var()};
        const Action worker = tx::seq(job, [f](const Value& result) {
            return tx::isolated(itm::write(f.var, just(result)));
        });
        return tx::then(tx::fork(worker), tx::ret(handle));
    });
}

// ---- Petri nets ----------------------------------------------------------------
// Places are semaphores; a firing takes a token from every input place and
// puts one in every output place, atomically but not in isolation so that
// transitions sharing no place can fire concurrently.

using Place = Semaphore;

struct PetriTransition {
    std::vector<Place> inputs;
    std::vector<Place> outputs;
};

inline Action fire(const PetriTransition& t) {
    Action acc = tx::ret(Value::unit());
    for (auto it = t.outputs.rbegin(); it != t.outputs.rend(); ++it)
        acc = tx::then(tx::isolated(up(*it)), acc);
    for (auto it = t.inputs.rbegin(); it != t.inputs.rend(); ++it)
        acc = tx::then(tx::isolated(down(*it)), acc);
    return acc;
}

// One IO-level thread simulating the transition forever.
inline Action fire_forever(const PetriTransition& t) {
    return io::seq(io::atomic(fire(t)), [t](const Value&) { return fire_forever(t); });
}

} // namespace otm::lib
