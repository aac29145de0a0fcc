// Acceptance suite: one checked criterion per section, one pass/fail line
// each, nonzero exit when anything fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace otm;
using testutil::vi;

namespace {

int failures = 0;

struct Checker {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

void criterion(int n, const std::string& name, double budget_seconds,
               const std::function<void(Checker&)>& body) {
    Checker c;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& ex) {
        c.expect(false, std::string("exception: ") + ex.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.expect(secs < budget_seconds, "runtime budget exceeded");
    if (c.ok) {
        std::printf("PASS  criterion %2d: %s (%.2fs)\n", n, name.c_str(), secs);
    } else {
        ++failures;
        std::printf("FAIL  criterion %2d: %s (%.2fs) -- %s\n", n, name.c_str(), secs,
                    c.detail.c_str());
    }
    std::fflush(stdout);
}

Outcome eval_outcome(const Action& itm_body) { return testutil::run_atomically(itm_body).outcome; }

// ---- criterion 1: term reduction table --------------------------------------

void rule_table(Checker& c) {
    // Eval
    c.expect(eval_outcome(itm::pure([] { return vi(42); })) == Outcome::returned(vi(42)),
             "Eval: host computation");
    // BindVal
    c.expect(eval_outcome(itm::seq(itm::ret(vi(5)),
                                   [](const Value& v) { return itm::ret(vi(v.as_int() + 1)); })) ==
                 Outcome::returned(vi(6)),
             "BindVal");
    // BindEx, retry case
    c.expect(eval_outcome(itm::seq(itm::retry(), [](const Value&) { return itm::ret(vi(0)); }))
                 .is_retried(),
             "BindEx retry");
    // BindEx, throw case
    c.expect(eval_outcome(itm::seq(itm::throw_(vi(3)),
                                   [](const Value&) { return itm::ret(vi(0)); })) ==
                 Outcome::threw(vi(3)),
             "BindEx throw");
    // CatchVal, return case
    c.expect(eval_outcome(itm::catch_(itm::ret(vi(7)),
                                      [](const Value&) { return itm::ret(vi(0)); })) ==
                 Outcome::returned(vi(7)),
             "CatchVal return");
    // CatchVal, retry case
    c.expect(eval_outcome(itm::catch_(itm::retry(), [](const Value&) { return itm::ret(vi(0)); }))
                 .is_retried(),
             "CatchVal retry");
    // CatchEx
    c.expect(eval_outcome(itm::catch_(itm::throw_(vi(9)),
                                      [](const Value& e) { return itm::ret(e); })) ==
                 Outcome::returned(vi(9)),
             "CatchEx");
}

// ---- criterion 2: claim/merge vs the point-wise oracle -----------------------

Heap oracle_commit(TxId k, const Heap& theta, const WorkingMemory& delta) {
    Heap out;
    std::set<VarId> dom;
    for (const auto& [r, _] : theta) dom.insert(r);
    for (const auto& [r, _] : delta) dom.insert(r);
    for (const VarId r : dom) {
        const auto d = delta.find(r);
        if (d != delta.end() && d->second.owner == k) out.emplace(r, d->second.value);
        else if (auto t = theta.find(r); t != theta.end()) out.emplace(r, t->second);
    }
    return out;
}

WorkingMemory oracle_cleanup(TxId k, const WorkingMemory& delta) {
    WorkingMemory out;
    for (const auto& [r, cl] : delta)
        if (!(cl.owner == k)) out.emplace(r, cl);
    return out;
}

Heap oracle_leak(TxId k, const Heap& theta, const WorkingMemory& delta) {
    Heap out = theta;
    for (const auto& [r, cl] : delta)
        if (cl.owner == k && !theta.count(r)) out.emplace(r, cl.value);
    return out;
}

WorkingMemory oracle_reown(const WorkingMemory& delta, TxId k, TxId j) {
    WorkingMemory out;
    for (const auto& [r, cl] : delta) out.emplace(r, cl.owner == k ? Claim{cl.value, j} : cl);
    return out;
}

void claim_merge_oracle(Checker& c) {
    std::mt19937_64 rng(77);
    int mismatches = 0;
    int states = 0;
    for (int i = 0; i < 1500; ++i) {
        MemoryState mem;
        for (std::uint64_t v = 0; v < 6; ++v) {
            const int where = static_cast<int>(rng() % 4);
            if (where & 1) mem.heap.emplace(VarId{v}, vi(static_cast<std::int64_t>(rng() % 8)));
            if (where & 2)
                mem.working.emplace(VarId{v},
                                    Claim{vi(static_cast<std::int64_t>(rng() % 8)), TxId{rng() % 3}});
        }
        const Heap theta = mem.heap;
        const WorkingMemory delta = mem.working;
        const TxId k{rng() % 3};
        const VarId r{rng() % 6};
        ++states;
        switch (rng() % 5) {
        case 0: {
            commit_apply(mem, k);
            if (mem.heap != oracle_commit(k, theta, delta) ||
                mem.working != oracle_cleanup(k, delta))
                ++mismatches;
            break;
        }
        case 1: {
            abort_apply(mem, k, ThreadId{0});
            if (mem.heap != oracle_leak(k, theta, delta) ||
                mem.working != oracle_cleanup(k, delta))
                ++mismatches;
            break;
        }
        case 2: {
            if (!mem.known(r)) break;
            const auto res = claim_read(mem, r, k);
            const auto d = delta.find(r);
            WorkingMemory expect = delta;
            Value value = Value::unit();
            if (d == delta.end()) {
                value = theta.at(r);
                expect.emplace(r, Claim{value, k});
            } else if (d->second.owner == k) {
                value = d->second.value;
            } else {
                value = d->second.value;
                expect = oracle_reown(delta, k, d->second.owner);
            }
            if (!(res.value == value) || mem.working != expect || mem.heap != theta) ++mismatches;
            break;
        }
        case 3: {
            if (!mem.known(r)) break;
            const Value v = vi(static_cast<std::int64_t>(rng() % 50));
            claim_write(mem, r, v, k);
            const auto d = delta.find(r);
            WorkingMemory expect = delta;
            if (d == delta.end() || d->second.owner == k) {
                expect[r] = Claim{v, k};
            } else {
                expect = oracle_reown(delta, k, d->second.owner);
                expect[r] = Claim{v, d->second.owner};
            }
            if (mem.working != expect || mem.heap != theta) ++mismatches;
            break;
        }
        default: {
            IdGen ids;
            const Value v = vi(static_cast<std::int64_t>(rng() % 50));
            const VarId fresh = alloc_var(mem, ids, v, k);
            WorkingMemory expect = delta;
            expect.emplace(fresh, Claim{v, k});
            if (theta.count(fresh) || delta.count(fresh) || mem.working != expect) ++mismatches;
            break;
        }
        }
    }
    c.expect(states >= 1000, "not enough randomized states");
    c.expect(mismatches == 0, "oracle mismatches: " + std::to_string(mismatches));
}

// ---- criterion 3: the motivating example -------------------------------------

void master_worker(Checker& c) {
    const auto* open_scenario = scen::find("masterworker");
    const auto ex = explore(open_scenario->build({}), 300, 8);
    c.expect(ex.complete, "open exploration hit its budget");
    c.expect(!ex.terminals.empty(), "open exploration found no terminals");

    int complete_runs = 0;
    for (const auto& t : ex.terminals) {
        if (t.verdict != Verdict::Finished) continue;
        ++complete_runs;
        // the answer is delivered to the master (2 * request = 14)
        const auto& master = t.state.threads.at(ThreadId{0});
        c.expect(master.result == Outcome::returned(vi(14)), "answer not delivered");
        // exactly one Co label beyond the setup commit, covering both parties
        std::uint64_t co = 0;
        for (const auto& l : t.state.labels)
            if (l.tag == TransitionLabel::Tag::Co) ++co;
        c.expect(co == 2, "expected setup commit plus exactly one merged commit");
        c.expect(t.state.merges == 1, "the two parties did not merge exactly once");
        c.expect(t.state.commit_counts.count(ThreadId{1}) == 1, "worker did not commit");
    }
    c.expect(complete_runs > 0, "no complete executions at all");

    const auto* iso_scenario = scen::find("masterworker-isolated");
    const auto iso = explore(iso_scenario->build({}), 300, 8);
    c.expect(iso.complete, "isolated exploration hit its budget");
    c.expect(!iso.terminals.empty(), "isolated exploration found no terminals");
    for (const auto& t : iso.terminals)
        c.expect(t.verdict == Verdict::QuiescentBlocked,
                 "isolated variant completed; it must deadlock");
}

// ---- criterion 4: the simple Petri net ----------------------------------------

void petri_simple(Checker& c) {
    const auto ex = explore(scen::find("petri-simple")->build({}), 200, 8);
    c.expect(ex.complete, "exploration hit its budget");
    c.expect(!ex.terminals.empty(), "no terminals");
    for (const auto& t : ex.terminals) {
        const auto marking = [&](std::uint64_t v) { return t.state.mem.heap.at(VarId{v}).as_int(); };
        c.expect(marking(0) == 0 && marking(1) == 0 && marking(2) == 1 && marking(3) == 1,
                 "terminal marking is not p1=0 p2=0 p3=1 p4=1");
        c.expect(t.state.commits == 2, "t2 committed"); // setup + t1 only
    }
}

// ---- criterion 5: dining philosophers -----------------------------------------

void philosophers(Checker& c) {
    scen::ScenarioParams p;
    p.ints["n"] = 3;
    const auto rr = run(scen::find("philosophers")->build(p), RoundRobin{}, 500);
    c.expect(rr.verdict != Verdict::QuiescentBlocked, "the table deadlocked");
    for (std::uint64_t t = 1; t <= 3; ++t) {
        const auto it = rr.state.commit_counts.find(ThreadId{t});
        c.expect(it != rr.state.commit_counts.end() && it->second >= 1,
                 "philosopher " + std::to_string(t) + " never fired");
    }
}

// ---- criteria 6 and 7: opacity and the merge-forest shape ----------------------

std::vector<History> corpus() {
    std::vector<History> out;
    const std::vector<std::string> names = {
        "semaphore", "masterworker", "masterworker-isolated", "crowdfunding", "barrier",
        "futures",   "mvar",         "petri-simple",          "petri-disjoint", "philosophers",
        "merge-chain"};
    for (const auto& name : names) {
        const auto* s = scen::find(name);
        scen::ScenarioParams p;
        out.push_back(run(s->build(p), RoundRobin{}, 600).history());
        out.push_back(run(s->build(p), SeededRandom{41}, 600).history());
    }
    return out;
}

void opacity_corollary(Checker& c) {
    std::size_t checked = 0;
    for (const History& h : corpus()) {
        const auto v = opaque(h);
        c.expect(v.opaque, "scenario history " + std::to_string(checked) + " not opaque");
        ++checked;
    }
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const int pool = 2 + static_cast<int>(seed % 3);
        const int workers = 2 + static_cast<int>(seed % 2);
        const Action program = testutil::random_concurrent_program(seed, pool, workers);
        const auto rr = run(program, SeededRandom{seed}, 400);
        const auto v = opaque(rr.history());
        if (!v.opaque) {
            c.expect(false, "random program " + std::to_string(seed) + " not opaque");
            return;
        }
        ++checked;
    }
    c.expect(checked >= 10000, "corpus too small");
}

void forest_shape(Checker& c) {
    std::size_t violations = 0;
    std::size_t checked = 0;
    const auto check_forest = [&](const History& h) {
        const History nl = nonlocal(h);
        const OpacityGraph g = build_opg(nl, canonical_order(nl));
        if (!forest_red_check(g)) ++violations;
        ++checked;
    };
    for (const History& h : corpus()) check_forest(h);
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const int pool = 2 + static_cast<int>(seed % 3);
        const int workers = 2 + static_cast<int>(seed % 2);
        const auto rr =
            run(testutil::random_concurrent_program(seed, pool, workers), SeededRandom{seed}, 400);
        check_forest(rr.history());
    }
    c.expect(violations == 0, std::to_string(violations) + " forest violations");
    c.expect(checked >= 10000, "corpus too small");
}

// ---- criterion 8: atomically = atomic . isolated --------------------------------

void split_equivalence(Checker& c) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        testutil::Gen gen(seed, 3);
        const Action body = gen.body(4);
        const auto engine_run = testutil::run_atomically(body, 20000);
        const auto ref = testutil::ref_run_transaction(body, {});
        if (!(engine_run.outcome == ref.outcome)) {
            c.expect(false, "outcome mismatch at seed " + std::to_string(seed));
            return;
        }
        if (engine_run.heap != ref.heap) {
            c.expect(false, "heap mismatch at seed " + std::to_string(seed));
            return;
        }
    }
}

// ---- criterion 9: checker soundness controls -------------------------------------

void checker_controls(Checker& c) {
    History cyc;
    {
        using O = Event::Op;
        const auto ev = [](std::uint64_t seq, std::uint64_t tx, O op, std::uint64_t var,
                           std::int64_t val) {
            Event e;
            e.seq = seq;
            e.tx = TxId{tx};
            e.thread = ThreadId{tx};
            e.op = op;
            e.var = VarId{var};
            e.value = vi(val);
            return e;
        };
        cyc = {ev(0, 2, O::New, 0, 0),  ev(1, 2, O::New, 1, 0),  ev(2, 2, O::Commit, 0, 0),
               ev(3, 0, O::Write, 0, 1), ev(4, 1, O::Write, 1, 2), ev(5, 0, O::Read, 1, 2),
               ev(6, 1, O::Read, 0, 1),  ev(7, 0, O::Commit, 0, 0), ev(8, 1, O::Commit, 0, 0)};
    }
    const auto v1 = opaque(cyc);
    c.expect(!v1.opaque, "mutual read-from cycle accepted");
    c.expect(v1.violation == ViolationKind::Cyclic, "wrong witness kind for the cycle");
    c.expect(v1.cycle.size() >= 2, "no cycle witness");

    History inconsistent = cyc;
    inconsistent.resize(3);
    {
        Event bad;
        bad.seq = 3;
        bad.tx = TxId{1};
        bad.thread = ThreadId{1};
        bad.op = Event::Op::Read;
        bad.var = VarId{0};
        bad.value = vi(9); // never written
        inconsistent.push_back(bad);
    }
    const auto v2 = opaque(inconsistent);
    c.expect(!v2.opaque, "inconsistent trace accepted");
    c.expect(v2.violation == ViolationKind::Inconsistent, "wrong witness kind for inconsistency");
}

// ---- criterion 10: determinism ------------------------------------------------------

void determinism(Checker& c) {
    const auto trace_of = [](const std::string& scenario, std::uint64_t seed,
                             const std::string& input) {
        const auto* s = scen::find(scenario);
        scen::ScenarioParams p;
        p.input = input;
        const auto rr = run(s->build(p), SeededRandom{seed}, 4000, input);
        std::ostringstream os;
        write_trace(os, rr.history());
        return os.str() + "|" + rr.state.output + "|" + verdict_name(rr.verdict);
    };
    c.expect(trace_of("masterworker", 7, "") == trace_of("masterworker", 7, ""),
             "masterworker seed 7 not reproducible");
    c.expect(trace_of("crowdfunding", 21, "") == trace_of("crowdfunding", 21, ""),
             "crowdfunding seed 21 not reproducible");
    c.expect(trace_of("echo", 3, "otm") == trace_of("echo", 3, "otm"),
             "echo with input not reproducible");
}

} // namespace

int main() {
    criterion(1, "term reduction table", 1.0, rule_table);
    criterion(2, "claim/merge semantics vs point-wise oracle", 10.0, claim_merge_oracle);
    criterion(3, "master/worker: open commits once, isolated deadlocks", 60.0, master_worker);
    criterion(4, "simple Petri net: t1 wins in every terminal", 30.0, petri_simple);
    criterion(5, "dining philosophers: fair rotation, no deadlock", 10.0, philosophers);
    criterion(6, "opacity holds across the scenario and random corpus", 300.0, opacity_corollary);
    criterion(7, "dependency graphs form red forests", 300.0, forest_shape);
    criterion(8, "atomic(isolated(...)) equals sequential evaluation", 60.0, split_equivalence);
    criterion(9, "checker rejects the control traces with the right witness", 5.0,
              checker_controls);
    criterion(10, "identical seeds give byte-identical traces", 10.0, determinism);

    if (failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria failed\n", failures);
    return 1;
}
