#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otm/action.hpp"
#include "otm/history.hpp"
#include "otm/memory.hpp"

namespace otm {

struct EngineError : std::logic_error {
    using std::logic_error::logic_error;
};

// β ::= τ | new⟨k⟩ | co⟨k⟩ | ab⟨k,t,M⟩ | ab̄⟨k,t,M⟩ | ?c | !c
struct TransitionLabel {
    enum class Tag { Tau, New, Co, Ab, AbBar, In, Out };

    Tag tag = Tag::Tau;
    TxId tx;
    ThreadId thread; // Ab/AbBar: the raising thread
    Value payload;   // Ab/AbBar: the exception
    char c = 0;      // In/Out

    static TransitionLabel tau() { return {}; }
    static TransitionLabel make_new(TxId k) { return {Tag::New, k, {}, {}, 0}; }
    static TransitionLabel commit(TxId k) { return {Tag::Co, k, {}, {}, 0}; }
    static TransitionLabel abort(TxId k, ThreadId t, Value m) {
        return {Tag::Ab, k, t, std::move(m), 0};
    }
    static TransitionLabel in(char c) { return {Tag::In, {}, {}, {}, c}; }
    static TransitionLabel out(char c) { return {Tag::Out, {}, {}, {}, c}; }

    // transaction(β), defined exactly for New/Co/Ab/AbBar.
    std::optional<TxId> transaction() const {
        switch (tag) {
        case Tag::New:
        case Tag::Co:
        case Tag::Ab:
        case Tag::AbBar:
            return tx;
        default:
            return std::nullopt;
        }
    }

    std::string show() const {
        switch (tag) {
        case Tag::Tau: return "tau";
        case Tag::New: return "new<" + std::to_string(tx.id) + ">";
        case Tag::Co: return "co<" + std::to_string(tx.id) + ">";
        case Tag::Ab:
            return "ab<" + std::to_string(tx.id) + "," + std::to_string(thread.id) + ">";
        case Tag::AbBar:
            return "ab~<" + std::to_string(tx.id) + "," + std::to_string(thread.id) + ">";
        case Tag::In: return std::string("?") + c;
        case Tag::Out: return std::string("!") + c;
        }
        return "?";
    }
};

// One pending frame of the bind/catch spine (the evaluation context E).
struct Frame {
    enum class Kind { Bind, Catch };
    Kind kind;
    NodePtr node; // the Bind/Catch node; also the frame's identity
};

// A position inside an action: either a head redex or an outcome, plus the
// frame stack. Normalisation keeps `head` free of Bind/Catch/Ret/Throw/Retry,
// so matching a rule is a simple inspection.
struct Cursor {
    Action head;
    std::optional<Outcome> outcome;
    std::vector<Frame> frames;

    bool at_outcome() const { return outcome.has_value(); }

    void set(Action a) {
        outcome.reset();
        while (true) {
            const ActionNode& n = a.node();
            if (const auto* bind = std::get_if<ActionNode::Bind>(&n.data)) {
                frames.push_back({Frame::Kind::Bind, a.ptr()});
                a = bind->first;
            } else if (const auto* cat = std::get_if<ActionNode::Catch>(&n.data)) {
                frames.push_back({Frame::Kind::Catch, a.ptr()});
                a = cat->body;
            } else if (const auto* ret = std::get_if<ActionNode::Ret>(&n.data)) {
                set_outcome(Outcome::returned(ret->v));
                return;
            } else if (const auto* thr = std::get_if<ActionNode::Throw>(&n.data)) {
                set_outcome(Outcome::threw(thr->exc));
                return;
            } else if (std::holds_alternative<ActionNode::Retry>(n.data)) {
                set_outcome(Outcome::retried());
                return;
            } else {
                head = std::move(a);
                return;
            }
        }
    }

    void set_outcome(Outcome o) {
        head = Action();
        outcome = std::move(o);
    }

    // Apply the topmost frame to the outcome: BindVal/BindEx/CatchVal/CatchEx.
    void apply_frame() {
        if (!outcome || frames.empty()) throw EngineError("no frame to apply");
        Frame f = std::move(frames.back());
        frames.pop_back();
        const Outcome o = *outcome;
        if (f.kind == Frame::Kind::Bind) {
            auto& bind = std::get<ActionNode::Bind>(f.node->data);
            if (o.is_returned())
                set(detail::apply_cont(f.node->kind, bind.cont, bind.cache, o.v));
            // BindEx: retry and throw pass through unchanged.
        } else {
            auto& cat = std::get<ActionNode::Catch>(f.node->data);
            if (o.is_threw())
                set(detail::apply_cont(f.node->kind, cat.handler, cat.cache, o.v));
            // CatchVal: retry and return pass through unchanged.
        }
    }
};

// Visible value snapshot used by retry wake gates: the claimed working value
// when one exists, otherwise the heap value.
using GateSnapshot = std::map<VarId, std::optional<Value>>;

struct Thread {
    enum class Mode { Plain, InTx, Done };

    ThreadId id;
    Mode mode = Mode::Plain;
    Cursor cursor;

    // InTx bookkeeping. `tx` is the name given at entry; resolve through the
    // alias table to find the current transaction. `atomic_action` is the
    // whole `atomic M` action for restarts; forked (ForkT) threads have none.
    TxId tx;
    std::vector<Frame> saved_io;
    Action atomic_action;

    // Plain thread parked by the retry policy: re-entering `atomic` is
    // enabled only once some gated location's visible value changes.
    std::optional<GateSnapshot> wake_gate;

    Outcome result; // Mode::Done

    bool forked() const { return !atomic_action.valid(); }
};

struct TxInfo {
    std::set<VarId> read_set;
    std::uint64_t event_count = 0;
};

struct MachineState {
    MemoryState mem;
    std::map<ThreadId, Thread> threads;
    std::map<TxId, TxInfo> live; // keyed by surviving (canonical) name
    IdGen ids;

    std::string input;
    std::size_t input_pos = 0;
    std::string output;

    History history;
    std::vector<TransitionLabel> labels;

    std::uint64_t commits = 0;
    std::uint64_t aborts = 0;
    std::uint64_t merges = 0;
    std::uint64_t restarts = 0;
    std::map<ThreadId, std::uint64_t> commit_counts; // per participant thread

    TxId resolve(TxId k) const { return mem.aliases.resolve(k); }

    std::optional<Value> visible(VarId r) const {
        if (auto it = mem.working.find(r); it != mem.working.end()) return it->second.value;
        if (auto it = mem.heap.find(r); it != mem.heap.end()) return it->second;
        return std::nullopt;
    }

    bool finished() const {
        return std::all_of(threads.begin(), threads.end(),
                           [](const auto& kv) { return kv.second.mode == Thread::Mode::Done; });
    }
};

inline MachineState make_machine(const Action& program, std::string input = "") {
    detail::require_kind(program, Kind::Io, "make_machine");
    MachineState st;
    st.input = std::move(input);
    Thread t;
    t.id = st.ids.fresh_thread();
    t.cursor.set(program);
    if (t.cursor.at_outcome() && t.cursor.frames.empty()) {
        t.mode = Thread::Mode::Done;
        t.result = *t.cursor.outcome;
    }
    st.threads.emplace(t.id, std::move(t));
    return st;
}

// A scheduler choice: one applicable rule instance.
struct Choice {
    ThreadId thread;
    std::string rule;

    friend bool operator==(const Choice& a, const Choice& b) {
        return a.thread == b.thread && a.rule == b.rule;
    }
    friend bool operator<(const Choice& a, const Choice& b) {
        if (a.thread != b.thread) return a.thread < b.thread;
        return a.rule < b.rule;
    }
};

namespace rules {
inline const std::string term_io = "TermIO";
inline const std::string term_tx = "TermT";
inline const std::string fork_io = "ForkIO";
inline const std::string fork_tx = "ForkT";
inline const std::string isolated = "Isolated";
inline const std::string make_new = "New";
inline const std::string in_char = "InChar";
inline const std::string out_char = "OutChar";
inline const std::string commit = "Commit";
inline const std::string abort = "Abort";
inline const std::string retry_tx = "RetryTx";
} // namespace rules

namespace detail {

inline void append_event(MachineState& st, Event e) {
    e.seq = st.history.empty() ? 0 : st.history.back().seq + 1;
    if (auto it = st.live.find(st.resolve(e.tx)); it != st.live.end()) ++it->second.event_count;
    st.history.push_back(std::move(e));
}

inline Event mem_event(Event::Op op, TxId k, ThreadId t, VarId r, Value v) {
    Event e;
    e.op = op;
    e.tx = k;
    e.thread = t;
    e.var = r;
    e.value = std::move(v);
    return e;
}

struct IsoResult {
    Outcome outcome = Outcome::retried();
    std::set<VarId> reads; // all locations read, failed orElse branches included
};

struct IsoSnapshot {
    MemoryState mem;
    std::map<TxId, TxInfo> live;
    std::size_t history_len;
    std::uint64_t merges;
};

inline IsoSnapshot snapshot_iso(const MachineState& st) {
    return {st.mem, st.live, st.history.size(), st.merges};
}

inline void restore_iso(MachineState& st, const IsoSnapshot& snap) {
    st.mem = snap.mem;
    st.live = snap.live;
    st.history.resize(snap.history_len);
    st.merges = snap.merges;
}

inline void merge_bookkeeping(MachineState& st, ThreadId t, TxId from, TxId into) {
    Event e;
    e.op = Event::Op::Merge;
    e.tx = from;
    e.thread = t;
    e.into = into;
    // Count the dissolving transaction's activity into the survivor before
    // recording, so the merge itself is credited to the group.
    auto fit = st.live.find(from);
    auto iit = st.live.find(into);
    if (fit != st.live.end() && iit != st.live.end()) {
        iit->second.read_set.insert(fit->second.read_set.begin(), fit->second.read_set.end());
        iit->second.event_count += fit->second.event_count;
        st.live.erase(fit);
    }
    append_event(st, std::move(e));
    ++st.merges;
}

// The isolated sub-machine: run an ITM body
// to its outcome with no interleaving. Claims, merges and events apply to
// `st` directly; orElse branches that retry are rolled back here.
inline IsoResult run_isolated_body(MachineState& st, ThreadId t, const Action& body) {
    IsoResult res;
    Cursor c;
    c.set(body);
    while (true) {
        if (c.at_outcome()) {
            if (c.frames.empty()) {
                res.outcome = *c.outcome;
                return res;
            }
            c.apply_frame();
            continue;
        }
        const ActionNode& n = c.head.node();
        const TxId k = st.resolve(st.threads.at(t).tx);
        if (const auto* pure = std::get_if<ActionNode::Pure>(&n.data)) {
            try {
                c.set_outcome(Outcome::returned(pure->fn()));
            } catch (const std::exception&) {
                c.set_outcome(Outcome::threw(Value::exception("eval-error", Value::unit())));
            }
        } else if (const auto* nv = std::get_if<ActionNode::NewVar>(&n.data)) {
            const VarId r = alloc_var(st.mem, st.ids, nv->init, k);
            append_event(st, mem_event(Event::Op::New, k, t, r, nv->init));
            c.set_outcome(Outcome::returned(Value::var(r)));
        } else if (const auto* rd = std::get_if<ActionNode::ReadVar>(&n.data)) {
            const ClaimResult cr = claim_read(st.mem, rd->var, k);
            if (cr.merged_from) merge_bookkeeping(st, t, k, *cr.merged_from);
            const TxId now = st.resolve(k);
            append_event(st, mem_event(Event::Op::Read, now, t, rd->var, cr.value));
            st.live[now].read_set.insert(rd->var);
            res.reads.insert(rd->var);
            c.set_outcome(Outcome::returned(cr.value));
        } else if (const auto* wr = std::get_if<ActionNode::WriteVar>(&n.data)) {
            const auto merged = claim_write(st.mem, wr->var, wr->v, k);
            if (merged) merge_bookkeeping(st, t, k, *merged);
            const TxId now = st.resolve(k);
            append_event(st, mem_event(Event::Op::Write, now, t, wr->var, wr->v));
            c.set_outcome(Outcome::returned(Value::unit()));
        } else if (const auto* oe = std::get_if<ActionNode::OrElse>(&n.data)) {
            const IsoSnapshot snap = snapshot_iso(st);
            IsoResult first = run_isolated_body(st, t, oe->first);
            res.reads.insert(first.reads.begin(), first.reads.end());
            if (!first.outcome.is_retried()) {
                c.set_outcome(first.outcome); // Or1: keep Σ' for return and throw
            } else {
                restore_iso(st, snap); // Or2: discard any effect of the first
                IsoResult second = run_isolated_body(st, t, oe->second);
                res.reads.insert(second.reads.begin(), second.reads.end());
                c.set_outcome(second.outcome);
            }
        } else {
            throw EngineError("action form not valid inside an isolated block");
        }
    }
}

// Speculative execution of an isolated block on a copy of the machine: tells
// whether the attempt would block and which locations it read.
inline IsoResult dry_run_isolated(const MachineState& st, ThreadId t, const Action& body) {
    MachineState clone = st;
    return run_isolated_body(clone, t, body);
}

inline bool gate_open(const MachineState& st, const GateSnapshot& gate) {
    for (const auto& [r, snap] : gate)
        if (st.visible(r) != snap) return true;
    return false;
}

struct TxView {
    std::vector<ThreadId> participants;
    std::vector<ThreadId> ready;   // at Returned with no frames
    std::vector<ThreadId> blocked; // at an isolated head whose attempt retries
};

} // namespace detail

// The set of rule instances applicable in `st`. Empty set on a finished
// program or when every remaining thread is stuck (quiescence).
inline std::vector<Choice> enabled(const MachineState& st) {
    std::vector<Choice> out;
    std::map<TxId, detail::TxView> txs;

    for (const auto& [tid, th] : st.threads) {
        switch (th.mode) {
        case Thread::Mode::Done:
            break;
        case Thread::Mode::Plain: {
            if (th.cursor.at_outcome()) {
                out.push_back({tid, rules::term_io});
                break;
            }
            const ActionNode& n = th.cursor.head.node();
            if (std::holds_alternative<ActionNode::Atomic>(n.data)) {
                if (!th.wake_gate || detail::gate_open(st, *th.wake_gate))
                    out.push_back({tid, rules::make_new});
            } else if (std::holds_alternative<ActionNode::GetChar>(n.data)) {
                if (st.input_pos < st.input.size()) out.push_back({tid, rules::in_char});
            } else if (std::holds_alternative<ActionNode::PutChar>(n.data)) {
                out.push_back({tid, rules::out_char});
            } else if (std::holds_alternative<ActionNode::ForkIo>(n.data)) {
                out.push_back({tid, rules::fork_io});
            } else if (std::holds_alternative<ActionNode::Pure>(n.data)) {
                out.push_back({tid, rules::term_io});
            } else {
                throw EngineError("IO thread stuck on a non-IO action form");
            }
            break;
        }
        case Thread::Mode::InTx: {
            const TxId k = st.resolve(th.tx);
            auto& view = txs[k];
            view.participants.push_back(tid);
            if (th.cursor.at_outcome()) {
                if (!th.cursor.frames.empty()) {
                    out.push_back({tid, rules::term_tx});
                } else if (th.cursor.outcome->is_returned()) {
                    view.ready.push_back(tid);
                } else if (th.cursor.outcome->is_threw()) {
                    out.push_back({tid, rules::abort});
                } else {
                    throw EngineError("retry surfaced at transaction level");
                }
                break;
            }
            const ActionNode& n = th.cursor.head.node();
            if (const auto* iso = std::get_if<ActionNode::Isolated>(&n.data)) {
                if (detail::dry_run_isolated(st, tid, iso->body).outcome.is_retried())
                    view.blocked.push_back(tid);
                else
                    out.push_back({tid, rules::isolated});
            } else if (std::holds_alternative<ActionNode::ForkTx>(n.data)) {
                out.push_back({tid, rules::fork_tx});
            } else if (std::holds_alternative<ActionNode::Pure>(n.data)) {
                out.push_back({tid, rules::term_tx});
            } else {
                throw EngineError("transactional thread stuck on a non-OTM action form");
            }
            break;
        }
        }
    }

    for (const auto& [k, view] : txs) {
        if (view.participants.empty()) continue;
        const ThreadId owner = *std::min_element(view.participants.begin(), view.participants.end());
        if (view.ready.size() == view.participants.size()) {
            // Commit needs unanimity: every participant at `return`.
            out.push_back({owner, rules::commit});
        } else if (!view.blocked.empty() &&
                   view.ready.size() + view.blocked.size() == view.participants.size()) {
            // Everyone is blocked or waiting: the transaction is stuck and
            // restarts from the beginning (retry policy).
            out.push_back({owner, rules::retry_tx});
        }
    }

    std::sort(out.begin(), out.end());
    return out;
}

namespace detail {

inline void finalize_plain(Thread& th) {
    if (th.mode == Thread::Mode::Plain && th.cursor.at_outcome() && th.cursor.frames.empty()) {
        th.mode = Thread::Mode::Done;
        th.result = *th.cursor.outcome;
    }
}

inline std::vector<ThreadId> participants_of(const MachineState& st, TxId k) {
    std::vector<ThreadId> out;
    for (const auto& [tid, th] : st.threads)
        if (th.mode == Thread::Mode::InTx && st.resolve(th.tx) == k) out.push_back(tid);
    return out;
}

inline TransitionLabel step_commit(MachineState& st, const Choice& choice) {
    Thread& chooser = st.threads.at(choice.thread);
    if (chooser.mode != Thread::Mode::InTx)
        throw EngineError("commit step on a thread outside a transaction");
    const TxId k = st.resolve(chooser.tx);
    const auto parts = participants_of(st, k);
    for (const ThreadId p : parts) {
        const Thread& th = st.threads.at(p);
        if (!th.cursor.at_outcome() || !th.cursor.frames.empty() ||
            !th.cursor.outcome->is_returned())
            throw EngineError("commit with a participant not at return");
    }
    commit_apply(st.mem, k);
    Event e;
    e.op = Event::Op::Commit;
    e.tx = k;
    e.thread = choice.thread;
    append_event(st, std::move(e));
    for (const ThreadId p : parts) {
        Thread& th = st.threads.at(p);
        // return M >>= N: the participant resumes its saved continuation with
        // its own return value.
        th.mode = Thread::Mode::Plain;
        th.cursor.frames = std::move(th.saved_io);
        th.saved_io.clear();
        th.atomic_action = Action();
        th.wake_gate.reset();
        st.mem.forest.remove_thread(p);
        ++st.commit_counts[p];
        finalize_plain(th);
    }
    st.live.erase(k);
    ++st.commits;
    return TransitionLabel::commit(k);
}

inline TransitionLabel step_abort(MachineState& st, const Choice& choice) {
    Thread& raiser = st.threads.at(choice.thread);
    if (raiser.mode != Thread::Mode::InTx)
        throw EngineError("abort step on a thread outside a transaction");
    if (!raiser.cursor.at_outcome() || !raiser.cursor.frames.empty() ||
        !raiser.cursor.outcome->is_threw())
        throw EngineError("abort chosen for a thread that did not throw");
    const TxId k = st.resolve(raiser.tx);
    const Value exc = raiser.cursor.outcome->v;
    const auto parts = participants_of(st, k);

    std::map<ThreadId, ThreadId> root_of;
    for (const ThreadId p : parts) root_of[p] = st.mem.forest.root(p);
    const ThreadId raiser_root = root_of.at(choice.thread);

    Event e;
    e.op = Event::Op::Abort;
    e.tx = k;
    e.thread = choice.thread;
    append_event(st, std::move(e));

    abort_apply(st.mem, k, choice.thread);

    std::set<ThreadId> foreign_roots;
    for (const ThreadId p : parts) {
        const ThreadId r = root_of.at(p);
        Thread& th = st.threads.at(p);
        if (r == raiser_root) {
            if (p == raiser_root) {
                // The raiser's tree root rethrows to its continuation.
                th.mode = Thread::Mode::Plain;
                th.cursor.set_outcome(Outcome::threw(exc));
                th.cursor.frames = std::move(th.saved_io);
                th.saved_io.clear();
                th.atomic_action = Action();
                finalize_plain(th);
            } else {
                st.threads.erase(p); // killed with the tree
            }
        } else if (r == p) {
            // Foreign root, joined via a merge: restart its atomic block from
            // scratch; a fresh name is chosen when it re-enters.
            foreign_roots.insert(r);
            th.mode = Thread::Mode::Plain;
            th.cursor.frames = std::move(th.saved_io);
            th.saved_io.clear();
            th.cursor.set(th.atomic_action);
            ++st.restarts;
        } else {
            foreign_roots.insert(r);
            st.threads.erase(p);
        }
    }
    for (const ThreadId r : foreign_roots) st.mem.forest.remove(r);
    st.live.erase(k);
    ++st.aborts;
    return TransitionLabel::abort(k, choice.thread, exc);
}

inline TransitionLabel step_retry_tx(MachineState& st, const Choice& choice) {
    if (st.threads.at(choice.thread).mode != Thread::Mode::InTx)
        throw EngineError("retry restart on a thread outside a transaction");
    const TxId k = st.resolve(st.threads.at(choice.thread).tx);
    const auto parts = participants_of(st, k);

    // Gate locations: the transaction's read set plus whatever the blocked
    // attempts would read.
    std::set<VarId> gate_vars;
    if (auto it = st.live.find(k); it != st.live.end())
        gate_vars = it->second.read_set;
    bool any_blocked = false;
    for (const ThreadId p : parts) {
        const Thread& th = st.threads.at(p);
        if (th.cursor.at_outcome()) {
            if (!th.cursor.frames.empty() || !th.cursor.outcome->is_returned())
                throw EngineError("retry restart with an unsettled participant");
            continue;
        }
        const auto* iso = std::get_if<ActionNode::Isolated>(&th.cursor.head.node().data);
        if (!iso) throw EngineError("retry restart with a runnable participant");
        const auto attempt = dry_run_isolated(st, p, iso->body);
        if (!attempt.outcome.is_retried())
            throw EngineError("retry restart but an attempt can proceed");
        any_blocked = true;
        gate_vars.insert(attempt.reads.begin(), attempt.reads.end());
    }
    if (!any_blocked) throw EngineError("retry restart on a transaction ready to commit");

    const bool observable = [&] {
        auto it = st.live.find(k);
        return it != st.live.end() && it->second.event_count > 0;
    }();
    if (observable) {
        Event e;
        e.op = Event::Op::Abort;
        e.tx = k;
        e.thread = choice.thread;
        append_event(st, std::move(e));
    }

    discard_claims(st.mem, k);

    GateSnapshot gate;
    for (const VarId r : gate_vars) gate[r] = st.visible(r);

    std::map<ThreadId, ThreadId> root_of;
    for (const ThreadId p : parts) root_of[p] = st.mem.forest.root(p);
    std::set<ThreadId> roots;
    for (const ThreadId p : parts) roots.insert(root_of.at(p));

    for (const ThreadId p : parts) {
        Thread& th = st.threads.at(p);
        if (root_of.at(p) != p) {
            st.threads.erase(p); // replay re-forks them
            continue;
        }
        th.mode = Thread::Mode::Plain;
        th.cursor.frames = std::move(th.saved_io);
        th.saved_io.clear();
        th.cursor.set(th.atomic_action);
        th.wake_gate = gate;
        ++st.restarts;
    }
    for (const ThreadId r : roots) st.mem.forest.remove(r);
    st.live.erase(k);
    return TransitionLabel::tau();
}

} // namespace detail

namespace detail {

inline TransitionLabel step_impl(MachineState& st, const Choice& choice) {
    auto tit = st.threads.find(choice.thread);
    if (tit == st.threads.end()) throw EngineError("step on unknown thread");
    Thread& th = tit->second;

    if (choice.rule == rules::term_io || choice.rule == rules::term_tx) {
        if (th.cursor.at_outcome()) {
            th.cursor.apply_frame();
        } else if (const auto* pure = std::get_if<ActionNode::Pure>(&th.cursor.head.node().data)) {
            try {
                th.cursor.set_outcome(Outcome::returned(pure->fn()));
            } catch (const std::exception&) {
                th.cursor.set_outcome(Outcome::threw(Value::exception("eval-error", Value::unit())));
            }
        } else {
            throw EngineError("term step on a thread without a redex");
        }
        detail::finalize_plain(th);
        return TransitionLabel::tau();
    }

    if (choice.rule == rules::make_new) {
        const auto* at = std::get_if<ActionNode::Atomic>(&th.cursor.head.node().data);
        if (!at) throw EngineError("New step without an atomic head");
        const Action whole = th.cursor.head;
        const TxId k = st.ids.fresh_tx();
        st.live[k] = {};
        th.mode = Thread::Mode::InTx;
        th.tx = k;
        th.saved_io = std::move(th.cursor.frames);
        th.cursor.frames.clear();
        th.atomic_action = whole;
        th.wake_gate.reset();
        th.cursor.set(at->body);
        return TransitionLabel::make_new(k);
    }

    if (choice.rule == rules::in_char) {
        if (st.input_pos >= st.input.size()) throw EngineError("InChar on empty input");
        const char c = st.input[st.input_pos++];
        th.cursor.set_outcome(Outcome::returned(Value::character(c)));
        detail::finalize_plain(th);
        return TransitionLabel::in(c);
    }

    if (choice.rule == rules::out_char) {
        const auto* pc = std::get_if<ActionNode::PutChar>(&th.cursor.head.node().data);
        if (!pc) throw EngineError("OutChar step without a putChar head");
        st.output.push_back(pc->c);
        th.cursor.set_outcome(Outcome::returned(Value::unit()));
        detail::finalize_plain(th);
        return TransitionLabel::out(pc->c);
    }

    if (choice.rule == rules::fork_io) {
        const auto* fk = std::get_if<ActionNode::ForkIo>(&th.cursor.head.node().data);
        if (!fk) throw EngineError("ForkIO step without a fork head");
        Thread child;
        child.id = st.ids.fresh_thread();
        child.cursor.set(fk->body);
        detail::finalize_plain(child);
        const ThreadId cid = child.id;
        st.threads.emplace(cid, std::move(child));
        st.threads.at(choice.thread).cursor.set_outcome(Outcome::returned(Value::thread(cid)));
        detail::finalize_plain(st.threads.at(choice.thread));
        return TransitionLabel::tau();
    }

    if (choice.rule == rules::fork_tx) {
        const auto* fk = std::get_if<ActionNode::ForkTx>(&th.cursor.head.node().data);
        if (!fk) throw EngineError("ForkT step without a fork head");
        Thread child;
        child.id = st.ids.fresh_thread();
        child.mode = Thread::Mode::InTx;
        child.tx = st.resolve(th.tx);
        child.cursor.set(fk->body); // continuation is `return`
        const ThreadId cid = child.id;
        st.mem.forest.add_child(choice.thread, cid);
        st.threads.emplace(cid, std::move(child));
        st.threads.at(choice.thread).cursor.set_outcome(Outcome::returned(Value::thread(cid)));
        return TransitionLabel::tau();
    }

    if (choice.rule == rules::isolated) {
        const auto* iso = std::get_if<ActionNode::Isolated>(&th.cursor.head.node().data);
        if (!iso) throw EngineError("Isolated step without an isolated head");
        const detail::IsoSnapshot snap = detail::snapshot_iso(st);
        const auto res = detail::run_isolated_body(st, choice.thread, iso->body);
        if (res.outcome.is_retried()) {
            // Not a derivable transition: a retried block is not a step.
            detail::restore_iso(st, snap);
            throw EngineError("Isolated step chosen for a blocked attempt");
        }
        Thread& self = st.threads.at(choice.thread);
        st.live[st.resolve(self.tx)].read_set.insert(res.reads.begin(), res.reads.end());
        self.cursor.set_outcome(res.outcome);
        return TransitionLabel::tau();
    }

    if (choice.rule == rules::commit) return step_commit(st, choice);
    if (choice.rule == rules::abort) return step_abort(st, choice);
    if (choice.rule == rules::retry_tx) return step_retry_tx(st, choice);

    throw EngineError("unknown rule: " + choice.rule);
}

} // namespace detail

// Apply one rule instance. `choice` must come from enabled(st).
inline TransitionLabel step(MachineState& st, const Choice& choice) {
    TransitionLabel label = detail::step_impl(st, choice);
    st.labels.push_back(label);
    return label;
}

// Canonical encoding of everything that determines future behaviour; used for
// exploration memoisation. Action positions are identified by node pointers,
// which is sound because continuation results are cached per input value.
// Transaction names are renamed to dense indices in a fixed traversal order so
// that a restarted transaction (fresh name, same position) reproduces the key
// of its previous incarnation and retry loops close into cycles.
inline std::string state_key(const MachineState& st) {
    std::map<TxId, std::size_t> tx_canon;
    const auto canon = [&tx_canon](TxId k) {
        return tx_canon.emplace(k, tx_canon.size()).first->second;
    };
    for (const auto& [tid, th] : st.threads)
        if (th.mode == Thread::Mode::InTx) canon(st.resolve(th.tx));
    for (const auto& [r, cl] : st.mem.working) canon(st.resolve(cl.owner));

    std::ostringstream os;
    const auto put_ptr = [&os](const NodePtr& p) { os << p.get() << ";"; };
    const auto put_cursor = [&](const Cursor& c) {
        if (c.at_outcome())
            os << "o" << static_cast<int>(c.outcome->tag) << c.outcome->v.show() << ";";
        else
            put_ptr(c.head.ptr());
        os << "[";
        for (const Frame& f : c.frames) {
            os << (f.kind == Frame::Kind::Bind ? "b" : "c");
            put_ptr(f.node);
        }
        os << "]";
    };
    os << "H{";
    for (const auto& [r, v] : st.mem.heap) os << r.id << ":" << v.show() << ",";
    os << "}W{";
    for (const auto& [r, cl] : st.mem.working)
        os << r.id << ":" << cl.value.show() << "@" << canon(st.resolve(cl.owner)) << ",";
    os << "}F{";
    for (const auto& [c, p] : st.mem.forest.raw()) os << c.id << "<" << p.id << ",";
    os << "}T{";
    for (const auto& [tid, th] : st.threads) {
        os << tid.id << ":" << static_cast<int>(th.mode) << ":";
        switch (th.mode) {
        case Thread::Mode::Done:
            os << static_cast<int>(th.result.tag) << th.result.v.show();
            break;
        case Thread::Mode::Plain:
            put_cursor(th.cursor);
            if (th.wake_gate) {
                os << "g{";
                for (const auto& [r, v] : *th.wake_gate)
                    os << r.id << ":" << (v ? v->show() : "_") << ",";
                os << "}";
            }
            break;
        case Thread::Mode::InTx:
            os << canon(st.resolve(th.tx)) << ":";
            put_cursor(th.cursor);
            os << "io[";
            for (const Frame& f : th.saved_io) {
                os << (f.kind == Frame::Kind::Bind ? "b" : "c");
                put_ptr(f.node);
            }
            os << "]";
            put_ptr(th.atomic_action.ptr());
            break;
        }
        os << "|";
    }
    os << "}L{";
    std::map<std::size_t, const TxInfo*> live_by_canon;
    for (const auto& [k, info] : st.live) live_by_canon[canon(k)] = &info;
    for (const auto& [idx, info] : live_by_canon) {
        os << idx << ":" << info->event_count << "(";
        for (const VarId r : info->read_set) os << r.id << ",";
        os << ")";
    }
    os << "}I" << st.input_pos << "O" << st.output;
    return os.str();
}

} // namespace otm
