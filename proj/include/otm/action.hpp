#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

#include "otm/value.hpp"

namespace otm {

// Kind of a transactional action. Io actions run outside transactions, Otm
// actions are atomic but not isolated, Itm actions additionally run isolated
// and are the only layer allowed to touch OTVars.
enum class Kind { Io, Otm, Itm };

inline const char* kind_name(Kind k) {
    switch (k) {
    case Kind::Io: return "IO";
    case Kind::Otm: return "OTM";
    case Kind::Itm: return "ITM";
    }
    return "?";
}

struct KindError : std::logic_error {
    using std::logic_error::logic_error;
};

class Action;
using Cont = std::function<Action(const Value&)>;
using HostFn = std::function<Value()>;

struct ActionNode;
using NodePtr = std::shared_ptr<ActionNode>;

// A composable description of a transactional computation. Actions are
// immutable trees; continuations are opaque host functions invoked by the
// engine. The empty Action (default constructed) is invalid and only exists
// so containers are usable.
class Action {
public:
    Action() = default;
    explicit Action(NodePtr node) : node_(std::move(node)) {}

    bool valid() const { return node_ != nullptr; }
    Kind kind() const;
    const ActionNode& node() const { return *node_; }
    const NodePtr& ptr() const { return node_; }

private:
    NodePtr node_;
};

struct ActionNode {
    struct Ret { Value v; };
    struct Bind {
        Action first;
        Cont cont;
        // Continuations must be pure builders; caching per input value keeps
        // node identity stable so exploration can recognise equal states.
        mutable std::map<Value, Action> cache;
    };
    struct Throw { Value exc; };
    struct Catch {
        Action body;
        Cont handler;
        mutable std::map<Value, Action> cache;
    };
    struct Retry {};
    struct OrElse { Action first, second; };
    struct NewVar { Value init; };
    struct ReadVar { VarId var; };
    struct WriteVar { VarId var; Value v; };
    struct Isolated { Action body; };
    struct ForkTx { Action body; };
    struct Atomic { Action body; };
    struct ForkIo { Action body; };
    struct GetChar {};
    struct PutChar { char c; };
    struct Pure { HostFn fn; };

    using Data = std::variant<Ret, Bind, Throw, Catch, Retry, OrElse, NewVar, ReadVar, WriteVar,
                              Isolated, ForkTx, Atomic, ForkIo, GetChar, PutChar, Pure>;

    Kind kind;
    Data data;
};

inline Kind Action::kind() const { return node_->kind; }

// Result of running an action to the end of its bind chain. Exactly one of
// the three shapes; Retried carries no payload.
struct Outcome {
    enum class Tag { Returned, Threw, Retried };

    Tag tag = Tag::Retried;
    Value v; // payload of Returned / Threw

    static Outcome returned(Value val) { return {Tag::Returned, std::move(val)}; }
    static Outcome threw(Value exc) { return {Tag::Threw, std::move(exc)}; }
    static Outcome retried() { return {Tag::Retried, Value::unit()}; }

    bool is_returned() const { return tag == Tag::Returned; }
    bool is_threw() const { return tag == Tag::Threw; }
    bool is_retried() const { return tag == Tag::Retried; }

    friend bool operator==(const Outcome& a, const Outcome& b) {
        return a.tag == b.tag && (a.tag == Tag::Retried || a.v == b.v);
    }
};

namespace detail {

inline Action make(Kind k, ActionNode::Data data) {
    auto node = std::make_shared<ActionNode>();
    node->kind = k;
    node->data = std::move(data);
    return Action(std::move(node));
}

inline void require_kind(const Action& a, Kind k, const char* op) {
    if (!a.valid()) throw KindError(std::string(op) + ": empty action");
    if (a.kind() != k)
        throw KindError(std::string(op) + ": expected " + kind_name(k) + " action, got " +
                        kind_name(a.kind()));
}

inline Action seq(Kind k, Action first, Cont cont, const char* op) {
    require_kind(first, k, op);
    return make(k, ActionNode::Bind{std::move(first), std::move(cont), {}});
}

inline Action catch_with(Kind k, Action body, Cont handler, const char* op) {
    require_kind(body, k, op);
    return make(k, ActionNode::Catch{std::move(body), std::move(handler), {}});
}

// Invoke a continuation, memoising the result per input value and checking
// that it produced an action of the kind the surrounding node promises.
inline const Action& apply_cont(Kind k, const Cont& f, std::map<Value, Action>& cache,
                                const Value& v) {
    auto it = cache.find(v);
    if (it == cache.end()) {
        Action produced = f(v);
        require_kind(produced, k, "continuation");
        it = cache.emplace(v, std::move(produced)).first;
    }
    return it->second;
}

} // namespace detail

// Isolated single-threaded transactional actions (the only ones allowed to
// touch OTVars; ITM in the surface language).
namespace itm {

inline Action ret(Value v) { return detail::make(Kind::Itm, ActionNode::Ret{std::move(v)}); }
inline Action seq(Action first, Cont then) {
    return detail::seq(Kind::Itm, std::move(first), std::move(then), "itm::seq");
}
inline Action then(Action first, Action second) {
    detail::require_kind(second, Kind::Itm, "itm::then");
    return seq(std::move(first), [second](const Value&) { return second; });
}
inline Action throw_(Value exc) { return detail::make(Kind::Itm, ActionNode::Throw{std::move(exc)}); }
inline Action catch_(Action body, Cont handler) {
    return detail::catch_with(Kind::Itm, std::move(body), std::move(handler), "itm::catch_");
}
inline Action retry() { return detail::make(Kind::Itm, ActionNode::Retry{}); }
inline Action or_else(Action first, Action second) {
    detail::require_kind(first, Kind::Itm, "itm::or_else");
    detail::require_kind(second, Kind::Itm, "itm::or_else");
    return detail::make(Kind::Itm, ActionNode::OrElse{std::move(first), std::move(second)});
}
inline Action new_var(Value init) {
    return detail::make(Kind::Itm, ActionNode::NewVar{std::move(init)});
}
inline Action read(VarId r) { return detail::make(Kind::Itm, ActionNode::ReadVar{r}); }
inline Action read(const Value& handle) { return read(handle.as_var()); }
inline Action write(VarId r, Value v) {
    return detail::make(Kind::Itm, ActionNode::WriteVar{r, std::move(v)});
}
inline Action write(const Value& handle, Value v) { return write(handle.as_var(), std::move(v)); }
inline Action pure(HostFn fn) { return detail::make(Kind::Itm, ActionNode::Pure{std::move(fn)}); }

// check b = if b then return () else retry
inline Action check(bool b) { return b ? ret(Value::unit()) : retry(); }

// modifyOTVar var f = readOTVar var >>= \x -> writeOTVar var (f x)
inline Action modify(VarId r, std::function<Value(const Value&)> f) {
    return seq(read(r), [r, f = std::move(f)](const Value& x) { return write(r, f(x)); });
}

// assertOTVar var p = readOTVar var >>= \x -> check (p x)
inline Action assert_var(VarId r, std::function<bool(const Value&)> p) {
    return seq(read(r), [p = std::move(p)](const Value& x) { return check(p(x)); });
}

} // namespace itm

// Open (atomic, non-isolated, possibly multi-threaded) transactional actions.
namespace tx {

inline Action ret(Value v) { return detail::make(Kind::Otm, ActionNode::Ret{std::move(v)}); }
inline Action seq(Action first, Cont then) {
    return detail::seq(Kind::Otm, std::move(first), std::move(then), "otm::seq");
}
inline Action then(Action first, Action second) {
    detail::require_kind(second, Kind::Otm, "otm::then");
    return seq(std::move(first), [second](const Value&) { return second; });
}
inline Action throw_(Value exc) { return detail::make(Kind::Otm, ActionNode::Throw{std::move(exc)}); }
inline Action catch_(Action body, Cont handler) {
    return detail::catch_with(Kind::Otm, std::move(body), std::move(handler), "otm::catch_");
}
inline Action isolated(Action body) {
    detail::require_kind(body, Kind::Itm, "otm::isolated");
    return detail::make(Kind::Otm, ActionNode::Isolated{std::move(body)});
}
inline Action fork(Action body) {
    detail::require_kind(body, Kind::Otm, "otm::fork");
    return detail::make(Kind::Otm, ActionNode::ForkTx{std::move(body)});
}
inline Action pure(HostFn fn) { return detail::make(Kind::Otm, ActionNode::Pure{std::move(fn)}); }

} // namespace tx

// IO-level actions: what plain threads run.
namespace io {

inline Action ret(Value v) { return detail::make(Kind::Io, ActionNode::Ret{std::move(v)}); }
inline Action seq(Action first, Cont then) {
    return detail::seq(Kind::Io, std::move(first), std::move(then), "io::seq");
}
inline Action then(Action first, Action second) {
    detail::require_kind(second, Kind::Io, "io::then");
    return seq(std::move(first), [second](const Value&) { return second; });
}
inline Action throw_(Value exc) { return detail::make(Kind::Io, ActionNode::Throw{std::move(exc)}); }
inline Action catch_(Action body, Cont handler) {
    return detail::catch_with(Kind::Io, std::move(body), std::move(handler), "io::catch_");
}
inline Action atomic(Action body) {
    // `atomic` is an IO-level operation only; nested atomic blocks are
    // unconstructible because no otm::/itm:: builder produces one.
    detail::require_kind(body, Kind::Otm, "io::atomic");
    return detail::make(Kind::Io, ActionNode::Atomic{std::move(body)});
}
inline Action fork(Action body) {
    detail::require_kind(body, Kind::Io, "io::fork");
    return detail::make(Kind::Io, ActionNode::ForkIo{std::move(body)});
}
inline Action get_char() { return detail::make(Kind::Io, ActionNode::GetChar{}); }
inline Action put_char(char c) { return detail::make(Kind::Io, ActionNode::PutChar{c}); }
inline Action pure(HostFn fn) { return detail::make(Kind::Io, ActionNode::Pure{std::move(fn)}); }

// atomically = atomic . isolated: the classic closed transaction.
inline Action atomically(Action itm_body) { return atomic(tx::isolated(std::move(itm_body))); }

} // namespace io

} // namespace otm
