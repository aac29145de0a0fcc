#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "otm/ids.hpp"
#include "otm/value.hpp"

namespace otm {

struct MemoryError : std::logic_error {
    using std::logic_error::logic_error;
};

// Committed values, Θ : Loc ⇀ Term. Never mentions transactions.
using Heap = std::map<VarId, Value>;

struct Claim {
    Value value;
    TxId owner;

    friend bool operator==(const Claim& a, const Claim& b) {
        return a.owner == b.owner && a.value == b.value;
    }
};

// Working memory Δ : Loc ⇀ Term × TrName. At most one entry per location; the
// owner is always the surviving (canonical) transaction name.
using WorkingMemory = std::map<VarId, Claim>;

// Union-find style alias table recording merges Δ[k↦j]: threads still
// labelled k read through it to find the surviving transaction. No path
// compression; chains stay short and the structure stays deterministic.
class TxAliases {
public:
    TxId resolve(TxId k) const {
        auto it = parent_.find(k);
        while (it != parent_.end()) {
            k = it->second;
            it = parent_.find(k);
        }
        return k;
    }

    void record_merge(TxId from, TxId into) {
        if (from == into) throw MemoryError("transaction cannot merge with itself");
        parent_[from] = into;
    }

    bool dissolved(TxId k) const { return parent_.count(k) != 0; }

    const std::map<TxId, TxId>& raw() const { return parent_; }

private:
    std::map<TxId, TxId> parent_;
};

// Ψ: parent links between threads forked inside transactions. A thread with
// no entry is its own root.
class ForkForest {
public:
    void add_child(ThreadId parent, ThreadId child) {
        if (parent_.count(child))
            throw MemoryError("thread " + std::to_string(child.id) + " already in forest");
        if (parent == child) throw MemoryError("thread cannot be its own forest parent");
        parent_[child] = parent;
    }

    ThreadId root(ThreadId t) const {
        auto it = parent_.find(t);
        while (it != parent_.end()) {
            t = it->second;
            it = parent_.find(t);
        }
        return t;
    }

    bool contains(ThreadId t) const {
        if (parent_.count(t)) return true;
        for (const auto& [child, parent] : parent_)
            if (parent == t) return true;
        return false;
    }

    // Every thread of the tree rooted at `r`, root included.
    std::set<ThreadId> tree(ThreadId r) const {
        std::set<ThreadId> members{r};
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& [child, parent] : parent_) {
                if (members.count(parent) && !members.count(child)) {
                    members.insert(child);
                    grew = true;
                }
            }
        }
        return members;
    }

    // remove(r, Ψ): drop the whole tree rooted at r.
    void remove(ThreadId r) {
        const auto members = tree(r);
        for (auto it = parent_.begin(); it != parent_.end();) {
            if (members.count(it->first) || members.count(it->second))
                it = parent_.erase(it);
            else
                ++it;
        }
    }

    void remove_thread(ThreadId t) {
        // Detaches a single thread; used when a committed participant leaves
        // its transaction and its fork history is no longer meaningful.
        parent_.erase(t);
        for (auto it = parent_.begin(); it != parent_.end();) {
            if (it->second == t)
                it = parent_.erase(it);
            else
                ++it;
        }
    }

    const std::map<ThreadId, ThreadId>& raw() const { return parent_; }

    friend bool operator==(const ForkForest& a, const ForkForest& b) {
        return a.parent_ == b.parent_;
    }

private:
    std::map<ThreadId, ThreadId> parent_;
};

// Σ = ⟨Θ, Δ, Ψ⟩ plus the alias table that tracks merges.
//
// The deterministic simulator mutates this from a single scheduler thread. A
// concurrent runtime must make claim/merge/commit/abort linearizable and,
// when merging, take the two transaction descriptors in global id order.
struct MemoryState {
    Heap heap;
    WorkingMemory working;
    ForkForest forest;
    TxAliases aliases;

    bool known(VarId r) const { return heap.count(r) || working.count(r); }

    nlohmann::json to_json() const {
        nlohmann::json h = nlohmann::json::object();
        for (const auto& [r, v] : heap) h[std::to_string(r.id)] = v.to_json();
        nlohmann::json w = nlohmann::json::object();
        for (const auto& [r, c] : working)
            w[std::to_string(r.id)] = {{"value", c.value.to_json()}, {"owner", c.owner.id}};
        nlohmann::json f = nlohmann::json::object();
        for (const auto& [child, parent] : forest.raw())
            f[std::to_string(child.id)] = parent.id;
        return {{"heap", std::move(h)}, {"working", std::move(w)}, {"forest", std::move(f)}};
    }
};

struct ClaimResult {
    Value value;
    std::optional<TxId> merged_from; // surviving owner j when a merge happened
};

namespace detail {

// Δ[k↦j]: every entry owned by k is re-owned by j.
inline void reown(WorkingMemory& working, TxId k, TxId j) {
    for (auto& [r, claim] : working)
        if (claim.owner == k) claim.owner = j;
}

} // namespace detail

// NewVar: fresh r ∉ dom(Θ) ∪ dom(Δ); the claim starts in working memory and
// reaches the heap only on commit.
inline VarId alloc_var(MemoryState& mem, IdGen& ids, Value initial, TxId owner) {
    const TxId k = mem.aliases.resolve(owner);
    VarId r = ids.fresh_var();
    while (mem.known(r)) r = ids.fresh_var();
    mem.working.emplace(r, Claim{std::move(initial), k});
    return r;
}

// Read1/Read2. Unclaimed locations are claimed from the heap; locations
// claimed by another transaction j merge the reader into j (Δ[k↦j]).
inline ClaimResult claim_read(MemoryState& mem, VarId r, TxId tx) {
    const TxId k = mem.aliases.resolve(tx);
    auto it = mem.working.find(r);
    if (it == mem.working.end()) {
        auto h = mem.heap.find(r);
        if (h == mem.heap.end())
            throw MemoryError("read of unknown location " + std::to_string(r.id));
        mem.working.emplace(r, Claim{h->second, k});
        return {h->second, std::nullopt};
    }
    const TxId j = mem.aliases.resolve(it->second.owner);
    if (j == k) return {it->second.value, std::nullopt};
    detail::reown(mem.working, k, j);
    mem.aliases.record_merge(k, j);
    return {it->second.value, j};
}

// Write1/Write2, the mirror of claim_read with the new value stored; on a
// merge the written value is stored under the surviving owner j.
inline std::optional<TxId> claim_write(MemoryState& mem, VarId r, Value v, TxId tx) {
    const TxId k = mem.aliases.resolve(tx);
    auto it = mem.working.find(r);
    if (it == mem.working.end()) {
        if (!mem.heap.count(r))
            throw MemoryError("write to unknown location " + std::to_string(r.id));
        mem.working.emplace(r, Claim{std::move(v), k});
        return std::nullopt;
    }
    const TxId j = mem.aliases.resolve(it->second.owner);
    if (j == k) {
        it->second.value = std::move(v);
        return std::nullopt;
    }
    detail::reown(mem.working, k, j);
    mem.aliases.record_merge(k, j);
    it->second.value = std::move(v);
    it->second.owner = j;
    return j;
}

// Θ' = commit(k,Σ), Δ' = cleanup(k,Σ): k-owned claims flow to the heap and
// vanish from working memory; other transactions' claims are untouched.
inline void commit_apply(MemoryState& mem, TxId tx) {
    const TxId k = mem.aliases.resolve(tx);
    for (auto it = mem.working.begin(); it != mem.working.end();) {
        if (mem.aliases.resolve(it->second.owner) == k) {
            mem.heap[it->first] = it->second.value;
            it = mem.working.erase(it);
        } else {
            ++it;
        }
    }
}

// Θ' = leak(k,Σ), Δ' = cleanup(k,Σ), Ψ' = remove(root(raising_root)).
// Pre-existing heap entries keep their committed value; locations created
// inside k (no heap entry) leak with their last working value.
inline void abort_apply(MemoryState& mem, TxId tx, ThreadId raising_root) {
    const TxId k = mem.aliases.resolve(tx);
    for (auto it = mem.working.begin(); it != mem.working.end();) {
        if (mem.aliases.resolve(it->second.owner) == k) {
            if (!mem.heap.count(it->first)) mem.heap[it->first] = it->second.value;
            it = mem.working.erase(it);
        } else {
            ++it;
        }
    }
    mem.forest.remove(mem.forest.root(raising_root));
}

// cleanup without commit or leak: the retry rollback.
inline void discard_claims(MemoryState& mem, TxId tx) {
    const TxId k = mem.aliases.resolve(tx);
    for (auto it = mem.working.begin(); it != mem.working.end();) {
        if (mem.aliases.resolve(it->second.owner) == k)
            it = mem.working.erase(it);
        else
            ++it;
    }
}

} // namespace otm
