#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <functional>

namespace otm {

// Location names (Loc), transaction names (TrName) and thread identifiers
// are distinct id spaces; mixing them up should not compile.

struct VarId {
    std::uint64_t id = 0;
    auto operator<=>(const VarId&) const = default;
};

struct TxId {
    std::uint64_t id = 0;
    auto operator<=>(const TxId&) const = default;
};

struct ThreadId {
    std::uint64_t id = 0;
    auto operator<=>(const ThreadId&) const = default;
};

// Monotone counters, one per id kind. Freshness of every allocated id is the
// side condition of NewVar/ForkIO/ForkT and of transaction creation; counters
// are atomic so the contract also holds with concurrent callers. Copying an
// IdGen copies the current counts (used when exploration clones a machine).
class IdGen {
public:
    IdGen() = default;

    IdGen(const IdGen& other)
        : vars_(other.vars_.load()), txs_(other.txs_.load()), threads_(other.threads_.load()) {}

    IdGen& operator=(const IdGen& other) {
        vars_.store(other.vars_.load());
        txs_.store(other.txs_.load());
        threads_.store(other.threads_.load());
        return *this;
    }

    VarId fresh_var() { return VarId{vars_.fetch_add(1)}; }
    TxId fresh_tx() { return TxId{txs_.fetch_add(1)}; }
    ThreadId fresh_thread() { return ThreadId{threads_.fetch_add(1)}; }

private:
    std::atomic<std::uint64_t> vars_{0};
    std::atomic<std::uint64_t> txs_{0};
    std::atomic<std::uint64_t> threads_{0};
};

} // namespace otm

template <> struct std::hash<otm::VarId> {
    std::size_t operator()(const otm::VarId& v) const noexcept { return std::hash<std::uint64_t>{}(v.id); }
};
template <> struct std::hash<otm::TxId> {
    std::size_t operator()(const otm::TxId& v) const noexcept { return std::hash<std::uint64_t>{}(v.id); }
};
template <> struct std::hash<otm::ThreadId> {
    std::size_t operator()(const otm::ThreadId& v) const noexcept { return std::hash<std::uint64_t>{}(v.id); }
};
