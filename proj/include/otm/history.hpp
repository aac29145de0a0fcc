#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "otm/ids.hpp"
#include "otm/value.hpp"

namespace otm {

struct HistoryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One recorded operation. Events carry the resolved (post-merge) transaction
// name at recording time, so a history never shows a dissolved name acting
// after its merge.
struct Event {
    enum class Op { Read, Write, New, Commit, Abort, Merge };

    std::uint64_t seq = 0;
    TxId tx;
    ThreadId thread;
    Op op = Op::Read;
    VarId var;    // Read/Write/New
    Value value;  // Read/Write/New
    TxId into;    // Merge

    bool touches_memory() const { return op == Op::Read || op == Op::Write || op == Op::New; }
    // New justifies later reads of the initial value, so it counts as a write
    // wherever locality or read matching is concerned.
    bool is_write_like() const { return op == Op::Write || op == Op::New; }

    static const char* op_name(Op op) {
        switch (op) {
        case Op::Read: return "read";
        case Op::Write: return "write";
        case Op::New: return "new";
        case Op::Commit: return "commit";
        case Op::Abort: return "abort";
        case Op::Merge: return "merge";
        }
        return "?";
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"seq", seq}, {"tx", tx.id}, {"thread", thread.id}, {"op", op_name(op)}};
        if (touches_memory()) {
            j["var"] = var.id;
            j["value"] = value.to_json();
        }
        if (op == Op::Merge) j["into"] = into.id;
        return j;
    }

    static Event from_json(const nlohmann::json& j) {
        Event e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.tx = TxId{j.at("tx").get<std::uint64_t>()};
        e.thread = ThreadId{j.at("thread").get<std::uint64_t>()};
        const std::string op = j.at("op").get<std::string>();
        if (op == "read") e.op = Op::Read;
        else if (op == "write") e.op = Op::Write;
        else if (op == "new") e.op = Op::New;
        else if (op == "commit") e.op = Op::Commit;
        else if (op == "abort") e.op = Op::Abort;
        else if (op == "merge") e.op = Op::Merge;
        else throw HistoryError("unknown op: " + op);
        if (e.touches_memory()) {
            e.var = VarId{j.at("var").get<std::uint64_t>()};
            e.value = Value::from_json(j.at("value"));
        }
        if (e.op == Op::Merge) e.into = TxId{j.at("into").get<std::uint64_t>()};
        return e;
    }
};

using History = std::vector<Event>;

// Per-transaction fate in a history.
enum class TxFate { Committed, Aborted, Merged, Live };

struct TxSummary {
    TxFate fate = TxFate::Live;
    std::uint64_t first_seq = 0;       // first event of any kind
    std::optional<std::uint64_t> first_op_seq; // first Read/Write/New
    std::optional<std::uint64_t> end_seq;      // Commit/Abort seq
    std::optional<std::uint64_t> merge_seq;    // Merge seq (fate == Merged)
    TxId merged_into;                          // valid when fate == Merged
};

// Transactions in order of first appearance, with their summaries.
inline std::map<TxId, TxSummary> summarize(const History& h) {
    std::map<TxId, TxSummary> out;
    for (const Event& e : h) {
        auto [it, fresh] = out.try_emplace(e.tx);
        if (fresh) it->second.first_seq = e.seq;
        TxSummary& s = it->second;
        if (e.touches_memory() && !s.first_op_seq) s.first_op_seq = e.seq;
        switch (e.op) {
        case Event::Op::Commit:
            s.fate = TxFate::Committed;
            s.end_seq = e.seq;
            break;
        case Event::Op::Abort:
            s.fate = TxFate::Aborted;
            s.end_seq = e.seq;
            break;
        case Event::Op::Merge:
            s.fate = TxFate::Merged;
            s.merge_seq = e.seq;
            s.merged_into = e.into;
            break;
        default:
            break;
        }
    }
    return out;
}

// Well-formedness: strictly increasing seq, no operation after the issuing
// transaction committed or aborted, merges target transactions that are still
// running at that point. Throws HistoryError with the offending seq.
inline void validate(const History& h) {
    std::map<TxId, char> state; // r = running, d = done, m = merged
    std::optional<std::uint64_t> prev;
    for (const Event& e : h) {
        if (prev && e.seq <= *prev)
            throw HistoryError("seq not strictly increasing at " + std::to_string(e.seq));
        prev = e.seq;
        auto [it, fresh] = state.try_emplace(e.tx, 'r');
        if (it->second == 'd')
            throw HistoryError("transaction " + std::to_string(e.tx.id) +
                               " issued an operation after commit/abort at seq " +
                               std::to_string(e.seq));
        if (it->second == 'm')
            throw HistoryError("transaction " + std::to_string(e.tx.id) +
                               " issued an operation after merging at seq " +
                               std::to_string(e.seq));
        switch (e.op) {
        case Event::Op::Commit:
        case Event::Op::Abort:
            it->second = 'd';
            break;
        case Event::Op::Merge: {
            if (e.into == e.tx) throw HistoryError("merge into self at seq " + std::to_string(e.seq));
            auto target = state.find(e.into);
            if (target != state.end() && target->second != 'r')
                throw HistoryError("merge into finished transaction at seq " + std::to_string(e.seq));
            it->second = 'm';
            break;
        }
        default:
            break;
        }
    }
}

// happens-before: k ≺ k' iff k commits/aborts before k' issues its first
// operation. A merged transaction's first operation is its first
// Read/Write/New; transactions with no memory operation fall back to their
// first event.
inline bool happens_before(const std::map<TxId, TxSummary>& txs, TxId k, TxId k2) {
    const auto a = txs.find(k);
    const auto b = txs.find(k2);
    if (a == txs.end() || b == txs.end()) return false;
    if (!a->second.end_seq) return false;
    const std::uint64_t start = b->second.first_op_seq.value_or(b->second.first_seq);
    return *a->second.end_seq < start;
}

inline std::vector<std::pair<TxId, TxId>> happens_before_pairs(const History& h) {
    const auto txs = summarize(h);
    std::vector<std::pair<TxId, TxId>> out;
    for (const auto& [k, _] : txs)
        for (const auto& [k2, __] : txs)
            if (!(k == k2) && happens_before(txs, k, k2)) out.emplace_back(k, k2);
    return out;
}

// nonlocal(H): the longest sub-history without local operations, computed to
// a fixed point. A read is local when the previous same-transaction operation
// on the location is a write; a write is local when the next one is.
inline History nonlocal(const History& h) {
    std::vector<Event> cur = h;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<bool> drop(cur.size(), false);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const Event& e = cur[i];
            if (e.op == Event::Op::Read) {
                for (std::size_t j = i; j-- > 0;) {
                    const Event& p = cur[j];
                    if (p.tx == e.tx && p.touches_memory() && p.var == e.var) {
                        if (p.is_write_like()) drop[i] = true;
                        break;
                    }
                }
            } else if (e.is_write_like()) {
                for (std::size_t j = i + 1; j < cur.size(); ++j) {
                    const Event& n = cur[j];
                    if (n.tx == e.tx && n.touches_memory() && n.var == e.var) {
                        if (n.is_write_like()) drop[i] = true;
                        break;
                    }
                }
            }
        }
        std::vector<Event> next;
        next.reserve(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (drop[i]) changed = true;
            else next.push_back(cur[i]);
        }
        cur = std::move(next);
    }
    return cur;
}

struct ConsistencyReport {
    bool consistent = true;
    std::optional<Event> offending_read;
    std::string reason;
};

// Local consistency: every local read is justified by the preceding
// same-transaction write of the read value. Global consistency: every
// nonlocal read of v from r is matched by a nonlocal write of v to r.
inline ConsistencyReport check_consistent(const History& h) {
    for (std::size_t i = 0; i < h.size(); ++i) {
        const Event& e = h[i];
        if (e.op != Event::Op::Read) continue;
        for (std::size_t j = i; j-- > 0;) {
            const Event& p = h[j];
            if (p.tx == e.tx && p.touches_memory() && p.var == e.var) {
                if (p.is_write_like() && !(p.value == e.value))
                    return {false, e, "local read does not match the preceding write"};
                break;
            }
        }
    }
    const History nl = nonlocal(h);
    for (const Event& e : nl) {
        if (e.op != Event::Op::Read) continue;
        const bool matched = std::any_of(nl.begin(), nl.end(), [&](const Event& w) {
            return w.is_write_like() && w.var == e.var && w.value == e.value;
        });
        if (!matched) return {false, e, "nonlocal read of a value never written"};
    }
    return {};
}

inline bool consistent(const History& h) { return check_consistent(h).consistent; }

// ---- trace file format: one JSON object per line ---------------------------

inline void write_trace(std::ostream& os, const History& h) {
    for (const Event& e : h) os << e.to_json().dump() << "\n";
}

inline std::string trace_string(const History& h) {
    std::ostringstream os;
    write_trace(os, h);
    return os.str();
}

inline History parse_trace(std::istream& is) {
    History h;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            h.push_back(Event::from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& ex) {
            throw HistoryError("trace parse error at line " + std::to_string(lineno) + ": " +
                               ex.what());
        }
    }
    return h;
}

} // namespace otm
