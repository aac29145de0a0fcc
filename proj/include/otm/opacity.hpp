#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "otm/history.hpp"

namespace otm {

struct OpacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EdgeInfo {
    bool red = false;        // a reads-from dependency contributed
    bool dependency = false; // reads-from / anti-dependency / version rules
    bool realtime = false;   // happens-before
};

// Bi-coloured dependency graph over the transactions of a (nonlocal) history.
// Red vertices are running or aborted transactions; red edges mark reads-from
// dependencies (a merge is the dissolving transaction reading the survivor's
// in-flight state, so merges always contribute a red edge).
struct OpacityGraph {
    std::map<TxId, bool> red; // vertex -> red?
    std::map<std::pair<TxId, TxId>, EdgeInfo> edges;

    bool has_edge(TxId from, TxId to) const { return edges.count({from, to}) != 0; }

    std::string to_dot() const {
        std::ostringstream os;
        os << "digraph opg {\n";
        for (const auto& [k, is_red] : red)
            os << "  t" << k.id << " [label=\"k" << k.id << "\", color="
               << (is_red ? "red" : "black") << "];\n";
        for (const auto& [e, info] : edges)
            os << "  t" << e.first.id << " -> t" << e.second.id
               << " [color=" << (info.red ? "red" : "black") << "];\n";
        os << "}\n";
        return os.str();
    }
};

namespace opg_detail {

// A nonlocal read together with the write it observed: the latest preceding
// write of the same value to the same location.
struct ReadFact {
    TxId reader;
    TxId writer;
    std::uint64_t seq; // of the read
    VarId var;
    bool writer_live = false; // writer (via its survivors) uncompleted at the read
};

struct ReadInfo {
    TxId reader;
    VarId var;
    std::optional<TxId> observed; // the write the read matched, if any
};

struct HistoryFacts {
    std::map<TxId, TxSummary> txs;
    std::vector<ReadFact> reads_from; // observed a different transaction's write
    std::vector<ReadInfo> reads;      // every nonlocal read
    std::map<TxId, std::set<VarId>> writes; // nonlocal write-like events
    std::vector<std::pair<TxId, TxId>> merges;
};

inline std::optional<std::uint64_t> completion_seq(const std::map<TxId, TxSummary>& txs, TxId k) {
    // A dissolved transaction completes when its final survivor does.
    std::set<TxId> seen;
    while (true) {
        auto it = txs.find(k);
        if (it == txs.end()) return std::nullopt;
        if (it->second.fate == TxFate::Merged) {
            if (!seen.insert(k).second) return std::nullopt;
            k = it->second.merged_into;
            continue;
        }
        return it->second.end_seq;
    }
}

// The name k's group answers to at time seq: merges that already happened
// are followed, later ones are not.
inline TxId group_at(const std::map<TxId, TxSummary>& txs, TxId k, std::uint64_t seq) {
    std::set<TxId> seen;
    while (true) {
        auto it = txs.find(k);
        if (it == txs.end()) return k;
        if (it->second.fate == TxFate::Merged && *it->second.merge_seq <= seq) {
            if (!seen.insert(k).second) return k;
            k = it->second.merged_into;
            continue;
        }
        return k;
    }
}

inline TxId group_final(const std::map<TxId, TxSummary>& txs, TxId k) {
    std::set<TxId> seen;
    while (true) {
        auto it = txs.find(k);
        if (it == txs.end() || it->second.fate != TxFate::Merged) return k;
        if (!seen.insert(k).second) return k;
        k = it->second.merged_into;
    }
}

inline HistoryFacts gather(const History& nl) {
    HistoryFacts f;
    f.txs = summarize(nl);
    for (std::size_t i = 0; i < nl.size(); ++i) {
        const Event& e = nl[i];
        if (e.is_write_like()) f.writes[e.tx].insert(e.var);
        if (e.op == Event::Op::Merge) f.merges.emplace_back(e.tx, e.into);
        if (e.op != Event::Op::Read) continue;
        std::optional<TxId> observed;
        for (std::size_t j = i; j-- > 0;) {
            const Event& w = nl[j];
            if (w.is_write_like() && w.var == e.var && w.value == e.value) {
                observed = w.tx;
                break;
            }
        }
        // Reads of the group's own state are local to it: a value written by
        // a transaction that has since merged into the reader is an own-write.
        if (observed && group_at(f.txs, *observed, e.seq) == e.tx) observed = e.tx;
        f.reads.push_back({e.tx, e.var, observed});
        if (observed && !(*observed == e.tx)) {
            const auto done = completion_seq(f.txs, *observed);
            f.reads_from.push_back({e.tx, *observed, e.seq, e.var, !done || *done > e.seq});
        }
    }
    return f;
}

} // namespace opg_detail

// Total order ≪ over the transactions of a history, as a ranked list.
using TotalOrder = std::vector<TxId>;

inline std::map<TxId, std::size_t> order_ranks(const TotalOrder& order) {
    std::map<TxId, std::size_t> idx;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (!idx.emplace(order[i], i).second)
            throw OpacityError("order lists transaction " + std::to_string(order[i].id) + " twice");
    return idx;
}

// Build the opacity graph of a nonlocal history under the total order ≪.
// Edge sources and the rules:
//   (1) k' happens-before k and k is committed: black real-time edge k→k';
//   (2) k reads something written by a k' that had not yet completed: red
//       dependency edge k→k' (merges always qualify);
//   (3) k' read a location that k wrote (not the write k' observed), the two
//       overlap in time, and k' ≪ k: dependency edge k→k';
//   (4) committed k' wrote r, k' ≪ k'' and k'' read r from k: edge k→k'.
inline OpacityGraph build_opg(const History& nl, const TotalOrder& order) {
    using opg_detail::completion_seq;
    const auto facts = opg_detail::gather(nl);
    const auto rank = order_ranks(order);
    for (const auto& [k, _] : facts.txs)
        if (!rank.count(k))
            throw OpacityError("order is not total: transaction " + std::to_string(k.id) +
                               " is missing");

    OpacityGraph g;
    for (const auto& [k, s] : facts.txs) g.red[k] = s.fate != TxFate::Committed;

    const auto add_edge = [&g](TxId from, TxId to, bool red, bool dependency) {
        if (from == to) return;
        EdgeInfo& e = g.edges[{from, to}];
        e.red = e.red || red;
        e.dependency = e.dependency || dependency;
        e.realtime = e.realtime || !dependency;
    };
    // Members of one merged group are one transaction; the only edges between
    // them are the merge dependencies themselves.
    const auto same_group = [&facts](TxId a, TxId b) {
        return opg_detail::group_final(facts.txs, a) == opg_detail::group_final(facts.txs, b);
    };

    // rule 1
    for (const auto& [k, sk] : facts.txs) {
        if (sk.fate != TxFate::Committed) continue;
        for (const auto& [k2, _] : facts.txs)
            if (!(k == k2) && happens_before(facts.txs, k2, k)) add_edge(k, k2, false, false);
    }

    // rule 2
    for (const auto& rf : facts.reads_from)
        if (rf.writer_live && !same_group(rf.reader, rf.writer))
            add_edge(rf.reader, rf.writer, true, true);
    for (const auto& [from, into] : facts.merges) add_edge(from, into, true, true);

    // rule 3. Lifetimes are group-resolved: a dissolved transaction ends when
    // its survivor does, so only genuinely overlapping pairs qualify.
    const auto ends_before = [&facts](TxId a, TxId b) {
        const auto done = completion_seq(facts.txs, a);
        const auto itb = facts.txs.find(b);
        if (!done || itb == facts.txs.end()) return false;
        return *done < itb->second.first_op_seq.value_or(itb->second.first_seq);
    };
    for (const auto& [k, kw] : facts.writes) {
        // Only committed writes produce versions a reader could have missed.
        if (facts.txs.at(k).fate != TxFate::Committed) continue;
        for (const auto& read : facts.reads) {
            if (read.reader == k || same_group(read.reader, k) || !kw.count(read.var)) continue;
            if (read.observed && *read.observed == k) continue; // rule 2's business
            if (ends_before(read.reader, k) || ends_before(k, read.reader)) continue;
            if (rank.at(read.reader) < rank.at(k)) add_edge(k, read.reader, false, true);
        }
    }

    // rule 4
    for (const auto& rf : facts.reads_from) {
        if (!rf.writer_live || same_group(rf.reader, rf.writer)) continue;
        for (const auto& [k1, s1] : facts.txs) {
            if (s1.fate != TxFate::Committed || k1 == rf.writer) continue;
            if (same_group(k1, rf.writer) || same_group(k1, rf.reader)) continue;
            auto w = facts.writes.find(k1);
            if (w == facts.writes.end() || !w->second.count(rf.var)) continue;
            if (rank.at(k1) < rank.at(rf.reader)) add_edge(rf.writer, k1, false, true);
        }
    }

    return g;
}

// Well-formedness: no red vertex has an outgoing black edge.
inline bool well_formed(const OpacityGraph& g) {
    for (const auto& [e, info] : g.edges)
        if (g.red.at(e.first) && !info.red) return false;
    return true;
}

inline std::optional<std::pair<TxId, TxId>> well_formed_witness(const OpacityGraph& g) {
    for (const auto& [e, info] : g.edges)
        if (g.red.at(e.first) && !info.red) return e;
    return std::nullopt;
}

// Standard digraph acyclicity; returns a witness cycle when one exists.
inline std::optional<std::vector<TxId>> find_cycle(const OpacityGraph& g) {
    std::map<TxId, std::vector<TxId>> adj;
    for (const auto& [e, _] : g.edges) adj[e.first].push_back(e.second);
    std::map<TxId, int> mark; // 0 unseen, 1 on stack, 2 done
    std::vector<TxId> path;
    std::optional<std::vector<TxId>> cycle;

    const std::function<bool(TxId)> dfs = [&](TxId u) {
        mark[u] = 1;
        path.push_back(u);
        for (const TxId v : adj[u]) {
            if (mark[v] == 1) {
                auto it = std::find(path.begin(), path.end(), v);
                cycle = std::vector<TxId>(it, path.end());
                return true;
            }
            if (mark[v] == 0 && dfs(v)) return true;
        }
        path.pop_back();
        mark[u] = 2;
        return false;
    };

    for (const auto& [k, _] : g.red)
        if (mark[k] == 0 && dfs(k)) break;
    return cycle;
}

inline bool acyclic(const OpacityGraph& g) { return !find_cycle(g).has_value(); }

// The shape every run of this machine must produce: reads-from edges form a
// forest pointing from dissolved (red) transactions to their survivors; only
// roots (no outgoing reads-from edge) may be black, and nobody merges twice.
// Version-order and real-time edges are ordering constraints relative to ≪,
// not data dependencies, so they are not part of the forest claim.
inline bool forest_red_check(const OpacityGraph& g) {
    std::map<TxId, int> out_degree;
    for (const auto& [e, info] : g.edges) {
        if (!info.red) continue;
        if (!g.red.at(e.first)) return false;
        if (++out_degree[e.first] > 1) return false;
    }
    return true;
}

// Canonical ≪: committed/aborted transactions by completion seq, each
// preceded by the transactions that merged into it (by merge seq); live
// transactions last, by first event.
inline TotalOrder canonical_order(const History& nl) {
    const auto txs = summarize(nl);

    std::map<TxId, std::vector<std::pair<std::uint64_t, TxId>>> dissolved_into;
    std::vector<std::pair<std::uint64_t, TxId>> anchors_done;
    std::vector<std::pair<std::uint64_t, TxId>> anchors_live;
    for (const auto& [k, s] : txs) {
        if (s.fate == TxFate::Merged) {
            // attach to the final survivor
            TxId cur = k;
            std::set<TxId> seen{k};
            while (true) {
                auto it = txs.find(cur);
                if (it == txs.end() || it->second.fate != TxFate::Merged) break;
                cur = it->second.merged_into;
                if (!seen.insert(cur).second) break;
            }
            dissolved_into[cur].emplace_back(*s.merge_seq, k);
        } else if (s.end_seq) {
            anchors_done.emplace_back(*s.end_seq, k);
        } else {
            anchors_live.emplace_back(s.first_seq, k);
        }
    }
    std::sort(anchors_done.begin(), anchors_done.end());
    std::sort(anchors_live.begin(), anchors_live.end());

    TotalOrder order;
    const auto emit = [&](TxId anchor) {
        auto& group = dissolved_into[anchor];
        std::sort(group.begin(), group.end());
        for (const auto& [_, k] : group) order.push_back(k);
        order.push_back(anchor);
    };
    for (const auto& [_, k] : anchors_done) emit(k);
    for (const auto& [_, k] : anchors_live) emit(k);
    return order;
}

enum class ViolationKind { None, Inconsistent, NotWellFormed, Cyclic };

inline const char* violation_name(ViolationKind v) {
    switch (v) {
    case ViolationKind::None: return "none";
    case ViolationKind::Inconsistent: return "inconsistent-read";
    case ViolationKind::NotWellFormed: return "not-well-formed";
    case ViolationKind::Cyclic: return "cycle";
    }
    return "?";
}

struct OpacityVerdict {
    bool opaque = false;
    TotalOrder witness;                 // populated when opaque
    ViolationKind violation = ViolationKind::None;
    std::vector<TxId> cycle;            // ViolationKind::Cyclic
    std::optional<std::pair<TxId, TxId>> bad_edge; // NotWellFormed
    std::optional<Event> bad_read;      // Inconsistent
    std::string detail;
    bool heuristic = false; // too many transactions for the full order search

    nlohmann::json to_json() const {
        nlohmann::json j{{"opaque", opaque}, {"violation", violation_name(violation)}};
        if (opaque) {
            nlohmann::json w = nlohmann::json::array();
            for (const TxId k : witness) w.push_back(k.id);
            j["witness_order"] = std::move(w);
        }
        if (!cycle.empty()) {
            nlohmann::json c = nlohmann::json::array();
            for (const TxId k : cycle) c.push_back(k.id);
            j["cycle"] = std::move(c);
        }
        if (bad_edge) j["bad_edge"] = {bad_edge->first.id, bad_edge->second.id};
        if (bad_read) j["bad_read"] = bad_read->to_json();
        if (!detail.empty()) j["detail"] = detail;
        if (heuristic) j["heuristic"] = true;
        return j;
    }
};

// Decision procedure: consistency plus a total order whose opacity graph is
// well-formed and acyclic. The canonical order is tried first; if it fails
// and the history has at most 8 transactions, all orders are searched.
inline OpacityVerdict opaque(const History& h) {
    validate(h);

    OpacityVerdict verdict;
    const auto consistency = check_consistent(h);
    if (!consistency.consistent) {
        verdict.violation = ViolationKind::Inconsistent;
        verdict.bad_read = consistency.offending_read;
        verdict.detail = consistency.reason;
        return verdict;
    }

    const History nl = nonlocal(h);
    const auto txs = summarize(nl);

    const auto try_order = [&](const TotalOrder& order) -> std::optional<OpacityVerdict> {
        const OpacityGraph g = build_opg(nl, order);
        OpacityVerdict v;
        if (const auto bad = well_formed_witness(g)) {
            v.violation = ViolationKind::NotWellFormed;
            v.bad_edge = bad;
            v.detail = "red transaction with a black outgoing edge";
            return v;
        }
        if (const auto cyc = find_cycle(g)) {
            v.violation = ViolationKind::Cyclic;
            v.cycle = *cyc;
            v.detail = "dependency cycle";
            return v;
        }
        return std::nullopt;
    };

    const TotalOrder canonical = canonical_order(nl);
    auto failure = try_order(canonical);
    if (!failure) {
        verdict.opaque = true;
        verdict.witness = canonical;
        return verdict;
    }

    if (txs.size() <= 8) {
        TotalOrder order = canonical;
        std::sort(order.begin(), order.end());
        do {
            if (!try_order(order)) {
                verdict.opaque = true;
                verdict.witness = order;
                return verdict;
            }
        } while (std::next_permutation(order.begin(), order.end()));
        return *failure; // report the canonical order's violation
    }

    failure->heuristic = true;
    return *failure;
}

} // namespace otm
