#include <doctest.h>

#include "test_util.hpp"

using namespace otm;
using testutil::vi;

namespace {

Event ev(std::uint64_t seq, std::uint64_t tx, Event::Op op, std::uint64_t var = 0,
         Value value = Value::unit(), std::uint64_t into = 0) {
    Event e;
    e.seq = seq;
    e.tx = TxId{tx};
    e.thread = ThreadId{tx};
    e.op = op;
    e.var = VarId{var};
    e.value = std::move(value);
    e.into = TxId{into};
    return e;
}

Event rd(std::uint64_t seq, std::uint64_t tx, std::uint64_t var, std::int64_t v) {
    return ev(seq, tx, Event::Op::Read, var, vi(v));
}
Event wr(std::uint64_t seq, std::uint64_t tx, std::uint64_t var, std::int64_t v) {
    return ev(seq, tx, Event::Op::Write, var, vi(v));
}
Event nw(std::uint64_t seq, std::uint64_t tx, std::uint64_t var, std::int64_t v) {
    return ev(seq, tx, Event::Op::New, var, vi(v));
}
Event co(std::uint64_t seq, std::uint64_t tx) { return ev(seq, tx, Event::Op::Commit); }
Event ab(std::uint64_t seq, std::uint64_t tx) { return ev(seq, tx, Event::Op::Abort); }

// Independent quadratic-scan filter: apply the two locality predicates over
// the current sequence until nothing changes, removing one event per pass.
History nonlocal_oracle(History h) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const Event& e = h[i];
            bool local = false;
            if (e.op == Event::Op::Read) {
                for (std::size_t j = i; j-- > 0;)
                    if (h[j].tx == e.tx && h[j].touches_memory() && h[j].var == e.var) {
                        local = h[j].is_write_like();
                        break;
                    }
            } else if (e.is_write_like()) {
                for (std::size_t j = i + 1; j < h.size(); ++j)
                    if (h[j].tx == e.tx && h[j].touches_memory() && h[j].var == e.var) {
                        local = h[j].is_write_like();
                        break;
                    }
            }
            if (local) {
                h.erase(h.begin() + static_cast<std::ptrdiff_t>(i));
                changed = true;
                break;
            }
        }
    }
    return h;
}

History random_history(std::mt19937_64& rng, int events) {
    History h;
    for (int i = 0; i < events; ++i) {
        const std::uint64_t tx = rng() % 3;
        const std::uint64_t var = rng() % 2;
        const std::int64_t value = static_cast<std::int64_t>(rng() % 4);
        if (rng() % 2)
            h.push_back(rd(static_cast<std::uint64_t>(i), tx, var, value));
        else
            h.push_back(wr(static_cast<std::uint64_t>(i), tx, var, value));
    }
    return h;
}

} // namespace

TEST_CASE("nonlocal removes local reads and writes") {
    // [W(r,1), R(r)=1] -> [W(r,1)]
    const History h1 = {wr(0, 0, 0, 1), rd(1, 0, 0, 1)};
    const History n1 = nonlocal(h1);
    REQUIRE(n1.size() == 1);
    CHECK(n1[0].op == Event::Op::Write);

    // [W(r,1), W(r,2)] -> [W(r,2)]
    const History h2 = {wr(0, 0, 0, 1), wr(1, 0, 0, 2)};
    const History n2 = nonlocal(h2);
    REQUIRE(n2.size() == 1);
    CHECK(n2[0].value == vi(2));

    // different transactions do not make each other's operations local
    const History h3 = {wr(0, 0, 0, 1), rd(1, 1, 0, 1)};
    CHECK(nonlocal(h3).size() == 2);
}

TEST_CASE("nonlocal matches the quadratic-scan oracle on random histories") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 400; ++i) {
        const History h = random_history(rng, 10);
        const History got = nonlocal(h);
        const History want = nonlocal_oracle(h);
        REQUIRE(got.size() == want.size());
        for (std::size_t j = 0; j < got.size(); ++j) CHECK(got[j].seq == want[j].seq);
    }
}

TEST_CASE("nonlocal is idempotent and keeps lifecycle events") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 200; ++i) {
        History h = random_history(rng, 12);
        h.push_back(co(100, 0));
        h.push_back(ab(101, 1));
        Event m = ev(102, 2, Event::Op::Merge, 0, Value::unit(), 0);
        h.push_back(m);
        const History once = nonlocal(h);
        CHECK(nonlocal(once).size() == once.size());
        int lifecycle = 0;
        for (const Event& e : once)
            if (!e.touches_memory()) ++lifecycle;
        CHECK(lifecycle == 3);
        // per-transaction order preserved
        for (std::size_t a = 0; a + 1 < once.size(); ++a) CHECK(once[a].seq < once[a + 1].seq);
    }
}

TEST_CASE("consistency accepts justified reads and rejects phantom values") {
    const History ok = {nw(0, 0, 0, 5), co(1, 0), rd(2, 1, 0, 5), co(3, 1)};
    CHECK(consistent(ok));

    const History phantom = {nw(0, 0, 0, 5), co(1, 0), rd(2, 1, 0, 9), co(3, 1)};
    const auto report = check_consistent(phantom);
    CHECK_FALSE(report.consistent);
    REQUIRE(report.offending_read.has_value());
    CHECK(report.offending_read->value == vi(9));

    // local read justified by the preceding write of the same value
    const History local_ok = {nw(0, 0, 0, 1), wr(1, 0, 0, 2), rd(2, 0, 0, 2), co(3, 0)};
    CHECK(consistent(local_ok));
    const History local_bad = {nw(0, 0, 0, 1), wr(1, 0, 0, 2), rd(2, 0, 0, 3), co(3, 0)};
    CHECK_FALSE(consistent(local_bad));
}

TEST_CASE("happens-before orders completion against first operations") {
    // k0 fully before k1
    const History seq_h = {wr(0, 0, 0, 1), co(1, 0), wr(2, 1, 1, 1), co(3, 1)};
    auto txs = summarize(seq_h);
    CHECK(happens_before(txs, TxId{0}, TxId{1}));
    CHECK_FALSE(happens_before(txs, TxId{1}, TxId{0}));

    // overlapping transactions are incomparable
    const History overlap = {wr(0, 0, 0, 1), wr(1, 1, 1, 1), co(2, 0), co(3, 1)};
    txs = summarize(overlap);
    CHECK_FALSE(happens_before(txs, TxId{0}, TxId{1}));
    CHECK_FALSE(happens_before(txs, TxId{1}, TxId{0}));
}

TEST_CASE("three-transaction chains have exactly the comparable pairs the positions give") {
    // brute force over event positions: k0 < k1 overlap, k1 < k2 disjoint
    const History h = {
        wr(0, 0, 0, 1), co(1, 0),            // k0 done early
        wr(2, 1, 1, 1),                       // k1 starts after k0
        wr(3, 2, 2, 1),                       // k2 starts before k1 ends
        co(4, 1), co(5, 2),
    };
    const auto pairs = happens_before_pairs(h);
    // expected: exactly k0 -> k1 and k0 -> k2
    REQUIRE(pairs.size() == 2);
    for (const auto& [a, b] : pairs) CHECK(a == TxId{0});
}

TEST_CASE("validate rejects malformed histories") {
    History out_of_order = {wr(1, 0, 0, 1), wr(0, 0, 0, 2)};
    CHECK_THROWS_AS(validate(out_of_order), HistoryError);

    History after_commit = {co(0, 0), wr(1, 0, 0, 1)};
    CHECK_THROWS_AS(validate(after_commit), HistoryError);

    History merge_into_done = {co(0, 1), ev(1, 0, Event::Op::Merge, 0, Value::unit(), 1)};
    CHECK_THROWS_AS(validate(merge_into_done), HistoryError);

    History fine = {wr(0, 0, 0, 1), co(1, 0)};
    CHECK_NOTHROW(validate(fine));
}
