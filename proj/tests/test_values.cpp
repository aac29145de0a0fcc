#include <doctest.h>

#include <set>
#include <thread>

#include "test_util.hpp"

using namespace otm;
using testutil::vi;

TEST_CASE("fresh ids start at zero and never repeat") {
    IdGen ids;
    CHECK(ids.fresh_var() == VarId{0});
    CHECK(ids.fresh_tx() != ids.fresh_tx());

    std::set<VarId> seen;
    for (int i = 0; i < 10000; ++i) seen.insert(ids.fresh_var());
    CHECK(seen.size() == 10000);
}

TEST_CASE("fresh ids are distinct under concurrent callers") {
    IdGen ids;
    std::vector<std::vector<ThreadId>> got(4);
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w)
        workers.emplace_back([&ids, &got, w] {
            for (int i = 0; i < 2500; ++i) got[w].push_back(ids.fresh_thread());
        });
    for (auto& t : workers) t.join();
    std::set<ThreadId> all;
    for (const auto& v : got) all.insert(v.begin(), v.end());
    CHECK(all.size() == 10000);
}

namespace {

std::vector<Value> sample_values() {
    return {
        Value::unit(),
        Value::boolean(true),
        Value::boolean(false),
        vi(0),
        vi(-42),
        Value::character('x'),
        Value::var(VarId{7}),
        Value::thread(ThreadId{3}),
        Value::pair(vi(1), Value::character('a')),
        Value::list({}),
        Value::list({vi(1), Value::pair(Value::unit(), vi(2))}),
        Value::exception("eval-error", Value::unit()),
        Value::exception("user", Value::list({vi(9)})),
    };
}

Value random_value(std::mt19937_64& rng, int depth) {
    std::uniform_int_distribution<int> dist(0, depth > 0 ? 8 : 5);
    switch (dist(rng)) {
    case 0: return Value::unit();
    case 1: return Value::boolean(rng() & 1);
    case 2: return vi(static_cast<std::int64_t>(rng() % 1000) - 500);
    case 3: return Value::character(static_cast<char>('a' + rng() % 26));
    case 4: return Value::var(VarId{rng() % 100});
    case 5: return Value::thread(ThreadId{rng() % 100});
    case 6: return Value::pair(random_value(rng, depth - 1), random_value(rng, depth - 1));
    case 7: {
        std::vector<Value> xs;
        const auto n = rng() % 4;
        for (std::uint64_t i = 0; i < n; ++i) xs.push_back(random_value(rng, depth - 1));
        return Value::list(std::move(xs));
    }
    default: return Value::exception("tag" + std::to_string(rng() % 3), random_value(rng, depth - 1));
    }
}

} // namespace

TEST_CASE("values round-trip through the trace encoding") {
    for (const Value& v : sample_values()) {
        CHECK(Value::from_json(v.to_json()) == v);
        CHECK(Value::from_json(nlohmann::json::parse(v.show())) == v);
    }
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const Value v = random_value(rng, 3);
        CHECK(Value::from_json(v.to_json()) == v);
    }
}

TEST_CASE("value ordering is a strict total order on distinct values") {
    const auto vs = sample_values();
    for (const auto& a : vs)
        for (const auto& b : vs) {
            if (a == b) {
                CHECK_FALSE(a < b);
                CHECK_FALSE(b < a);
            } else {
                CHECK((a < b) != (b < a));
            }
        }
}

TEST_CASE("value accessors enforce tags") {
    CHECK_THROWS_AS(Value::unit().as_int(), BadValue);
    CHECK_THROWS_AS(vi(1).as_var(), BadValue);
    CHECK(Value::pair(vi(1), vi(2)).second() == vi(2));
    CHECK(Value::exception("t", vi(5)).exception_payload() == vi(5));
}
