#include <doctest.h>

#include "test_util.hpp"

using namespace otm;
using testutil::run_atomically;
using testutil::vi;

// The term reduction table, checked through engine evaluation of one-shot
// transactions.

TEST_CASE("BindVal: return M >>= N applies the continuation") {
    const auto r = run_atomically(
        itm::seq(itm::ret(vi(5)), [](const Value& v) { return itm::ret(vi(v.as_int() + 1)); }));
    CHECK(r.outcome == Outcome::returned(vi(6)));
}

TEST_CASE("BindEx: retry and throw pass through a bind") {
    const auto retried =
        run_atomically(itm::seq(itm::retry(), [](const Value&) { return itm::ret(vi(0)); }));
    CHECK(retried.outcome.is_retried());

    const auto threw =
        run_atomically(itm::seq(itm::throw_(vi(3)), [](const Value&) { return itm::ret(vi(0)); }));
    CHECK(threw.outcome == Outcome::threw(vi(3)));
}

TEST_CASE("CatchVal: return and retry pass through a catch") {
    const auto returned = run_atomically(
        itm::catch_(itm::ret(vi(7)), [](const Value&) { return itm::ret(vi(0)); }));
    CHECK(returned.outcome == Outcome::returned(vi(7)));

    bool handler_ran = false;
    const auto retried = run_atomically(itm::catch_(itm::retry(), [&](const Value&) {
        handler_ran = true;
        return itm::ret(vi(0));
    }));
    CHECK(retried.outcome.is_retried());
    CHECK_FALSE(handler_ran);
}

TEST_CASE("CatchEx: throw M `catch` N applies the handler") {
    const auto r = run_atomically(
        itm::catch_(itm::throw_(vi(9)), [](const Value& e) { return itm::ret(e); }));
    CHECK(r.outcome == Outcome::returned(vi(9)));
}

TEST_CASE("Eval: host computations produce values; failures throw the eval tag") {
    const auto ok = run_atomically(itm::pure([] { return vi(41 + 1); }));
    CHECK(ok.outcome == Outcome::returned(vi(42)));

    const auto id = run_atomically(
        itm::seq(itm::ret(vi(13)), [](const Value& v) { return itm::pure([v] { return v; }); }));
    CHECK(id.outcome == Outcome::returned(vi(13)));

    const auto boom =
        run_atomically(itm::pure([]() -> Value { throw std::runtime_error("host failure"); }));
    REQUIRE(boom.outcome.is_threw());
    CHECK(boom.outcome.v.exception_tag() == "eval-error");
}

TEST_CASE("Eval: composed host functions match point-wise composition") {
    const auto increment = [](std::int64_t n) { return n + 1; };
    const auto dbl = [](std::int64_t n) { return 2 * n; };
    for (std::int64_t n = 0; n < 10; ++n) {
        const auto r = run_atomically(itm::seq(
            itm::pure([n, increment] { return vi(increment(n)); }),
            [dbl](const Value& v) { return itm::pure([v, dbl] { return vi(dbl(v.as_int())); }); }));
        CHECK(r.outcome == Outcome::returned(vi(dbl(increment(n)))));
    }
}

TEST_CASE("orElse picks the first branch unless it retries") {
    CHECK(run_atomically(itm::or_else(itm::ret(vi(1)), itm::ret(vi(2)))).outcome ==
          Outcome::returned(vi(1)));
    CHECK(run_atomically(itm::or_else(itm::retry(), itm::ret(vi(2)))).outcome ==
          Outcome::returned(vi(2)));
    CHECK(run_atomically(itm::or_else(itm::retry(), itm::retry())).outcome.is_retried());
    // a throw is an outcome, not a retry: the first branch wins
    CHECK(run_atomically(itm::or_else(itm::throw_(vi(8)), itm::ret(vi(2)))).outcome ==
          Outcome::threw(vi(8)));
}

TEST_CASE("monad laws at outcome level") {
    const auto f = [](const Value& v) { return itm::ret(vi(v.as_int() * 3)); };
    const auto g = [](const Value& v) { return itm::ret(vi(v.as_int() + 10)); };

    // left identity: return v >>= f  ==  f v
    CHECK(run_atomically(itm::seq(itm::ret(vi(4)), f)).outcome ==
          run_atomically(f(vi(4))).outcome);

    // right identity: a >>= return  ==  a
    const std::vector<Action> family = {itm::ret(vi(7)), itm::throw_(vi(1)), itm::retry(),
                                        itm::pure([] { return vi(2); })};
    for (const Action& a : family) {
        CHECK(run_atomically(itm::seq(a, [](const Value& v) { return itm::ret(v); })).outcome ==
              run_atomically(a).outcome);
        // associativity: (a >>= f) >>= g  ==  a >>= (\x -> f x >>= g)
        CHECK(run_atomically(itm::seq(itm::seq(a, f), g)).outcome ==
              run_atomically(itm::seq(a, [&](const Value& v) { return itm::seq(f(v), g); }))
                  .outcome);
    }
}

TEST_CASE("kind constraints are rejected at construction") {
    const Action otm_action = tx::ret(Value::unit());
    const Action itm_action = itm::ret(Value::unit());
    const Action io_action = io::ret(Value::unit());

    CHECK_THROWS_AS(itm::seq(otm_action, [](const Value&) { return itm::ret(Value::unit()); }),
                    KindError);
    CHECK_THROWS_AS(itm::or_else(itm_action, otm_action), KindError);
    CHECK_THROWS_AS(tx::isolated(otm_action), KindError);  // only ITM can be isolated
    CHECK_THROWS_AS(tx::fork(itm_action), KindError);      // fork takes an OTM body
    CHECK_THROWS_AS(io::atomic(itm_action), KindError);    // atomic takes an OTM body
    CHECK_THROWS_AS(io::fork(otm_action), KindError);
    CHECK_THROWS_AS(io::atomic(io_action), KindError);     // no nested atomic blocks

    // fork under isolated is unconstructible: fork is OTM-kinded and
    // isolated only accepts ITM bodies.
    CHECK_THROWS_AS(tx::isolated(tx::fork(tx::ret(Value::unit()))), KindError);
}

TEST_CASE("a continuation returning the wrong kind is rejected when applied") {
    const Action bad = itm::seq(itm::ret(vi(1)), [](const Value&) { return tx::ret(vi(2)); });
    CHECK_THROWS_AS(run_atomically(bad), KindError);
}

TEST_CASE("check is return on true and retry on false") {
    CHECK(run_atomically(itm::check(true)).outcome == Outcome::returned(Value::unit()));
    CHECK(run_atomically(itm::check(false)).outcome.is_retried());
}
