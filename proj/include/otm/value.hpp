#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "otm/ids.hpp"

namespace otm {

struct BadValue : std::logic_error {
    using std::logic_error::logic_error;
};

// The interpreter's value domain: the data that can be stored in OTVars,
// passed through binds and carried by exceptions. Values are immutable; every
// mutating-looking helper builds a new one.
class Value {
public:
    enum class Tag { Unit, Bool, Int, Char, Var, Thread, Pair, List, Exception };

    Value() : tag_(Tag::Unit) {}

    static Value unit() { return Value(); }
    static Value boolean(bool b) { return scalar(Tag::Bool, b ? 1 : 0); }
    static Value integer(std::int64_t n) { return scalar(Tag::Int, n); }
    static Value character(char c) { return scalar(Tag::Char, static_cast<unsigned char>(c)); }
    static Value var(VarId r) { return scalar(Tag::Var, static_cast<std::int64_t>(r.id)); }
    static Value thread(ThreadId t) { return scalar(Tag::Thread, static_cast<std::int64_t>(t.id)); }

    static Value pair(Value a, Value b) {
        Value v;
        v.tag_ = Tag::Pair;
        v.children_.push_back(std::move(a));
        v.children_.push_back(std::move(b));
        return v;
    }

    static Value list(std::vector<Value> xs) {
        Value v;
        v.tag_ = Tag::List;
        v.children_ = std::move(xs);
        return v;
    }

    static Value exception(std::string tag, Value payload = Value::unit()) {
        Value v;
        v.tag_ = Tag::Exception;
        v.text_ = std::move(tag);
        v.children_.push_back(std::move(payload));
        return v;
    }

    Tag tag() const { return tag_; }

    bool is_unit() const { return tag_ == Tag::Unit; }

    bool as_bool() const {
        expect(Tag::Bool, "bool");
        return num_ != 0;
    }
    std::int64_t as_int() const {
        expect(Tag::Int, "int");
        return num_;
    }
    char as_char() const {
        expect(Tag::Char, "char");
        return static_cast<char>(num_);
    }
    VarId as_var() const {
        expect(Tag::Var, "var handle");
        return VarId{static_cast<std::uint64_t>(num_)};
    }
    ThreadId as_thread() const {
        expect(Tag::Thread, "thread handle");
        return ThreadId{static_cast<std::uint64_t>(num_)};
    }
    const Value& first() const {
        expect(Tag::Pair, "pair");
        return children_[0];
    }
    const Value& second() const {
        expect(Tag::Pair, "pair");
        return children_[1];
    }
    const std::vector<Value>& items() const {
        if (tag_ != Tag::List && tag_ != Tag::Pair) throw BadValue("value is not a list");
        return children_;
    }
    const std::string& exception_tag() const {
        expect(Tag::Exception, "exception");
        return text_;
    }
    const Value& exception_payload() const {
        expect(Tag::Exception, "exception");
        return children_[0];
    }

    friend bool operator==(const Value& a, const Value& b) {
        return a.key() == b.key();
    }
    friend bool operator!=(const Value& a, const Value& b) { return !(a == b); }
    // Total order so values can key ordered maps (continuation caches, sets).
    friend bool operator<(const Value& a, const Value& b) {
        return a.key() < b.key();
    }

    // Canonical trace form: tagged JSON objects, e.g. {"k":"int","v":5}.
    nlohmann::json to_json() const {
        using nlohmann::json;
        switch (tag_) {
        case Tag::Unit: return json{{"k", "unit"}};
        case Tag::Bool: return json{{"k", "bool"}, {"v", num_ != 0}};
        case Tag::Int: return json{{"k", "int"}, {"v", num_}};
        case Tag::Char: return json{{"k", "char"}, {"v", num_}}; // code unit, any byte is valid
        case Tag::Var: return json{{"k", "var"}, {"v", num_}};
        case Tag::Thread: return json{{"k", "thread"}, {"v", num_}};
        case Tag::Pair: return json{{"k", "pair"}, {"v", {children_[0].to_json(), children_[1].to_json()}}};
        case Tag::List: {
            json xs = json::array();
            for (const auto& c : children_) xs.push_back(c.to_json());
            return json{{"k", "list"}, {"v", std::move(xs)}};
        }
        case Tag::Exception:
            return json{{"k", "exc"}, {"tag", text_}, {"v", children_[0].to_json()}};
        }
        throw BadValue("corrupt value tag");
    }

    static Value from_json(const nlohmann::json& j) {
        const std::string k = j.at("k").get<std::string>();
        if (k == "unit") return unit();
        if (k == "bool") return boolean(j.at("v").get<bool>());
        if (k == "int") return integer(j.at("v").get<std::int64_t>());
        if (k == "char") return character(static_cast<char>(j.at("v").get<int>()));
        if (k == "var") return var(VarId{j.at("v").get<std::uint64_t>()});
        if (k == "thread") return thread(ThreadId{j.at("v").get<std::uint64_t>()});
        if (k == "pair") {
            const auto& xs = j.at("v");
            if (!xs.is_array() || xs.size() != 2) throw BadValue("pair value must have two items");
            return pair(from_json(xs[0]), from_json(xs[1]));
        }
        if (k == "list") {
            std::vector<Value> xs;
            for (const auto& x : j.at("v")) xs.push_back(from_json(x));
            return list(std::move(xs));
        }
        if (k == "exc") return exception(j.at("tag").get<std::string>(), from_json(j.at("v")));
        throw BadValue("unknown value kind: " + k);
    }

    std::string show() const { return to_json().dump(); }

private:
    static Value scalar(Tag t, std::int64_t n) {
        Value v;
        v.tag_ = t;
        v.num_ = n;
        return v;
    }

    void expect(Tag t, const char* what) const {
        if (tag_ != t) throw BadValue(std::string("value is not a ") + what);
    }

    std::tuple<int, std::int64_t, const std::string&, const std::vector<Value>&> key() const {
        return {static_cast<int>(tag_), num_, text_, children_};
    }

    Tag tag_;
    std::int64_t num_ = 0;
    std::string text_;           // exception tag
    std::vector<Value> children_; // pair (2), list (n), exception payload (1)
};

} // namespace otm
