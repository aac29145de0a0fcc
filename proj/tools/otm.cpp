// Command-line runner for the scenario catalog: execute under a chosen
// policy, persist traces, check opacity, print verdicts.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otm/opacity.hpp"
#include "otm/scenarios.hpp"
#include "otm/scheduler.hpp"

namespace {

using namespace otm;

// Exit codes: a total function of (run verdict, opacity verdict).
enum ExitCode {
    kOk = 0,
    kUsage = 1,
    kBadVerdict = 2,
    kNotOpaque = 3,
    kBudgetExhausted = 4,
    kParseError = 5,
};

struct RunOptions {
    std::string scenario;
    std::string policy = "round-robin";
    std::uint64_t seed = 0;
    std::uint64_t max_steps = 10000;
    std::uint64_t max_restarts = 64;
    std::string trace_path;
    std::string opg_path;
    std::string input;
    bool check_opacity = false;
    bool human = false;
    std::vector<std::string> params;
    std::optional<std::int64_t> n;
    std::optional<std::int64_t> target;
};

scen::ScenarioParams make_params(const RunOptions& opt) {
    scen::ScenarioParams params;
    params.input = opt.input;
    if (opt.n) params.ints["n"] = *opt.n;
    if (opt.target) params.ints["target"] = *opt.target;
    for (const std::string& kv : opt.params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--param expects key=value, got " + kv);
        params.ints[kv.substr(0, eq)] = std::stoll(kv.substr(eq + 1));
    }
    return params;
}

// Output streams may carry arbitrary bytes; JSON strings may not.
std::string printable(const std::string& raw) {
    std::string out;
    for (const unsigned char c : raw) {
        if (c >= 0x20 && c < 0x7f) {
            out.push_back(static_cast<char>(c));
        } else {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\x%02x", c);
            out += buf;
        }
    }
    return out;
}

nlohmann::json run_report(const std::string& name, const RunResult& rr) {
    const MachineState& st = rr.state;
    return nlohmann::json{
        {"scenario", name},
        {"verdict", verdict_name(rr.verdict)},
        {"steps", rr.steps},
        {"events", st.history.size()},
        {"commits", st.commits},
        {"aborts", st.aborts},
        {"merges", st.merges},
        {"restarts", st.restarts},
        {"output", printable(st.output)},
    };
}

void print_report(const nlohmann::json& report, bool human) {
    if (!human) {
        std::cout << report.dump() << "\n";
        return;
    }
    std::cout << report.at("scenario").get<std::string>() << ": "
              << report.at("verdict").get<std::string>() << "\n"
              << "  steps:    " << report.at("steps") << "\n"
              << "  events:   " << report.at("events") << "\n"
              << "  commits:  " << report.at("commits") << "\n"
              << "  aborts:   " << report.at("aborts") << "\n"
              << "  merges:   " << report.at("merges") << "\n"
              << "  restarts: " << report.at("restarts") << "\n";
    if (report.contains("opacity"))
        std::cout << "  opacity:  " << (report.at("opacity").get<bool>() ? "true" : "false") << "\n";
    if (report.contains("output") && !report.at("output").get<std::string>().empty())
        std::cout << "  output:   " << report.at("output").get<std::string>() << "\n";
}

int cmd_run(const RunOptions& opt) {
    const scen::Scenario* scenario = scen::find(opt.scenario);
    if (!scenario) {
        std::cerr << "unknown scenario: " << opt.scenario << " (see `otm list`)\n";
        return kUsage;
    }
    const Action program = scenario->build(make_params(opt));

    RunResult rr;
    if (opt.policy == "round-robin") {
        rr = run(program, RoundRobin{}, opt.max_steps, opt.input);
    } else if (opt.policy == "seeded") {
        rr = run(program, SeededRandom{opt.seed}, opt.max_steps, opt.input);
    } else if (opt.policy == "exhaustive") {
        const auto ex = explore(program, opt.max_steps, opt.max_restarts, opt.input);
        // Report over the exploration: every terminal must be acceptable and
        // every history opaque.
        nlohmann::json report{{"scenario", opt.scenario},
                              {"policy", "exhaustive"},
                              {"terminals", ex.terminals.size()},
                              {"complete", ex.complete},
                              {"states", ex.states_seen}};
        // Acceptable when the exploration is complete, at least one terminal
        // carries an expected verdict, and nothing else but quiescence (a
        // parked retry) shows up.
        bool any_expected = false;
        bool all_ok = ex.complete && !ex.terminals.empty();
        bool opacity_ok = true;
        for (const RunResult& t : ex.terminals) {
            const bool expected =
                std::find(scenario->ok_verdicts.begin(), scenario->ok_verdicts.end(), t.verdict) !=
                scenario->ok_verdicts.end();
            any_expected = any_expected || expected;
            all_ok = all_ok && (expected || t.verdict == Verdict::QuiescentBlocked);
            if (opt.check_opacity) opacity_ok = opacity_ok && opaque(t.history()).opaque;
        }
        all_ok = all_ok && any_expected;
        if (opt.check_opacity) report["opacity"] = opacity_ok;
        print_report(report, opt.human);
        if (!opacity_ok) return kNotOpaque;
        return all_ok ? kOk : kBadVerdict;
    } else {
        std::cerr << "unknown policy: " << opt.policy << "\n";
        return kUsage;
    }

    nlohmann::json report = run_report(opt.scenario, rr);

    if (!opt.trace_path.empty()) {
        std::ofstream out(opt.trace_path, std::ios::binary);
        if (!out) {
            std::cerr << "cannot open trace file: " << opt.trace_path << "\n";
            return kUsage;
        }
        write_trace(out, rr.history());
    }

    OpacityVerdict verdict;
    if (opt.check_opacity) {
        verdict = opaque(rr.history());
        report["opacity"] = verdict.opaque;
        report["opacity_verdict"] = verdict.to_json();
    }
    if (!opt.opg_path.empty()) {
        const History nl = nonlocal(rr.history());
        const OpacityGraph g = build_opg(nl, canonical_order(nl));
        std::ofstream out(opt.opg_path, std::ios::binary);
        out << g.to_dot();
    }

    print_report(report, opt.human);

    const bool verdict_ok =
        std::find(scenario->ok_verdicts.begin(), scenario->ok_verdicts.end(), rr.verdict) !=
        scenario->ok_verdicts.end();
    if (opt.check_opacity && !verdict.opaque) return kNotOpaque;
    if (!verdict_ok)
        return rr.verdict == Verdict::StepBudgetExhausted ? kBudgetExhausted : kBadVerdict;
    return kOk;
}

int cmd_check(const std::string& path, const std::string& opg_path, bool human) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "cannot open trace file: " << path << "\n";
        return kUsage;
    }
    History h;
    try {
        h = parse_trace(in);
        validate(h);
    } catch (const std::exception& ex) {
        std::cerr << ex.what() << "\n";
        return kParseError;
    }
    const OpacityVerdict verdict = opaque(h);
    nlohmann::json report{{"trace", path},
                          {"events", h.size()},
                          {"opacity", verdict.opaque},
                          {"opacity_verdict", verdict.to_json()}};
    if (!opg_path.empty()) {
        const History nl = nonlocal(h);
        std::ofstream out(opg_path, std::ios::binary);
        out << build_opg(nl, canonical_order(nl)).to_dot();
    }
    if (human) {
        std::cout << path << ": " << (verdict.opaque ? "opaque" : "not opaque") << "\n";
        if (!verdict.opaque) std::cout << "  violation: " << verdict.to_json().dump() << "\n";
    } else {
        std::cout << report.dump() << "\n";
    }
    return verdict.opaque ? kOk : kNotOpaque;
}

int cmd_list() {
    for (const auto& s : scen::all()) std::cout << s.name << "\t" << s.description << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"open transactional memory scenario runner"};
    app.require_subcommand(1);

    RunOptions opt;
    CLI::App* run_cmd = app.add_subcommand("run", "run a scenario and report");
    run_cmd->add_option("scenario", opt.scenario, "scenario name")->required();
    run_cmd->add_option("--policy", opt.policy, "round-robin | seeded | exhaustive");
    run_cmd->add_option("--seed", opt.seed, "seed for the seeded policy");
    run_cmd->add_option("--max-steps", opt.max_steps, "step budget");
    run_cmd->add_option("--max-restarts", opt.max_restarts, "restart budget (exhaustive)");
    run_cmd->add_option("--trace", opt.trace_path, "write the JSON-lines trace here");
    run_cmd->add_option("--emit-opg", opt.opg_path, "write the opacity graph as DOT");
    run_cmd->add_option("--input", opt.input, "characters served to getChar");
    run_cmd->add_option("--param", opt.params, "scenario parameter key=value")->take_all();
    run_cmd->add_option("--n", opt.n, "shorthand for --param n=N");
    run_cmd->add_option("--target", opt.target, "shorthand for --param target=N");
    run_cmd->add_flag("--check-opacity", opt.check_opacity, "validate the run's history");
    run_cmd->add_flag("--human", opt.human, "pretty report instead of JSON");

    std::string check_path;
    std::string check_opg;
    bool check_human = false;
    CLI::App* check_cmd = app.add_subcommand("check", "re-check a persisted trace");
    check_cmd->add_option("trace", check_path, "trace file path")->required();
    check_cmd->add_option("--emit-opg", check_opg, "write the opacity graph as DOT");
    check_cmd->add_flag("--human", check_human, "pretty report instead of JSON");

    CLI::App* list_cmd = app.add_subcommand("list", "list scenarios");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(opt);
        if (check_cmd->parsed()) return cmd_check(check_path, check_opg, check_human);
        if (list_cmd->parsed()) return cmd_list();
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
