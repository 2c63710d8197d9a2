#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "perp/perp.h"

using perpcli::json;

namespace {

enum class Kind { number, integer, flag, numbers, names, text };

struct ParamFlag {
    const char* flag;
    const char* key;
    Kind kind;
    const char* help;
};

const std::map<std::string, std::vector<ParamFlag>>& flag_table() {
    static const std::map<std::string, std::vector<ParamFlag>> t{
        {"alpha", {{"--bracket", "bracket", Kind::numbers, "lo,hi search interval"}}},
        {"tail",
         {{"--logx-min", "logx_min", Kind::number, "smallest log x"},
          {"--logx-max", "logx_max", Kind::number, "largest log x"},
          {"--points-per-decade", "points_per_decade", Kind::number, "grid density"},
          {"--columns", "columns", Kind::names, "leading,normal,tilted"}}},
        {"fig2a",
         {{"--logx-min", "logx_min", Kind::number, "smallest log x"},
          {"--logx-max", "logx_max", Kind::number, "largest log x"},
          {"--points-per-decade", "points_per_decade", Kind::number, "grid density"}}},
        {"simulate-y",
         {{"--logx", "logx", Kind::number, "log of the threshold"},
          {"--paths", "paths", Kind::integer, "number of paths"},
          {"--truncation", "truncation", Kind::text, "adaptive or fixed"},
          {"--fixed-n", "fixed_n", Kind::integer, "rows when truncation is fixed"},
          {"--eps", "eps", Kind::number, "adaptive truncation tolerance"},
          {"--gamma", "gamma", Kind::number, "moment order for the truncation bound (0: alpha/2)"}}},
        {"is-tail",
         {{"--logx", "logx", Kind::number, "log of the threshold"},
          {"--samples-per-n", "samples_per_n", Kind::integer, "tilted samples per row count"},
          {"--paths", "samples_per_n", Kind::integer, "alias of --samples-per-n"},
          {"--n-max", "n_max", Kind::integer, "last row count (0: adaptive)"}}},
        {"ruin",
         {{"--logx", "logx", Kind::number, "log of the threshold"},
          {"--paths", "paths", Kind::integer, "number of paths"},
          {"--absolute", "absolute", Kind::flag, "use |partial sums|"}}},
        {"lindley",
         {{"--u", "u", Kind::numbers, "levels"},
          {"--steps", "steps", Kind::integer, "steps per path"},
          {"--paths", "paths", Kind::integer, "number of paths"}}},
        {"goldie", {{"--paths", "paths", Kind::integer, "number of samples"}}},
        {"mv-alpha",
         {{"--depth", "depth", Kind::integer, "product depth"},
          {"--samples", "samples", Kind::integer, "product samples"},
          {"--bracket", "bracket", Kind::numbers, "lo,hi search interval"},
          {"--method", "method", Kind::text, "resampled or direct"}}},
        {"mv-tail",
         {{"--u", "u", Kind::numbers, "direction u"},
          {"--v", "v", Kind::numbers, "direction v"},
          {"--logx", "logx", Kind::numbers, "log thresholds"},
          {"--paths", "paths", Kind::integer, "tail paths"},
          {"--depth", "depth", Kind::integer, "product depth for alpha"},
          {"--samples", "samples", Kind::integer, "product samples for alpha"},
          {"--bracket", "bracket", Kind::numbers, "lo,hi search interval"},
          {"--method", "method", Kind::text, "resampled or direct"}}},
    };
    return t;
}

std::string describe(const std::string& cmd) {
    static const std::map<std::string, std::string> d{
        {"alpha", "Cramer root and tilted moments of a factor model"},
        {"tail", "tail approximation curves on a log x grid"},
        {"fig2a", "two-panel ratio figure for the log-gamma fixture"},
        {"simulate-y", "direct simulation of the perpetuity"},
        {"is-tail", "importance-sampled sum of row tail probabilities"},
        {"ruin", "probability that some row product exceeds x"},
        {"lindley", "reflected log walk: exceedances and clusters"},
        {"goldie", "Monte Carlo Goldie constant"},
        {"mv-alpha", "exponent of a nonnegative matrix ensemble"},
        {"mv-tail", "directional tail estimates for a matrix ensemble"},
    };
    auto it = d.find(cmd);
    return it == d.end() ? std::string() : it->second;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) out.push_back(item);
    return out;
}

double to_number(const std::string& flag, const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw perpcli::SpecError(flag + ": not a number: '" + s + "'");
}

json convert(const ParamFlag& f, const std::string& raw) {
    switch (f.kind) {
        case Kind::number:
            return to_number(f.flag, raw);
        case Kind::integer: {
            double v = to_number(f.flag, raw);
            if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
                throw perpcli::SpecError(std::string(f.flag) + ": expected a nonnegative integer");
            return static_cast<std::uint64_t>(v);
        }
        case Kind::numbers: {
            json arr = json::array();
            for (const auto& item : split(raw)) arr.push_back(to_number(f.flag, item));
            return arr;
        }
        case Kind::names:
            return split(raw);
        case Kind::text:
            return raw;
        case Kind::flag:
            return true;
    }
    return nullptr;
}

json read_json_file(const std::string& path, const char* what) {
    std::ifstream f(path);
    if (!f) throw perpcli::SpecError(std::string("cannot read ") + what + " file " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw perpcli::SpecError(std::string("malformed ") + what + " JSON in " + path + ": " + e.what(), "parse");
    }
}

struct Common {
    std::string model, out, json_path, csv_path, svg_path, format;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    std::map<std::string, std::string> raw;
    std::map<std::string, bool> flags;
};

int emit(const perpcli::RunResult& r) {
    std::fwrite(r.out.data(), 1, r.out.size(), stdout);
    std::fwrite(r.err.data(), 1, r.err.size(), stderr);
    return r.exit_code;
}

int fail(int code, const std::string& status, const std::string& msg) {
    std::cerr << json{{"error", {{"status", status}, {"message", msg}}}}.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tails of row-independent stochastic perpetuities"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(perp_version()));

    std::map<std::string, Common> common;
    std::map<std::string, CLI::App*> subs;
    for (const auto& name : perpcli::commands()) {
        auto* sub = app.add_subcommand(name, describe(name));
        subs[name] = sub;
        Common& c = common[name];
        sub->add_option("--model", c.model, name.rfind("mv-", 0) == 0 ? "ensemble JSON file" : "model JSON file");
        sub->add_option("--seed", c.seed, "random seed");
        sub->add_option("--workers", c.workers, "worker threads (default PERP_WORKERS or 1)");
        sub->add_option("--format", c.format, "json or csv on stdout")->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--out", c.out, "output file; .csv selects CSV");
        sub->add_option("--json", c.json_path, "JSON output file");
        sub->add_option("--csv", c.csv_path, "CSV output file");
        sub->add_option("--plot", c.svg_path, "SVG output file");
        auto it = flag_table().find(name);
        if (it == flag_table().end()) continue;
        for (const auto& f : it->second) {
            if (f.kind == Kind::flag)
                sub->add_flag(f.flag, c.flags[f.key], f.help);
            else
                sub->add_option(f.flag, c.raw[f.flag], f.help);
        }
    }

    std::string spec_path;
    bool no_timestamp = false;
    auto* run_cmd = app.add_subcommand("run", "run an experiment spec file");
    run_cmd->add_option("--spec", spec_path, "spec JSON file")->required();
    app.add_flag("--no-timestamp", no_timestamp, "omit the generated-at comment in CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(2, "invalid_argument", e.what());
    }

    perpcli::RunOptions opts;
    opts.timestamp = !no_timestamp;

    try {
        if (run_cmd->parsed()) {
            auto spec = perpcli::spec_from_json(read_json_file(spec_path, "spec"));
            return emit(perpcli::run(spec, opts));
        }
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) continue;
            Common& c = common[name];
            perpcli::ExperimentSpec spec;
            spec.command = name;
            if (!c.model.empty()) spec.model = read_json_file(c.model, "model");
            spec.seed = c.seed;
            spec.workers = c.workers ? c.workers : perpcli::default_workers();
            spec.output.json = c.json_path;
            spec.output.csv = c.csv_path;
            spec.output.svg = c.svg_path;
            std::string format = c.format;
            if (!c.out.empty()) {
                bool csv = c.out.size() >= 4 && c.out.compare(c.out.size() - 4, 4, ".csv") == 0;
                (csv ? spec.output.csv : spec.output.json) = c.out;
                if (format.empty()) format = csv ? "csv" : "json";
            }
            spec.format = format.empty() ? (name == "tail" ? "csv" : "json") : format;
            for (const auto& f : flag_table().count(name) ? flag_table().at(name) : std::vector<ParamFlag>{}) {
                if (f.kind == Kind::flag) {
                    if (c.flags[f.key]) spec.parameters[f.key] = true;
                } else if (!c.raw[f.flag].empty()) {
                    spec.parameters[f.key] = convert(f, c.raw[f.flag]);
                }
            }
            return emit(perpcli::run(spec, opts));
        }
    } catch (const perpcli::SpecError& e) {
        return fail(2, e.status(), e.what());
    }
    return fail(2, "invalid_argument", "no command");
}
