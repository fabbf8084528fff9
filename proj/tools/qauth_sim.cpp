// qauth_sim: command-line front end for the protocol simulator.
//
//   qauth_sim run      [--config FILE] [flags]            one experiment
//   qauth_sim sweep    --vary NAME --values A,B,... [flags]
//   qauth_sim size     [--D 1e-3,1e-6,...]                sizing table
//   qauth_sim selftest                                     consistency suite
//
// Exit codes: 0 success, 2 configuration error, 3 selftest failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qauth/analysis.hpp"
#include "qauth/errors.hpp"
#include "qauth/experiment.hpp"
#include "qauth/selftest.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSelftest = 3;

// Flags that map one-to-one onto config settings.
struct ExperimentFlags {
    std::string config_path;
    std::string out_path;
    std::vector<std::pair<std::string, CLI::Option*>> options;
    std::vector<std::pair<std::string, std::string>> values;

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "key = value config file");
        app.add_option("--out", out_path, "write the report here instead of stdout");
        values.reserve(32);
        const std::vector<std::pair<std::string, std::string>> flags = {
            {"seed", "master seed (u64)"},
            {"trials", "number of trials"},
            {"strategy", "passive | intercept-resend | subset-guess | pns | oracle-locations"},
            {"k", "authentication key bits"},
            {"d", "tamper detection bits"},
            {"g", "slots measured by subset-guess"},
            {"p1", "single-photon probability of the source"},
            {"threshold", "tamper error threshold"},
            {"m", "disclosed key bits"},
            {"format", "json | csv"},
            {"D", "target security level; sizes k and d when they are not given"},
            {"max-restarts", "restarts allowed after a failed tamper check"},
            {"max-photons", "largest photon number the source emits"},
            {"eve-basis", "uniform | key"},
            {"eve-arm", "alice | bob | both"},
            {"forge", "true | false: Eve submits a forged token"},
            {"knows-plaintext", "true | false: Eve reads the tamper spec"},
            {"key-basis", "rectilinear | diagonal"},
            {"threads", "worker threads (results do not depend on it)"},
        };
        for (const auto& [name, help] : flags) {
            values.emplace_back(name, std::string{});
            options.emplace_back(name, app.add_option("--" + name, values.back().second, help));
        }
    }

    qauth::Settings settings() const {
        qauth::Settings s;
        if (!config_path.empty()) s = qauth::load_settings(config_path);
        for (std::size_t i = 0; i < options.size(); ++i) {
            if (options[i].second->count() == 0) continue;
            std::string key = values[i].first;
            for (char& ch : key) {
                if (ch == '-') ch = '_';
            }
            s[qauth::canonical_key(key)] = values[i].second;
        }
        return s;
    }
};

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw qauth::ConfigError("out", "cannot write '" + out_path + "'");
    out << text;
}

std::vector<double> parse_list(const std::string& field, const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw qauth::ConfigError(field, "not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw qauth::ConfigError(field, "empty list");
    return out;
}

std::string size_table(const std::vector<double>& levels, qauth::OutputFormat fmt) {
    using namespace qauth::analysis;
    if (fmt == qauth::OutputFormat::Json) {
        nlohmann::ordered_json j;
        j["schema"] = "qauth.size/1";
        j["balance_ratio"] = balance_ratio();
        j["balance_ratio_2dp"] = qauth::format_ratio(balance_ratio());
        j["rows"] = nlohmann::ordered_json::array();
        for (double D : levels) {
            const auto exact = size_parameters(D);
            const auto rounded = size_parameters(D, SizingMode::Rounded);
            j["rows"].push_back({{"D", D},
                                 {"k", exact.k},
                                 {"d", exact.d},
                                 {"d_over_k", static_cast<double>(exact.d) / exact.k},
                                 {"k_rounded", rounded.k},
                                 {"d_rounded", rounded.d},
                                 {"forgery_prob", forgery_prob(exact.k)},
                                 {"evade_prob", evade_prob(exact.d)}});
        }
        return j.dump(2) + "\n";
    }
    std::ostringstream out;
    out << "D,k,d,d_over_k,k_rounded,d_rounded,forgery_prob,evade_prob\n";
    for (double D : levels) {
        const auto exact = size_parameters(D);
        const auto rounded = size_parameters(D, SizingMode::Rounded);
        out << nlohmann::json(D).dump() << ',' << exact.k << ',' << exact.d << ','
            << nlohmann::json(static_cast<double>(exact.d) / exact.k).dump() << ',' << rounded.k << ','
            << rounded.d << ',' << nlohmann::json(forgery_prob(exact.k)).dump() << ','
            << nlohmann::json(evade_prob(exact.d)).dump() << '\n';
    }
    out << "# d/k -> " << qauth::format_ratio(balance_ratio()) << '\n';
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator for entanglement-based authentication with tamper-detection photons"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one seeded experiment");
    ExperimentFlags run_flags;
    run_flags.attach(*run);

    auto* sweep = app.add_subcommand("sweep", "rerun an experiment across values of one parameter");
    ExperimentFlags sweep_flags;
    sweep_flags.attach(*sweep);
    std::string vary;
    std::string sweep_values;
    sweep->add_option("--vary", vary, "g | d | k | p1 | D")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();

    auto* size = app.add_subcommand("size", "print (k, d) for target security levels");
    std::string size_levels = "1e-3,1e-6,1e-9,7.62939453125e-06";
    std::string size_format = "csv";
    std::string size_out;
    size->add_option("--D", size_levels, "comma-separated target levels");
    size->add_option("--format", size_format, "json | csv");
    size->add_option("--out", size_out, "write the table here instead of stdout");

    auto* selftest = app.add_subcommand("selftest", "closed forms against enumeration and simulation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            const qauth::ExperimentConfig config = qauth::resolve_config(run_flags.settings());
            const auto report = qauth::run_experiment(config);
            emit(qauth::render(report, config.output_format), run_flags.out_path);
        } else if (*sweep) {
            const std::vector<double> values = parse_list("values", sweep_values);
            qauth::Settings settings = sweep_flags.settings();
            // The swept parameter need not be given on its own.
            if (vary == "g" && !settings.count("g") && !values.empty()) {
                std::ostringstream first;
                first << values.front();
                settings["g"] = first.str();
            }
            const qauth::ExperimentConfig config = qauth::resolve_config(settings);
            const auto cells = qauth::sweep(config, vary, values);
            emit(qauth::render(cells, config.output_format), sweep_flags.out_path);
        } else if (*size) {
            if (size_format != "json" && size_format != "csv") throw qauth::ConfigError("format", "expected json or csv");
            const auto fmt = size_format == "json" ? qauth::OutputFormat::Json : qauth::OutputFormat::Csv;
            std::vector<double> levels = parse_list("D", size_levels);
            for (double D : levels) {
                if (!(D > 0.0 && D < 1.0)) throw qauth::ConfigError("D", "must lie in (0, 1)");
            }
            emit(size_table(levels, fmt), size_out);
        } else if (*selftest) {
            bool all = true;
            for (const auto& r : qauth::run_selftest()) {
                std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
                all = all && r.passed;
            }
            return all ? 0 : kExitSelftest;
        }
    } catch (const qauth::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const qauth::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
