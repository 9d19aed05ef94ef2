#ifndef MATCHSURV_CLI_HPP
#define MATCHSURV_CLI_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "matchsurv/csv.hpp"
#include "matchsurv/pipeline.hpp"
#include "matchsurv/simulate.hpp"

namespace matchsurv {

namespace cli_detail {

inline double parse_number(const std::string& text, const std::string& what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
        throw std::runtime_error(what + ": expected a finite number, got '" + text + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw std::runtime_error(what + ": expected a nonnegative integer, got '" + text + "'");
    return v;
}

inline std::vector<double> parse_times(const std::string& text) {
    std::vector<double> times;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t pos = text.find(',', start);
        const std::string tok =
            text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        if (!tok.empty()) times.push_back(parse_number(tok, "times"));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return times;
}

// Flat key = value configuration: one pair per line, '#' starts a comment,
// blank lines ignored. Values never contain '='.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string raw;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

struct Options {
    std::string input;
    std::string config_path;
    std::string out_dir = ".";
    std::string mode = "prognostic";
    double xi_t = 0.0;
    double xi_d = 0.0;
    double tau = 3.0;
    double tau1 = 5.0;
    std::string times_text;
    std::uint64_t seed = 12345;
    std::uint64_t reps = 1000;
    unsigned threads = 0;
    std::string preset;
    std::uint64_t n = 1000;
    std::uint64_t truth_draws = 1000000;
    std::map<std::string, double> generator;  // config-file generator overrides

    std::set<std::string> provided;  // keys fixed by CLI flags or the config file
    bool has(const std::string& key) const { return provided.count(key) > 0; }
};

inline const std::map<std::string, double SimConfig::*>& generator_keys() {
    static const std::map<std::string, double SimConfig::*> keys = {
        {"treat_rate", &SimConfig::treat_rate},
        {"untreated_death_rate", &SimConfig::untreated_death_rate},
        {"treated_death_rate", &SimConfig::treated_death_rate},
        {"censor_rate", &SimConfig::censor_rate},
        {"treat_confounder", &SimConfig::treat_confounder},
        {"treat_driver", &SimConfig::treat_driver},
        {"death_confounder", &SimConfig::death_confounder},
        {"death_driver", &SimConfig::death_driver},
        {"post_confounder", &SimConfig::post_confounder},
        {"post_driver", &SimConfig::post_driver},
        {"post_shift", &SimConfig::post_shift},
        {"censor_confounder", &SimConfig::censor_confounder},
    };
    return keys;
}

// Config-file values fill in everything the command line left unset.
inline void apply_config_file(Options& opt) {
    if (opt.config_path.empty()) return;
    const auto kv = parse_config_file(opt.config_path);
    for (const auto& [key, value] : kv) {
        if (generator_keys().count(key)) {
            if (!opt.has(key)) {
                opt.generator[key] = parse_number(value, key);
                opt.provided.insert(key);
            }
            continue;
        }
        if (opt.has(key)) continue;
        if (key == "mode") opt.mode = value;
        else if (key == "xi_t") opt.xi_t = parse_number(value, key);
        else if (key == "xi_d") opt.xi_d = parse_number(value, key);
        else if (key == "tau") opt.tau = parse_number(value, key);
        else if (key == "tau1") opt.tau1 = parse_number(value, key);
        else if (key == "times") opt.times_text = value;
        else if (key == "seed") opt.seed = parse_u64(value, key);
        else if (key == "reps") opt.reps = parse_u64(value, key);
        else if (key == "threads") opt.threads = static_cast<unsigned>(parse_u64(value, key));
        else if (key == "preset") opt.preset = value;
        else if (key == "n") opt.n = parse_u64(value, key);
        else if (key == "truth_draws") opt.truth_draws = parse_u64(value, key);
        else throw std::runtime_error("unknown config key: " + key);
        opt.provided.insert(key);
    }
}

inline MatchMode parse_mode(const std::string& mode) {
    if (mode == "prognostic") return MatchMode::prognostic;
    if (mode == "propensity") return MatchMode::propensity;
    if (mode == "double") return MatchMode::double_score;
    throw std::runtime_error("unknown mode: " + mode +
                             " (expected prognostic|propensity|double)");
}

// Criterion from mode + calipers; a mode's own caliper defaults to 1.1 when
// not given, the other one stays off unless set.
inline MatchCriterion make_criterion(const Options& opt) {
    MatchCriterion crit;
    crit.mode = parse_mode(opt.mode);
    crit.caliper_treat = opt.xi_t;
    crit.caliper_death = opt.xi_d;
    if ((crit.mode == MatchMode::propensity || crit.mode == MatchMode::double_score) &&
        crit.caliper_treat == 0.0)
        crit.caliper_treat = 1.1;
    if ((crit.mode == MatchMode::prognostic || crit.mode == MatchMode::double_score) &&
        crit.caliper_death == 0.0)
        crit.caliper_death = 1.1;
    crit.validate();
    return crit;
}

inline SimConfig make_sim_config(const Options& opt, const std::string& preset) {
    SimConfig cfg = preset.empty() ? SimConfig{} : preset_config(preset);
    for (const auto& [key, value] : opt.generator) cfg.*(generator_keys().at(key)) = value;
    cfg.n = opt.n;
    cfg.seed = opt.seed;
    cfg.truth_draws = opt.truth_draws;
    if (opt.has("tau")) cfg.tau = opt.tau;
    if (opt.has("tau1")) cfg.tau1 = opt.tau1;
    if (!opt.times_text.empty()) cfg.eval_times = parse_times(opt.times_text);
    if (opt.has("mode") || opt.has("xi_t") || opt.has("xi_d"))
        cfg.criterion = make_criterion(opt);
    return cfg;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline std::string format3(double v, int width) {
    std::ostringstream os;
    if (std::isnan(v))
        os << std::setw(width) << "NA";
    else
        os << std::setw(width) << std::fixed << std::setprecision(3) << v;
    return os.str();
}

inline void print_mc_table(std::ostream& out, const std::string& setting,
                           const MCSummary& summary) {
    out << "Setting " << setting << " (" << summary.reps << " replications, " << summary.failed
        << " failed)\n";
    out << "  t      Quantity    Est     Bias    ESD     ASE     CP\n";
    for (const MCRow& row : summary.rows) {
        out << format3(row.t, 5) << "  " << std::left << std::setw(10) << row.quantity
            << std::right << format3(row.est, 8) << format3(row.bias, 8) << format3(row.esd, 8)
            << format3(row.ase, 8);
        if (std::isnan(row.cp_percent))
            out << std::setw(7) << "NA";
        else
            out << std::setw(7) << std::fixed << std::setprecision(1) << row.cp_percent;
        out << "\n";
    }
    out << "  match rate " << format3(summary.match_rate_mean, 0) << " (sd "
        << format3(summary.match_rate_sd, 0) << ")\n";
}

struct Table1Setting {
    double treat_driver;
    double death_driver;
    MatchMode mode;
    std::string label;
};

inline std::vector<Table1Setting> table1_settings() {
    auto shortnum = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    std::vector<Table1Setting> settings;
    std::set<std::tuple<double, double, int>> seen;
    const MatchMode modes[] = {MatchMode::prognostic, MatchMode::propensity,
                               MatchMode::double_score};
    const double ladder[] = {0.0, 0.5, 1.0, 1.5};
    for (MatchMode mode : modes)
        for (double b11 : ladder) {
            if (!seen.emplace(b11, 1.0, static_cast<int>(mode)).second) continue;
            settings.push_back({b11, 1.0, mode,
                                "b11=" + shortnum(b11) + ",b21=1," + match_mode_name(mode)});
        }
    for (MatchMode mode : modes)
        for (double b21 : ladder) {
            if (!seen.emplace(1.0, b21, static_cast<int>(mode)).second) continue;
            settings.push_back({1.0, b21, mode,
                                "b11=1,b21=" + shortnum(b21) + "," + match_mode_name(mode)});
        }
    return settings;
}

inline int cmd_estimate(const Options& opt, std::ostream& out, std::ostream& err) {
    std::ifstream in(opt.input);
    if (!in) {
        err << opt.input << ": cannot open input file\n";
        return 2;
    }
    Cohort cohort;
    try {
        cohort = read_cohort_csv(in);
    } catch (const CsvError& e) {
        err << opt.input << ": " << e.what() << "\n";
        return 2;
    }

    AnalysisOptions aopts;
    aopts.criterion = make_criterion(opt);
    aopts.tau = opt.tau;
    aopts.tau1 = opt.tau1;
    std::vector<std::string> extra_warnings;
    for (double t : parse_times(opt.times_text)) {
        if (t >= 0.0 && t <= opt.tau1)
            aopts.eval_times.push_back(t);
        else
            extra_warnings.push_back("requested time " + std::to_string(t) +
                                     " outside [0, tau1]; dropped");
    }

    AnalysisResult res;
    try {
        res = analyze(cohort, aopts);
    } catch (const ConvergenceError& e) {
        err << e.what() << "\n";
        return 3;
    } catch (const SingularInformationError& e) {
        err << e.what() << "\n";
        return 3;
    }
    res.warnings.insert(res.warnings.end(), extra_warnings.begin(), extra_warnings.end());

    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    std::ostringstream curves, matches;
    write_curves_csv(curves, res, aopts.eval_times);
    write_matches_csv(matches, res.match);
    write_text_file(dir / "curves.csv", curves.str());
    write_text_file(dir / "matches.csv", matches.str());
    write_text_file(dir / "summary.json", summary_json(cohort, aopts, res));

    out << "n = " << cohort.size() << ", matched " << res.match.pairs.size() << " of "
        << res.treated_within_tau << " treated within tau (rate "
        << format3(res.match.match_rate, 0) << ")\n";
    for (const std::string& w : res.warnings) out << "warning: " << w << "\n";
    out << "wrote " << (dir / "curves.csv").string() << ", " << (dir / "matches.csv").string()
        << ", " << (dir / "summary.json").string() << "\n";
    return 0;
}

inline int cmd_simulate(const Options& opt, std::ostream& out, std::ostream& err) {
    std::ostringstream mc_csv, truth_csv;
    write_mc_summary_header(mc_csv);
    write_truth_header(truth_csv);

    try {
        if (opt.preset == "table1") {
            for (const Table1Setting& setting : table1_settings()) {
                SimConfig cfg = first_set_config(setting.treat_driver, setting.death_driver,
                                                 setting.mode);
                cfg.n = opt.n;
                cfg.seed = opt.seed;
                cfg.truth_draws = opt.truth_draws;
                if (opt.has("tau")) cfg.tau = opt.tau;
                if (opt.has("tau1")) cfg.tau1 = opt.tau1;
                if (!opt.times_text.empty()) cfg.eval_times = parse_times(opt.times_text);
                const MCSummary summary = run_mc(cfg, opt.reps, opt.threads);
                write_mc_summary_rows(mc_csv, setting.label, summary);
                write_truth_rows(truth_csv, setting.label, summary.truth);
                print_mc_table(out, setting.label, summary);
            }
        } else {
            const std::string label = opt.preset.empty() ? "custom" : opt.preset;
            const SimConfig cfg = make_sim_config(opt, opt.preset);
            const MCSummary summary = run_mc(cfg, opt.reps, opt.threads);
            write_mc_summary_rows(mc_csv, label, summary);
            write_truth_rows(truth_csv, label, summary.truth);
            print_mc_table(out, label, summary);
        }
    } catch (const ReplicationBudgetError& e) {
        err << e.what() << "\n";
        return 4;
    }

    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    write_text_file(dir / "mc_summary.csv", mc_csv.str());
    write_text_file(dir / "truth.csv", truth_csv.str());
    out << "wrote " << (dir / "mc_summary.csv").string() << ", "
        << (dir / "truth.csv").string() << "\n";
    return 0;
}

inline int cmd_truth(const Options& opt, std::ostream& out) {
    const std::string label = opt.preset.empty() ? "custom" : opt.preset;
    const SimConfig cfg = make_sim_config(opt, opt.preset);
    const TruthTable truth = true_att(cfg, cfg.eval_times, cfg.truth_draws);

    std::ostringstream truth_csv;
    write_truth_header(truth_csv);
    write_truth_rows(truth_csv, label, truth);
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    write_text_file(dir / "truth.csv", truth_csv.str());

    out << "Setting " << label << " (" << truth.draws << " draws, population "
        << truth.population << ")\n";
    out << "  t      S1_true  S0_true  delta_true\n";
    for (std::size_t j = 0; j < truth.times.size(); ++j)
        out << format3(truth.times[j], 5) << format3(truth.s1[j], 9) << format3(truth.s0[j], 9)
            << format3(truth.delta[j], 12) << "\n";
    out << "wrote " << (dir / "truth.csv").string() << "\n";
    return 0;
}

}  // namespace cli_detail

// Command-line front end. Returns the process exit code: 0 success, 2 input
// schema violation, 3 Cox failure, 4 failed-replication budget exceeded.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    using cli_detail::Options;
    Options opt;

    CLI::App app{"matched, censoring-weighted survival contrasts for a time-dependent treatment"};
    app.require_subcommand(1);

    auto add_common = [&opt](CLI::App* cmd) {
        cmd->add_option("--config", opt.config_path, "flat key = value configuration file");
        cmd->add_option("--out", opt.out_dir, "output directory");
        cmd->add_option("--mode", opt.mode, "matching mode: prognostic|propensity|double");
        cmd->add_option("--xi-t", opt.xi_t, "caliper on the treatment-hazard ratio (> 1)");
        cmd->add_option("--xi-d", opt.xi_d, "caliper on the death-hazard ratio (> 1)");
        cmd->add_option("--tau", opt.tau, "latest treatment time admitted for matching");
        cmd->add_option("--tau1", opt.tau1, "post-treatment follow-up horizon");
        cmd->add_option("--times", opt.times_text, "comma-separated evaluation times");
        cmd->add_option("--seed", opt.seed, "random seed");
        cmd->add_option("--reps", opt.reps, "Monte-Carlo replications");
        cmd->add_option("--threads", opt.threads, "worker threads (0 = hardware)");
        cmd->add_option("--preset", opt.preset,
                        "generator preset: null|strong|medium|negative|table1");
    };

    CLI::App* estimate = app.add_subcommand("estimate", "estimate curves from a cohort CSV");
    estimate->add_option("--input", opt.input, "cohort CSV")->required();
    add_common(estimate);

    CLI::App* simulate = app.add_subcommand("simulate", "run a Monte-Carlo study");
    add_common(simulate);

    CLI::App* truth = app.add_subcommand("truth", "tabulate ground-truth curves for a generator");
    add_common(truth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    CLI::App* active = app.get_subcommands().front();
    for (const auto* option : active->get_options()) {
        if (option->count() == 0) continue;
        std::string name = option->get_name();
        if (name.rfind("--", 0) == 0) name.erase(0, 2);
        for (char& ch : name)
            if (ch == '-') ch = '_';
        opt.provided.insert(name);
    }

    try {
        cli_detail::apply_config_file(opt);
        if (active == estimate) return cli_detail::cmd_estimate(opt, out, err);
        if (active == simulate) return cli_detail::cmd_simulate(opt, out, err);
        if (active == truth) return cli_detail::cmd_truth(opt, out);
    } catch (const ConvergenceError& e) {
        err << e.what() << "\n";
        return 3;
    } catch (const SingularInformationError& e) {
        err << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace matchsurv

#endif  // MATCHSURV_CLI_HPP
