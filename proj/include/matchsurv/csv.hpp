#ifndef MATCHSURV_CSV_HPP
#define MATCHSURV_CSV_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "matchsurv/cohort.hpp"
#include "matchsurv/pipeline.hpp"
#include "matchsurv/simulate.hpp"

namespace matchsurv {

class CsvError : public std::runtime_error {
public:
    CsvError(std::size_t line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line(line) {}
    std::size_t line;
};

// 17 significant digits: enough to round-trip any IEEE double through text.
inline std::string format_sig17(double v) {
    if (std::isnan(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.16e", v);
    return buf;
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline double parse_double_field(std::string_view field, std::size_t line,
                                 const std::string& what) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value))
        throw CsvError(line, what + ": expected a finite number, got '" +
                                 std::string(field) + "'");
    return value;
}

inline std::int64_t parse_int_field(std::string_view field, std::size_t line,
                                    const std::string& what) {
    std::int64_t value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw CsvError(line, what + ": expected an integer, got '" + std::string(field) + "'");
    return value;
}

inline bool parse_flag_field(std::string_view field, std::size_t line, const std::string& what) {
    if (field == "0") return false;
    if (field == "1") return true;
    throw CsvError(line, what + ": expected 0 or 1, got '" + std::string(field) + "'");
}

inline std::string_view chomp(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
        line.remove_suffix(1);
    return line;
}

}  // namespace detail

// Cohort CSV: header `id,obs_time,death,treated,treat_time,z1,...,zp` with p
// inferred from the header; treat_time empty when treated = 0. Strict: '.'
// decimals, no quoting, no locale formatting.
inline Cohort read_cohort_csv(std::istream& in) {
    std::string raw;
    std::size_t line_no = 0;
    if (!std::getline(in, raw)) throw CsvError(1, "missing header row");
    ++line_no;
    auto header = detail::split_fields(detail::chomp(raw));
    const char* expected[] = {"id", "obs_time", "death", "treated", "treat_time"};
    if (header.size() < 5)
        throw CsvError(1, "header must start with id,obs_time,death,treated,treat_time");
    for (std::size_t j = 0; j < 5; ++j)
        if (header[j] != expected[j])
            throw CsvError(1, "header column " + std::to_string(j + 1) + " must be '" +
                                  expected[j] + "', got '" + std::string(header[j]) + "'");
    const std::size_t p = header.size() - 5;
    for (std::size_t j = 0; j < p; ++j) {
        const std::string want = "z" + std::to_string(j + 1);
        if (header[5 + j] != want)
            throw CsvError(1, "covariate column " + std::to_string(5 + j + 1) + " must be '" +
                                  want + "', got '" + std::string(header[5 + j]) + "'");
    }

    std::vector<SubjectRecord> subjects;
    std::unordered_map<std::int64_t, std::size_t> first_line;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = detail::chomp(raw);
        if (line.empty()) continue;
        auto fields = detail::split_fields(line);
        if (fields.size() != header.size())
            throw CsvError(line_no, "expected " + std::to_string(header.size()) +
                                        " fields, got " + std::to_string(fields.size()));
        SubjectRecord s;
        s.id = detail::parse_int_field(fields[0], line_no, "id");
        if (!first_line.emplace(s.id, line_no).second)
            throw CsvError(line_no, "duplicate id " + std::to_string(s.id));
        s.obs_time = detail::parse_double_field(fields[1], line_no, "obs_time");
        s.death = detail::parse_flag_field(fields[2], line_no, "death");
        s.treated = detail::parse_flag_field(fields[3], line_no, "treated");
        if (s.treated) {
            s.treat_time = detail::parse_double_field(fields[4], line_no, "treat_time");
        } else if (!fields[4].empty()) {
            throw CsvError(line_no, "treat_time must be empty when treated = 0");
        }
        s.covariates.resize(p);
        for (std::size_t j = 0; j < p; ++j)
            s.covariates[j] = detail::parse_double_field(
                fields[5 + j], line_no, "z" + std::to_string(j + 1));
        subjects.push_back(std::move(s));
    }

    try {
        return validate_cohort(std::move(subjects));
    } catch (const CohortError& e) {
        const auto it = first_line.find(e.subject_id);
        throw CsvError(it == first_line.end() ? line_no : it->second, e.what());
    }
}

inline void write_cohort_csv(std::ostream& out, const Cohort& c) {
    out << "id,obs_time,death,treated,treat_time";
    for (std::size_t j = 0; j < c.covariate_dim(); ++j) out << ",z" << (j + 1);
    out << "\n";
    for (const SubjectRecord& s : c.subjects()) {
        out << s.id << ',' << format_sig17(s.obs_time) << ',' << (s.death ? 1 : 0) << ','
            << (s.treated ? 1 : 0) << ',';
        if (s.treated) out << format_sig17(s.treat_time);
        for (double z : s.covariates) out << ',' << format_sig17(z);
        out << "\n";
    }
}

// Curves at every jump time of either side plus the requested times.
inline void write_curves_csv(std::ostream& out, const AnalysisResult& res,
                             const std::vector<double>& requested) {
    std::vector<double> grid;
    const auto& j1 = res.s1.cumhaz.jump_times();
    const auto& j0 = res.s0.cumhaz.jump_times();
    grid.insert(grid.end(), j1.begin(), j1.end());
    grid.insert(grid.end(), j0.begin(), j0.end());
    for (double t : requested)
        if (t >= 0.0 && t <= res.s1.tau1) grid.push_back(t);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    out << "t,S1_hat,S1_se,S0_hat,S0_se,delta_hat,delta_se\n";
    for (double t : grid) {
        out << format_sig17(t) << ',' << format_sig17(res.s1.value(t)) << ','
            << format_sig17(res.s1.std_error(t)) << ',' << format_sig17(res.s0.value(t)) << ','
            << format_sig17(res.s0.std_error(t)) << ',' << format_sig17(res.delta.value(t))
            << ',' << format_sig17(res.delta.std_error(t)) << "\n";
    }
}

inline void write_matches_csv(std::ostream& out, const MatchResult& match) {
    out << "treated_id,control_id,T_k,log_psi_T,log_psi_D\n";
    for (const MatchedPair& pair : match.pairs)
        out << pair.treated_id << ',' << pair.control_id << ',' << format_sig17(pair.match_time)
            << ',' << format_sig17(pair.log_psi_treat) << ','
            << format_sig17(pair.log_psi_death) << "\n";
}

inline nlohmann::json cox_fit_json(const CoxFit& fit) {
    nlohmann::json j;
    j["beta"] = fit.beta;
    j["beta_se"] = fit.beta_se;
    j["converged"] = fit.converged;
    j["n_events"] = fit.n_events;
    j["iterations"] = fit.loglik_path.empty() ? 0 : fit.loglik_path.size() - 1;
    j["loglik"] = fit.loglik_path.empty() ? 0.0 : fit.loglik_path.back();
    return j;
}

inline std::string summary_json(const Cohort& c, const AnalysisOptions& opts,
                                const AnalysisResult& res) {
    std::size_t treated = 0, pre_deaths = 0, post_deaths = 0, censored = 0;
    for (const SubjectRecord& s : c.subjects()) {
        treated += s.treated ? 1 : 0;
        if (s.death && !s.treated) ++pre_deaths;
        if (s.death && s.treated) ++post_deaths;
        if (!s.death) ++censored;
    }
    nlohmann::json j;
    j["n"] = c.size();
    j["p"] = c.covariate_dim();
    j["tau"] = opts.tau;
    j["tau1"] = opts.tau1;
    j["mode"] = match_mode_name(opts.criterion.mode);
    j["xi_t"] = opts.criterion.caliper_treat;
    j["xi_d"] = opts.criterion.caliper_death;
    j["eval_times"] = opts.eval_times;
    j["events"] = {{"treatment", treated},
                   {"pretreatment_death", pre_deaths},
                   {"post_treatment_death", post_deaths},
                   {"censoring", censored}};
    j["matching"] = {{"treated_within_tau", res.treated_within_tau},
                     {"matched", res.match.pairs.size()},
                     {"unmatched_treated", res.match.unmatched_treated},
                     {"match_rate", res.match.match_rate}};
    j["curves"] = {{"s1_jumps", res.s1.cumhaz.size()},
                   {"s0_jumps", res.s0.cumhaz.size()},
                   {"s1_no_events", res.s1.no_events},
                   {"s0_no_events", res.s0.no_events},
                   {"skipped_jumps", res.s1.skipped_jumps + res.s0.skipped_jumps}};
    j["cox"] = {{"treatment", cox_fit_json(res.treat_fit)},
                {"pretreatment_death", cox_fit_json(res.death_fit)},
                {"censoring", cox_fit_json(res.censor_fit)}};
    j["warnings"] = res.warnings;
    return j.dump(2) + "\n";
}

// Monte-Carlo table rows in the layout Setting,t,Quantity,Est,Bias,ESD,ASE,CP
// plus one trailing match-rate row per setting.
inline void write_mc_summary_header(std::ostream& out) {
    out << "Setting,t,Quantity,Est,Bias,ESD,ASE,CP\n";
}

inline void write_mc_summary_rows(std::ostream& out, const std::string& setting,
                                  const MCSummary& summary) {
    for (const MCRow& row : summary.rows)
        out << setting << ',' << format_sig17(row.t) << ',' << row.quantity << ','
            << format_sig17(row.est) << ',' << format_sig17(row.bias) << ','
            << format_sig17(row.esd) << ',' << format_sig17(row.ase) << ','
            << format_sig17(row.cp_percent) << "\n";
    out << setting << ',' << format_sig17(0.0) << ",match_rate,"
        << format_sig17(summary.match_rate_mean) << ",NA,"
        << format_sig17(summary.match_rate_sd) << ",NA,NA\n";
}

inline void write_truth_header(std::ostream& out) {
    out << "Setting,t,S1_true,S1_mc_se,S0_true,S0_mc_se,delta_true,delta_mc_se\n";
}

inline void write_truth_rows(std::ostream& out, const std::string& setting,
                             const TruthTable& truth) {
    for (std::size_t j = 0; j < truth.times.size(); ++j)
        out << setting << ',' << format_sig17(truth.times[j]) << ','
            << format_sig17(truth.s1[j]) << ',' << format_sig17(truth.se_s1[j]) << ','
            << format_sig17(truth.s0[j]) << ',' << format_sig17(truth.se_s0[j]) << ','
            << format_sig17(truth.delta[j]) << ',' << format_sig17(truth.se_delta[j]) << "\n";
}

}  // namespace matchsurv

#endif  // MATCHSURV_CSV_HPP
