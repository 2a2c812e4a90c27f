#pragma once

// Automatic evaluation: corpus BLEU-4 (clipped modified precisions, no
// smoothing), FKGL with a vowel-group syllable heuristic, and SARI over
// added/kept/deleted n-grams against source and references.
//
// Punctuation tokens are excluded from FKGL word and syllable counts but
// participate in BLEU/SARI n-grams.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nts/common.hpp"
#include "nts/textpipe.hpp"

namespace nts {

struct EvalReport {
    std::string system_name;
    double bleu = 0.0;
    double fkgl = 0.0;
    double sari = 0.0;
    std::size_t sentence_count = 0;
};

namespace detail {

// n-gram multiset keyed by the joined token tuple.
using NGramCounts = std::unordered_map<std::string, double>;

inline NGramCounts ngram_counts(const Sentence& tokens, std::size_t n) {
    NGramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) {
            key += tokens[i + k];
            key += '\x1f';
        }
        counts[key] += 1.0;
    }
    return counts;
}

inline double counts_total(const NGramCounts& m) {
    double s = 0.0;
    for (const auto& [k, v] : m) s += v;
    return s;
}

inline double counts_overlap(const NGramCounts& a, const NGramCounts& b) {
    double s = 0.0;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it != b.end()) s += std::min(v, it->second);
    }
    return s;
}

}  // namespace detail

// ----------------------------- BLEU -----------------------------

inline double bleu(const std::vector<Sentence>& hypotheses,
                   const std::vector<std::vector<Sentence>>& references) {
    if (hypotheses.size() != references.size() || hypotheses.empty())
        throw InvalidArgument("bleu: hypothesis and reference counts differ");
    double num[5] = {0, 0, 0, 0, 0};
    double den[5] = {0, 0, 0, 0, 0};
    double c = 0.0, r = 0.0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const Sentence& hyp = hypotheses[i];
        const auto& refs = references[i];
        if (refs.empty()) throw InvalidArgument("bleu: sentence " + std::to_string(i + 1) +
                                                " has no reference");
        c += static_cast<double>(hyp.size());
        // closest reference length; ties prefer the shorter
        std::size_t best_len = refs[0].size();
        for (const Sentence& ref : refs) {
            const auto d_new = ref.size() > hyp.size() ? ref.size() - hyp.size()
                                                       : hyp.size() - ref.size();
            const auto d_old = best_len > hyp.size() ? best_len - hyp.size()
                                                     : hyp.size() - best_len;
            if (d_new < d_old || (d_new == d_old && ref.size() < best_len)) best_len = ref.size();
        }
        r += static_cast<double>(best_len);
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto hc = detail::ngram_counts(hyp, n);
            detail::NGramCounts max_ref;
            for (const Sentence& ref : refs)
                for (const auto& [k, v] : detail::ngram_counts(ref, n))
                    max_ref[k] = std::max(max_ref[k], v);
            num[n] += detail::counts_overlap(hc, max_ref);
            den[n] += hyp.size() >= n ? static_cast<double>(hyp.size() - n + 1) : 0.0;
        }
    }
    double log_p = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        if (den[n] == 0.0) continue;  // no n-grams of this order anywhere: vacuous
        if (num[n] == 0.0) return 0.0;  // genuine zero overlap, no smoothing
        log_p += 0.25 * std::log(num[n] / den[n]);
    }
    if (c == 0.0) return r == 0.0 ? 100.0 : 0.0;
    const double bp = std::min(1.0, std::exp(1.0 - r / c));
    return 100.0 * bp * std::exp(log_p);
}

inline double bleu(const std::vector<Sentence>& hypotheses,
                   const std::vector<Sentence>& references) {
    std::vector<std::vector<Sentence>> wrapped;
    wrapped.reserve(references.size());
    for (const Sentence& r : references) wrapped.push_back({r});
    return bleu(hypotheses, wrapped);
}

// ----------------------------- FKGL -----------------------------

namespace detail {

// Strips non-alphabetic characters from both ends; a token counts as a word
// only if the remainder is non-empty and entirely alphabetic.
inline std::string word_core(const std::string& token) {
    std::size_t b = 0, e = token.size();
    auto alpha = [](char ch) { return std::isalpha(static_cast<unsigned char>(ch)) != 0; };
    while (b < e && !alpha(token[b])) ++b;
    while (e > b && !alpha(token[e - 1])) --e;
    for (std::size_t i = b; i < e; ++i)
        if (!alpha(token[i])) return "";
    return token.substr(b, e - b);
}

}  // namespace detail

// Maximal vowel groups ({a,e,i,o,u,y}), minus one for a terminal silent 'e'
// unless that would reach zero; floored at 1.
inline std::size_t count_syllables(const std::string& word) {
    std::string w = word;
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto vowel = [](char c) {
        return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
    };
    std::size_t groups = 0;
    bool prev = false;
    for (char c : w) {
        const bool v = vowel(c);
        if (v && !prev) ++groups;
        prev = v;
    }
    if (!w.empty() && w.back() == 'e' && groups >= 2) --groups;
    return std::max<std::size_t>(groups, 1);
}

inline double fkgl(const std::vector<Sentence>& sentences) {
    if (sentences.empty()) throw InvalidArgument("fkgl: empty sentence list");
    double words = 0.0, syllables = 0.0;
    for (const Sentence& s : sentences) {
        for (const auto& tok : s) {
            const std::string core = detail::word_core(tok);
            if (core.empty()) continue;
            words += 1.0;
            syllables += static_cast<double>(count_syllables(core));
        }
    }
    if (words == 0.0) throw InvalidArgument("fkgl: no word tokens in input");
    const double n_sent = static_cast<double>(sentences.size());
    return 0.39 * (words / n_sent) + 11.8 * (syllables / words) - 15.59;
}

// ----------------------------- SARI -----------------------------

namespace detail {

struct SariSets {
    NGramCounts o_minus_s, r_minus_s, o_cap_s, r_cap_s, s_minus_o, s_minus_r;
};

inline double sari_ratio(double numer, double denom) {
    return denom == 0.0 ? 1.0 : numer / denom;  // 0/0 := 1 (vacuous success)
}

inline double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace detail

inline double sari_sentence(const Sentence& source, const Sentence& output,
                            const std::vector<Sentence>& refs) {
    if (refs.empty()) throw InvalidArgument("sari: sentence without references");
    double total = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto S = detail::ngram_counts(source, n);
        const auto O = detail::ngram_counts(output, n);
        detail::NGramCounts R;  // fractional counts, weighted 1/|refs|
        for (const Sentence& ref : refs)
            for (const auto& [k, v] : detail::ngram_counts(ref, n))
                R[k] += v / static_cast<double>(refs.size());

        detail::NGramCounts keys = S;
        for (const auto& [k, v] : O) keys.emplace(k, 0.0);
        for (const auto& [k, v] : R) keys.emplace(k, 0.0);

        detail::SariSets sets;
        for (const auto& [k, unused] : keys) {
            auto get = [&k](const detail::NGramCounts& m) {
                auto it = m.find(k);
                return it == m.end() ? 0.0 : it->second;
            };
            const double s = get(S), o = get(O), r = get(R);
            if (o > s) sets.o_minus_s[k] = o - s;
            if (r > s) sets.r_minus_s[k] = r - s;
            if (std::min(o, s) > 0) sets.o_cap_s[k] = std::min(o, s);
            if (std::min(r, s) > 0) sets.r_cap_s[k] = std::min(r, s);
            if (s > o) sets.s_minus_o[k] = s - o;
            if (s > r) sets.s_minus_r[k] = s - r;
        }
        const double add_hit = detail::counts_overlap(sets.o_minus_s, sets.r_minus_s);
        const double keep_hit = detail::counts_overlap(sets.o_cap_s, sets.r_cap_s);
        const double del_hit = detail::counts_overlap(sets.s_minus_o, sets.s_minus_r);
        const double p_add = detail::sari_ratio(add_hit, detail::counts_total(sets.o_minus_s));
        const double r_add = detail::sari_ratio(add_hit, detail::counts_total(sets.r_minus_s));
        const double p_keep = detail::sari_ratio(keep_hit, detail::counts_total(sets.o_cap_s));
        const double r_keep = detail::sari_ratio(keep_hit, detail::counts_total(sets.r_cap_s));
        const double p_del = detail::sari_ratio(del_hit, detail::counts_total(sets.s_minus_o));
        total += (detail::f1(p_add, r_add) + detail::f1(p_keep, r_keep) + p_del) / 3.0;
    }
    return 100.0 * total / 4.0;
}

inline double sari(const std::vector<Sentence>& sources, const std::vector<Sentence>& outputs,
                   const std::vector<std::vector<Sentence>>& references) {
    if (sources.size() != outputs.size() || sources.size() != references.size() ||
        sources.empty())
        throw InvalidArgument("sari: misaligned source/output/reference lists");
    double total = 0.0;
    for (std::size_t i = 0; i < sources.size(); ++i)
        total += sari_sentence(sources[i], outputs[i], references[i]);
    return total / static_cast<double>(sources.size());
}

// ----------------------------- reports -----------------------------

inline EvalReport evaluate_sentences(const std::vector<Sentence>& outputs,
                                     const std::vector<Sentence>& sources,
                                     const std::vector<std::vector<Sentence>>& references,
                                     const std::string& name) {
    if (outputs.size() != sources.size() || outputs.size() != references.size())
        throw InvalidArgument("evaluate: output/source/reference counts differ");
    if (outputs.empty()) throw InvalidArgument("evaluate: empty evaluation set");
    EvalReport rep;
    rep.system_name = name;
    rep.sentence_count = outputs.size();
    rep.bleu = bleu(outputs, references);
    rep.fkgl = fkgl(outputs);
    rep.sari = sari(sources, outputs, references);
    return rep;
}

// Files: one sentence per line; every reference file aligned with outputs.
inline EvalReport evaluate(const std::string& outputs_path, const std::string& sources_path,
                           const std::vector<std::string>& reference_paths,
                           const std::string& name) {
    if (reference_paths.empty()) throw InvalidArgument("evaluate: no reference files");
    auto read_lines = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read file: " + path);
        std::vector<Sentence> out;
        std::string line;
        while (std::getline(in, line)) out.push_back(split_ws(line));
        return out;
    };
    const auto outputs = read_lines(outputs_path);
    const auto sources = read_lines(sources_path);
    if (outputs.size() != sources.size())
        throw InvalidArgument("evaluate: " + outputs_path + " has " +
                              std::to_string(outputs.size()) + " lines but " + sources_path +
                              " has " + std::to_string(sources.size()) + " (mismatch at line " +
                              std::to_string(std::min(outputs.size(), sources.size()) + 1) + ")");
    std::vector<std::vector<Sentence>> references(outputs.size());
    for (const auto& path : reference_paths) {
        const auto refs = read_lines(path);
        if (refs.size() != outputs.size())
            throw InvalidArgument("evaluate: reference file " + path + " has " +
                                  std::to_string(refs.size()) + " lines, expected " +
                                  std::to_string(outputs.size()) + " (mismatch at line " +
                                  std::to_string(std::min(refs.size(), outputs.size()) + 1) + ")");
        for (std::size_t i = 0; i < refs.size(); ++i) references[i].push_back(refs[i]);
    }
    return evaluate_sentences(outputs, sources, references, name);
}

inline std::string format_score(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

// Aligned plain-text table, scores to two decimals.
inline std::string render_report(const EvalReport& rep) {
    std::ostringstream os;
    const std::size_t w = std::max<std::size_t>(rep.system_name.size(), 6);
    os << std::left << std::setw(static_cast<int>(w)) << "system" << "  " << std::right
       << std::setw(7) << "BLEU" << std::setw(7) << "FKGL" << std::setw(7) << "SARI" << '\n';
    os << std::left << std::setw(static_cast<int>(w)) << rep.system_name << "  " << std::right
       << std::setw(7) << format_score(rep.bleu) << std::setw(7) << format_score(rep.fkgl)
       << std::setw(7) << format_score(rep.sari) << '\n';
    return os.str();
}

inline std::string render_report_kv(const EvalReport& rep) {
    std::ostringstream os;
    os << "system=" << rep.system_name << '\n';
    os << "sentences=" << rep.sentence_count << '\n';
    os << "bleu=" << format_score(rep.bleu) << '\n';
    os << "fkgl=" << format_score(rep.fkgl) << '\n';
    os << "sari=" << format_score(rep.sari) << '\n';
    return os.str();
}

inline void write_report_files(const EvalReport& rep, const std::string& table_path,
                               const std::string& kv_path) {
    std::ofstream table(table_path, std::ios::binary);
    if (!table) throw IoError("cannot write report: " + table_path);
    table << render_report(rep);
    std::ofstream kv(kv_path, std::ios::binary);
    if (!kv) throw IoError("cannot write report: " + kv_path);
    kv << render_report_kv(rep);
}

}  // namespace nts
