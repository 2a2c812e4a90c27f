#pragma once

// Corpus ingestion: sentence splitting, tokenization, length/dedup filters,
// vocabulary construction, numericalization and reproducible sampling.
//
// File formats handled here:
//   corpus: UTF-8 plain text, one sentence per line, tokens space-separated
//   vocab:  UTF-8 text, one "token<TAB>id" per line, ascending id, specials first
//   parallel data: two aligned files (.ord/.simp), line i of each forms a pair

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "nts/common.hpp"

namespace nts {

using Sentence = std::vector<std::string>;

enum class Side { ordinary, simplified };

struct Corpus {
    Side side = Side::ordinary;
    std::vector<Sentence> sentences;

    std::size_t size() const { return sentences.size(); }
};

enum class Origin { original, synthetic };

// Aligned training pair. src_ids are plain token ids; tgt_ids are wrapped
// BOS ... EOS, ready for teacher forcing.
struct SentencePair {
    std::vector<int> src_ids;
    std::vector<int> tgt_ids;
    Origin origin = Origin::original;
};

// ----------------------------- vocabulary -----------------------------

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    Vocabulary() : tokens_{"<pad>", "<unk>", "<s>", "</s>"} {
        for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<int>(i);
    }

    int add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        ids_[token] = id;
        return id;
    }

    std::optional<int> find(const std::string& token) const {
        auto it = ids_.find(token);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    int id_or_unk(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    const std::string& token_of(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
            throw IndexError("token_of: id " + std::to_string(id) + " out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    std::size_t size() const { return tokens_.size(); }

    std::uint64_t content_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& t : tokens_) {
            h = fnv1a64(t, h);
            h = fnv1a64("\n", h);
        }
        return h;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write vocabulary file: " + path);
        for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read vocabulary file: " + path);
        Vocabulary v;
        std::string line;
        int expect = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw InvalidArgument("vocab file " + path + ": missing tab on line " +
                                      std::to_string(expect + 1));
            const std::string token = line.substr(0, tab);
            const int id = std::stoi(line.substr(tab + 1));
            if (id != expect)
                throw InvalidArgument("vocab file " + path + ": ids not ascending at line " +
                                      std::to_string(expect + 1));
            if (id <= kEos) {
                if (token != v.tokens_[static_cast<std::size_t>(id)])
                    throw InvalidArgument("vocab file " + path + ": special token mismatch");
            } else {
                v.add(token);
            }
            ++expect;
        }
        if (expect < 4) throw InvalidArgument("vocab file " + path + ": missing special tokens");
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// ----------------------------- splitting / tokenization -----------------------------

namespace detail {

// Honorifics and similar forms whose trailing period never ends a sentence.
inline const std::set<std::string>& abbreviations() {
    static const std::set<std::string> abbr = {
        "mr.", "mrs.", "ms.", "dr.", "st.", "prof.", "sr.", "jr.",
        "vs.", "e.g.", "i.e.", "no.", "fig.", "al.",
    };
    return abbr;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace detail

// Rule-based splitter: a sentence ends after {. ! ?} followed by whitespace
// and an uppercase letter, or at end of text. A '.' closing a whitelisted
// abbreviation is not a boundary.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        if (c == '.') {
            // word ending at this period, e.g. "Mr." or "e.g."
            std::size_t w = i;
            while (w > begin && (std::isalpha(static_cast<unsigned char>(text[w - 1])) ||
                                 text[w - 1] == '.'))
                --w;
            std::string word(text.substr(w, i - w + 1));
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
            if (detail::abbreviations().count(word)) continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        const bool at_end = j == text.size();
        const bool upper_next = !at_end && j > i + 1 &&
                                std::isupper(static_cast<unsigned char>(text[j]));
        if (at_end || upper_next) {
            std::string sent = detail::trim(text.substr(begin, i + 1 - begin));
            if (!sent.empty()) out.push_back(std::move(sent));
            begin = j;
            i = j - 1;
        }
    }
    std::string tail = detail::trim(text.substr(begin));
    if (!tail.empty()) out.push_back(std::move(tail));
    return out;
}

// Lowercases, splits the listed punctuation into standalone tokens, and
// otherwise splits on whitespace.
inline Sentence tokenize(std::string_view raw) {
    static const std::string punct = ".,!?;:\"'()";
    Sentence tokens;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char c : raw) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isspace(uc)) {
            flush();
        } else if (punct.find(c) != std::string::npos) {
            flush();
            tokens.push_back(std::string(1, c));
        } else {
            cur.push_back(static_cast<char>(uc < 0x80 ? std::tolower(uc) : uc));
        }
    }
    flush();
    return tokens;
}

// ----------------------------- corpus operations -----------------------------

inline Corpus filter_by_length(const Corpus& corpus, std::size_t min_len = 10,
                               std::size_t max_len = 40) {
    if (min_len > max_len) throw InvalidArgument("filter_by_length: min exceeds max");
    Corpus out;
    out.side = corpus.side;
    for (const Sentence& s : corpus.sentences)
        if (s.size() >= min_len && s.size() <= max_len) out.sentences.push_back(s);
    return out;
}

namespace detail {

inline std::string join_tokens(const Sentence& s) {
    std::string key;
    for (const auto& t : s) {
        key += t;
        key += '\x1f';
    }
    return key;
}

}  // namespace detail

inline Corpus dedup(const Corpus& corpus) {
    Corpus out;
    out.side = corpus.side;
    std::unordered_set<std::string> seen;
    for (const Sentence& s : corpus.sentences)
        if (seen.insert(detail::join_tokens(s)).second) out.sentences.push_back(s);
    return out;
}

// Most frequent tokens first, ties broken lexicographically; the four
// specials always occupy ids 0-3.
inline Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size) {
    if (max_size < 5) throw InvalidArgument("build_vocab: max_size must be at least 5");
    std::unordered_map<std::string, std::size_t> freq;
    for (const Sentence& s : corpus.sentences)
        for (const auto& t : s) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary v;
    const std::size_t budget = max_size - 4;
    for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) v.add(ranked[i].first);
    return v;
}

inline std::vector<int> numericalize(const Sentence& sentence, const Vocabulary& vocab,
                                     bool add_bounds) {
    std::vector<int> ids;
    ids.reserve(sentence.size() + (add_bounds ? 2 : 0));
    if (add_bounds) ids.push_back(Vocabulary::kBos);
    for (const auto& t : sentence) ids.push_back(vocab.id_or_unk(t));
    if (add_bounds) ids.push_back(Vocabulary::kEos);
    return ids;
}

inline Sentence detokenize_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
    Sentence out;
    for (int id : ids) {
        if (id == Vocabulary::kBos || id == Vocabulary::kEos || id == Vocabulary::kPad) continue;
        out.push_back(vocab.token_of(id));
    }
    return out;
}

// n distinct sentences drawn without replacement; deterministic in
// (corpus, n, seed).
inline Corpus sample(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
    if (n > corpus.size()) throw InvalidArgument("sample: n exceeds corpus size");
    Corpus out;
    out.side = corpus.side;
    for (std::size_t i : sample_indices(corpus.size(), n, seed))
        out.sentences.push_back(corpus.sentences[i]);
    return out;
}

// ----------------------------- file io -----------------------------

inline std::string join_sentence(const Sentence& s) {
    std::string line;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) line += ' ';
        line += s[i];
    }
    return line;
}

inline Sentence split_ws(std::string_view line) {
    Sentence tokens;
    std::string cur;
    for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

inline Corpus read_corpus_file(const std::string& path, Side side) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read corpus file: " + path);
    Corpus c;
    c.side = side;
    std::string line;
    while (std::getline(in, line)) {
        Sentence s = split_ws(line);
        if (!s.empty()) c.sentences.push_back(std::move(s));
    }
    return c;
}

inline void write_corpus_file(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path);
    for (const Sentence& s : corpus.sentences) out << join_sentence(s) << '\n';
}

// Reads aligned .ord/.simp files into training pairs (ordinary -> simplified).
inline std::vector<SentencePair> load_parallel(const std::string& ord_path,
                                               const std::string& simp_path,
                                               const Vocabulary& ord_vocab,
                                               const Vocabulary& simp_vocab) {
    Corpus ord = read_corpus_file(ord_path, Side::ordinary);
    Corpus simp = read_corpus_file(simp_path, Side::simplified);
    if (ord.size() != simp.size())
        throw InvalidArgument("parallel files disagree: " + ord_path + " has " +
                              std::to_string(ord.size()) + " sentences, " + simp_path + " has " +
                              std::to_string(simp.size()));
    std::vector<SentencePair> pairs;
    pairs.reserve(ord.size());
    for (std::size_t i = 0; i < ord.size(); ++i) {
        SentencePair p;
        p.src_ids = numericalize(ord.sentences[i], ord_vocab, false);
        p.tgt_ids = numericalize(simp.sentences[i], simp_vocab, true);
        p.origin = Origin::original;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace nts
