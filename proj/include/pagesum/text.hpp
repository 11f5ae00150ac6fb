#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pagesum/error.hpp"

namespace pagesum {

// Reserved vocabulary slots. <sep> joins a section name to its content on
// discourse pages.
inline constexpr int PAD_ID = 0;
inline constexpr int BOS_ID = 1;
inline constexpr int EOS_ID = 2;
inline constexpr int UNK_ID = 3;
inline constexpr int SEP_ID = 4;

inline constexpr const char* PAD_TOK = "<pad>";
inline constexpr const char* BOS_TOK = "<s>";
inline constexpr const char* EOS_TOK = "</s>";
inline constexpr const char* UNK_TOK = "<unk>";
inline constexpr const char* SEP_TOK = "<sep>";

namespace detail {
inline bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;  // multibyte UTF-8 stays inside a word
}
}  // namespace detail

// Lowercased word/punctuation split: runs of alphanumerics form one token,
// every other non-space byte is its own token.
inline std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (detail::is_word_byte(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
            if (std::isspace(c) == 0) out.emplace_back(1, ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) out.push_back(' ');
        out += toks[i];
    }
    return out;
}

namespace detail {
inline const std::unordered_set<std::string>& abbreviation_stoplist() {
    static const std::unordered_set<std::string> set = {
        "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "etc", "vs",
        "e.g", "i.e", "fig", "eq", "al", "inc", "ltd", "co", "dept",
    };
    return set;
}

// The word immediately before position `dot` (maximal alnum/dot run),
// lowercased, trailing dots stripped.
inline std::string word_before(const std::string& text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0) {
        const auto c = static_cast<unsigned char>(text[b - 1]);
        if (std::isalnum(c) != 0 || text[b - 1] == '.')
            --b;
        else
            break;
    }
    std::string w = text.substr(b, dot - b);
    while (!w.empty() && w.back() == '.') w.pop_back();
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return w;
}
}  // namespace detail

// Splits after sentence-final . ! ? followed by whitespace or end of text.
// A '.' whose preceding word is a known abbreviation does not end a sentence.
// Sentences keep their terminal punctuation; surrounding whitespace is
// trimmed, so concatenation reproduces the input up to whitespace.
inline std::vector<std::string> segment_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    const std::size_t n = text.size();

    auto flush = [&](std::size_t end) {
        std::size_t b = start, e = end;
        while (b < e && std::isspace(static_cast<unsigned char>(text[b])) != 0) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1])) != 0) --e;
        if (e > b) out.push_back(text.substr(b, e - b));
        start = end;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t j = i;
        while (j + 1 < n && (text[j + 1] == '.' || text[j + 1] == '!' || text[j + 1] == '?')) ++j;
        const bool at_end = j + 1 >= n;
        const bool before_space = !at_end && std::isspace(static_cast<unsigned char>(text[j + 1])) != 0;
        if (!at_end && !before_space) {
            i = j;
            continue;
        }
        if (c == '.' && i == j && detail::abbreviation_stoplist().count(detail::word_before(text, i)) > 0) {
            i = j;
            continue;
        }
        flush(j + 1);
        i = j;
    }
    flush(n);
    return out;
}

// Immutable token <-> id bijection. Ids 0..3 are pinned to <pad>, <s>, </s>,
// <unk>; id 4 is the section separator. Content tokens follow, ordered by
// descending corpus frequency with ties broken lexically, which makes vocab
// construction deterministic.
class Vocabulary {
public:
    static Vocabulary build(const std::map<std::string, std::size_t>& freq, std::size_t min_freq = 2) {
        std::vector<std::pair<std::string, std::size_t>> kept;
        for (const auto& [tok, count] : freq)
            if (count >= min_freq && !is_reserved_surface(tok)) kept.emplace_back(tok, count);
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        Vocabulary v;
        for (const auto& [tok, count] : kept) v.push(tok);
        return v;
    }

    Vocabulary() {
        for (const char* t : {PAD_TOK, BOS_TOK, EOS_TOK, UNK_TOK, SEP_TOK}) push(t);
    }

    std::size_t size() const { return tokens_.size(); }

    int id_of(const std::string& tok) const {
        const auto it = ids_.find(tok);
        return it == ids_.end() ? UNK_ID : it->second;
    }

    const std::string& token_of(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
            throw input_error("vocabulary: id " + std::to_string(id) + " out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    std::vector<int> encode(const std::string& text) const {
        std::vector<int> ids;
        for (const auto& t : tokenize_words(text)) ids.push_back(id_of(t));
        return ids;
    }

    std::string decode(const std::vector<int>& ids, bool skip_special = true) const {
        std::vector<std::string> toks;
        for (const int id : ids) {
            if (skip_special && (id == PAD_ID || id == BOS_ID || id == EOS_ID)) continue;
            toks.push_back(token_of(id));
        }
        return join_tokens(toks);
    }

    // One token per line, id = line number.
    void save(std::ostream& os) const {
        for (const auto& t : tokens_) os << t << '\n';
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw input_error("cannot open vocabulary file for writing: " + path);
        save(out);
    }

    static Vocabulary load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw input_error("cannot open vocabulary file: " + path);
        return load(in);
    }

    static Vocabulary load(std::istream& is) {
        Vocabulary v;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            if (lineno < 5) {
                if (line != v.tokens_[lineno])
                    throw format_error("vocabulary: reserved token mismatch at line " + std::to_string(lineno + 1));
            } else {
                if (line.empty()) throw format_error("vocabulary: empty token at line " + std::to_string(lineno + 1));
                if (v.ids_.count(line)) throw format_error("vocabulary: duplicate token '" + line + "'");
                v.push(line);
            }
            ++lineno;
        }
        if (lineno < 5) throw format_error("vocabulary: missing reserved tokens");
        return v;
    }

private:
    static bool is_reserved_surface(const std::string& t) {
        return t == PAD_TOK || t == BOS_TOK || t == EOS_TOK || t == UNK_TOK || t == SEP_TOK;
    }

    void push(const std::string& tok) {
        ids_.emplace(tok, static_cast<int>(tokens_.size()));
        tokens_.push_back(tok);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// One section's sentence range, [begin, end) into SentenceDoc::sentences.
// name_ids carries the tokenized section name for page construction.
struct Section {
    std::string name;
    std::vector<int> name_ids;
    std::size_t begin = 0;
    std::size_t end = 0;
};

// A document after segmentation and id mapping. `sections` and `cluster` are
// present only for discourse / multi-document inputs; `sentences` always
// holds the full source in order (for cluster docs, members concatenated).
struct SentenceDoc {
    std::string id;
    std::vector<std::vector<int>> sentences;
    std::vector<Section> sections;
    std::vector<std::vector<std::vector<int>>> cluster;
    std::vector<std::vector<int>> summary;

    std::vector<int> flat_tokens() const {
        std::vector<int> out;
        for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
        return out;
    }

    std::vector<int> flat_summary() const {
        std::vector<int> out;
        for (const auto& s : summary) out.insert(out.end(), s.begin(), s.end());
        return out;
    }
};

}  // namespace pagesum
