#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagesum/error.hpp"
#include "pagesum/text.hpp"

namespace pagesum {

struct RawSection {
    std::string name;
    std::string text;
};

// One corpus line before id mapping. Exactly one of the three source forms
// is populated, recorded in `kind`.
struct RawDoc {
    enum class Kind { text, sections, documents };

    std::string id;
    Kind kind = Kind::text;
    std::string text;
    std::vector<RawSection> sections;
    std::vector<std::string> documents;
    std::string summary;
};

namespace detail {
inline format_error corpus_error(const std::string& origin, std::size_t lineno, const std::string& what) {
    return format_error(origin + ":" + std::to_string(lineno) + ": " + what);
}
}  // namespace detail

// JSON Lines, one document per line: `id`, `summary`, and exactly one of
// `text`, `sections` ([{name, text}]), or `documents` ([string]).
inline std::vector<RawDoc> read_corpus_jsonl(std::istream& is, const std::string& origin = "<corpus>") {
    std::vector<RawDoc> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw detail::corpus_error(origin, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw detail::corpus_error(origin, lineno, "expected a JSON object");
        if (!j.contains("id") || !j["id"].is_string())
            throw detail::corpus_error(origin, lineno, "missing string field 'id'");
        if (!j.contains("summary") || !j["summary"].is_string())
            throw detail::corpus_error(origin, lineno, "missing string field 'summary'");

        const int present = int(j.contains("text")) + int(j.contains("sections")) + int(j.contains("documents"));
        if (present != 1)
            throw detail::corpus_error(origin, lineno,
                                       "exactly one of 'text', 'sections', 'documents' required, found " +
                                           std::to_string(present));

        RawDoc d;
        d.id = j["id"].get<std::string>();
        d.summary = j["summary"].get<std::string>();
        if (j.contains("text")) {
            if (!j["text"].is_string()) throw detail::corpus_error(origin, lineno, "'text' must be a string");
            d.kind = RawDoc::Kind::text;
            d.text = j["text"].get<std::string>();
        } else if (j.contains("sections")) {
            if (!j["sections"].is_array()) throw detail::corpus_error(origin, lineno, "'sections' must be an array");
            d.kind = RawDoc::Kind::sections;
            for (const auto& s : j["sections"]) {
                if (!s.is_object() || !s.contains("name") || !s.contains("text") || !s["name"].is_string() ||
                    !s["text"].is_string())
                    throw detail::corpus_error(origin, lineno, "each section needs string fields 'name' and 'text'");
                d.sections.push_back({s["name"].get<std::string>(), s["text"].get<std::string>()});
            }
            if (d.sections.empty()) throw detail::corpus_error(origin, lineno, "'sections' must be non-empty");
        } else {
            if (!j["documents"].is_array()) throw detail::corpus_error(origin, lineno, "'documents' must be an array");
            d.kind = RawDoc::Kind::documents;
            for (const auto& m : j["documents"]) {
                if (!m.is_string()) throw detail::corpus_error(origin, lineno, "'documents' entries must be strings");
                d.documents.push_back(m.get<std::string>());
            }
            if (d.documents.empty()) throw detail::corpus_error(origin, lineno, "'documents' must be non-empty");
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

inline std::vector<RawDoc> read_corpus_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot open corpus file: " + path);
    return read_corpus_jsonl(f, path);
}

inline void write_corpus_jsonl(std::ostream& os, const std::vector<RawDoc>& docs) {
    for (const auto& d : docs) {
        nlohmann::json j;
        j["id"] = d.id;
        switch (d.kind) {
            case RawDoc::Kind::text: j["text"] = d.text; break;
            case RawDoc::Kind::sections: {
                auto arr = nlohmann::json::array();
                for (const auto& s : d.sections) arr.push_back({{"name", s.name}, {"text", s.text}});
                j["sections"] = std::move(arr);
                break;
            }
            case RawDoc::Kind::documents: j["documents"] = d.documents; break;
        }
        j["summary"] = d.summary;
        os << j.dump() << '\n';
    }
}

inline std::string source_text_of(const RawDoc& d) {
    switch (d.kind) {
        case RawDoc::Kind::text: return d.text;
        case RawDoc::Kind::sections: {
            std::string out;
            for (const auto& s : d.sections) {
                if (!out.empty()) out.push_back(' ');
                out += s.name;
                out.push_back(' ');
                out += s.text;
            }
            return out;
        }
        default: {
            std::string out;
            for (const auto& m : d.documents) {
                if (!out.empty()) out.push_back(' ');
                out += m;
            }
            return out;
        }
    }
}

inline std::map<std::string, std::size_t> count_token_frequencies(const std::vector<RawDoc>& docs) {
    std::map<std::string, std::size_t> freq;
    for (const auto& d : docs) {
        for (const auto& t : tokenize_words(source_text_of(d))) ++freq[t];
        for (const auto& t : tokenize_words(d.summary)) ++freq[t];
    }
    return freq;
}

inline Vocabulary build_vocabulary(const std::vector<RawDoc>& docs, std::size_t min_freq = 2) {
    return Vocabulary::build(count_token_frequencies(docs), min_freq);
}

namespace detail {
inline std::vector<std::vector<int>> encode_sentences(const std::string& text, const Vocabulary& vocab) {
    std::vector<std::vector<int>> out;
    for (const auto& s : segment_sentences(text)) {
        auto ids = vocab.encode(s);
        if (!ids.empty()) out.push_back(std::move(ids));
    }
    return out;
}
}  // namespace detail

inline SentenceDoc to_sentence_doc(const RawDoc& d, const Vocabulary& vocab) {
    SentenceDoc sd;
    sd.id = d.id;
    sd.summary = detail::encode_sentences(d.summary, vocab);
    switch (d.kind) {
        case RawDoc::Kind::text: sd.sentences = detail::encode_sentences(d.text, vocab); break;
        case RawDoc::Kind::sections:
            for (const auto& s : d.sections) {
                Section sec;
                sec.name = s.name;
                sec.name_ids = vocab.encode(s.name);
                sec.begin = sd.sentences.size();
                auto sents = detail::encode_sentences(s.text, vocab);
                for (auto& x : sents) sd.sentences.push_back(std::move(x));
                sec.end = sd.sentences.size();
                sd.sections.push_back(std::move(sec));
            }
            break;
        case RawDoc::Kind::documents:
            for (const auto& m : d.documents) {
                auto sents = detail::encode_sentences(m, vocab);
                sd.cluster.push_back(sents);
                for (auto& x : sents) sd.sentences.push_back(std::move(x));
            }
            break;
    }
    return sd;
}

}  // namespace pagesum
