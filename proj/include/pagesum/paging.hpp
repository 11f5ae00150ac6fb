#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "pagesum/error.hpp"
#include "pagesum/text.hpp"

namespace pagesum {

enum class Locality { spatial, discourse, document };

inline const char* locality_name(Locality l) {
    switch (l) {
        case Locality::spatial: return "spatial";
        case Locality::discourse: return "discourse";
        default: return "document";
    }
}

inline Locality locality_from_string(const std::string& s) {
    if (s == "spatial") return Locality::spatial;
    if (s == "discourse") return Locality::discourse;
    if (s == "document") return Locality::document;
    throw input_error("unknown locality '" + s + "' (expected spatial, discourse, or document)");
}

struct PagingConfig {
    Locality locality = Locality::spatial;
    std::size_t page_size = 1024;        // token cap per page
    std::size_t num_pages = 1;           // page count in spatial mode
    std::size_t max_total_tokens = 7168; // input cap, spatial mode

    void check() const {
        if (page_size < 1) throw input_error("paging: page_size must be >= 1");
        if (num_pages < 1) throw input_error("paging: num_pages must be >= 1");
        if (max_total_tokens < page_size) throw input_error("paging: max_total_tokens must be >= page_size");
    }
};

struct Page {
    std::vector<int> tokens;
    std::string origin;           // spatial index, section name, or member index
    std::size_t sent_begin = 0;   // [sent_begin, sent_end) into the source sentence list
    std::size_t sent_end = 0;
};

struct PagedDocument {
    std::string doc_id;
    Locality locality = Locality::spatial;
    std::vector<Page> pages;
};

// Suggested spatial page count: ceil(capped token count / page_size).
inline std::size_t derive_num_pages(std::size_t doc_tokens, const PagingConfig& cfg) {
    cfg.check();
    const std::size_t capped = std::min(doc_tokens, cfg.max_total_tokens);
    return std::max<std::size_t>(1, (capped + cfg.page_size - 1) / cfg.page_size);
}

// Contiguous sentence groups of near-equal size; remainder sentences go to
// the earliest pages. The document is first capped to max_total_tokens (the
// final sentence may be cut mid-way), then each page is capped to page_size.
inline PagedDocument split_spatial(const SentenceDoc& doc, const PagingConfig& cfg) {
    cfg.check();
    if (doc.sentences.empty()) throw input_error("split_spatial: document '" + doc.id + "' has no sentences");

    std::vector<std::vector<int>> sents;
    std::size_t total = 0;
    for (const auto& s : doc.sentences) {
        if (total >= cfg.max_total_tokens) break;
        const std::size_t room = cfg.max_total_tokens - total;
        if (s.size() <= room) {
            sents.push_back(s);
            total += s.size();
        } else {
            sents.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(room));
            total += room;
        }
    }

    PagedDocument pd;
    pd.doc_id = doc.id;
    pd.locality = Locality::spatial;
    const std::size_t count = sents.size();
    const std::size_t base = count / cfg.num_pages;
    const std::size_t rem = count % cfg.num_pages;
    std::size_t at = 0;
    for (std::size_t p = 0; p < cfg.num_pages; ++p) {
        const std::size_t take = base + (p < rem ? 1 : 0);
        if (take == 0) continue;  // fewer sentences than pages: drop empty tail pages
        Page page;
        page.origin = std::to_string(pd.pages.size());
        page.sent_begin = at;
        page.sent_end = at + take;
        for (std::size_t i = at; i < at + take; ++i)
            page.tokens.insert(page.tokens.end(), sents[i].begin(), sents[i].end());
        if (page.tokens.size() > cfg.page_size) page.tokens.resize(cfg.page_size);
        at += take;
        pd.pages.push_back(std::move(page));
    }
    return pd;
}

// One page per section: tokenized name, separator, then section content,
// capped to page_size. Over-long sections are truncated, not split.
inline PagedDocument split_discourse(const SentenceDoc& doc, const PagingConfig& cfg) {
    cfg.check();
    if (doc.sections.empty())
        throw input_error("split_discourse: document '" + doc.id + "' has no sections; use spatial locality");

    PagedDocument pd;
    pd.doc_id = doc.id;
    pd.locality = Locality::discourse;
    for (const auto& sec : doc.sections) {
        Page page;
        page.origin = sec.name;
        page.sent_begin = sec.begin;
        page.sent_end = sec.end;
        page.tokens = sec.name_ids;
        page.tokens.push_back(SEP_ID);
        for (std::size_t i = sec.begin; i < sec.end; ++i)
            page.tokens.insert(page.tokens.end(), doc.sentences[i].begin(), doc.sentences[i].end());
        if (page.tokens.size() > cfg.page_size) page.tokens.resize(cfg.page_size);
        pd.pages.push_back(std::move(page));
    }
    return pd;
}

// One page per cluster member, order preserved, each capped to page_size.
inline PagedDocument split_document(const SentenceDoc& doc, const PagingConfig& cfg) {
    cfg.check();
    if (doc.cluster.empty())
        throw input_error("split_document: document '" + doc.id + "' has no member documents");

    PagedDocument pd;
    pd.doc_id = doc.id;
    pd.locality = Locality::document;
    std::size_t at = 0;
    for (std::size_t m = 0; m < doc.cluster.size(); ++m) {
        const auto& member = doc.cluster[m];
        if (member.empty())
            throw input_error("split_document: member " + std::to_string(m) + " of '" + doc.id + "' is empty");
        Page page;
        page.origin = std::to_string(m);
        page.sent_begin = at;
        page.sent_end = at + member.size();
        for (const auto& s : member) page.tokens.insert(page.tokens.end(), s.begin(), s.end());
        if (page.tokens.size() > cfg.page_size) page.tokens.resize(cfg.page_size);
        at += member.size();
        pd.pages.push_back(std::move(page));
    }
    return pd;
}

inline PagedDocument split(const SentenceDoc& doc, const PagingConfig& cfg) {
    switch (cfg.locality) {
        case Locality::spatial: return split_spatial(doc, cfg);
        case Locality::discourse: return split_discourse(doc, cfg);
        default: return split_document(doc, cfg);
    }
}

// Invariant audit. With the source document supplied, spatial results are
// additionally checked to cover a contiguous sentence prefix of the source.
inline std::vector<std::string> validate(const PagedDocument& pd, const PagingConfig& cfg,
                                         const SentenceDoc* src = nullptr) {
    std::vector<std::string> v;
    if (pd.pages.empty()) v.push_back("no pages");
    if (pd.locality == Locality::spatial && pd.pages.size() > cfg.num_pages)
        v.push_back("page count " + std::to_string(pd.pages.size()) + " exceeds configured " +
                    std::to_string(cfg.num_pages));
    for (std::size_t i = 0; i < pd.pages.size(); ++i) {
        const Page& p = pd.pages[i];
        if (p.tokens.empty()) v.push_back("page " + std::to_string(i) + " is empty");
        if (p.tokens.size() > cfg.page_size)
            v.push_back("page " + std::to_string(i) + " has " + std::to_string(p.tokens.size()) +
                        " tokens, cap is " + std::to_string(cfg.page_size));
        if (p.sent_end < p.sent_begin) v.push_back("page " + std::to_string(i) + " has inverted sentence span");
        if (i > 0 && p.sent_begin < pd.pages[i - 1].sent_end)
            v.push_back("pages " + std::to_string(i - 1) + "," + std::to_string(i) + " overlap at the sentence level");
    }
    if (src && pd.locality == Locality::spatial && !pd.pages.empty()) {
        if (pd.pages.front().sent_begin != 0) v.push_back("spatial pages do not start at the first sentence");
        for (std::size_t i = 1; i < pd.pages.size(); ++i)
            if (pd.pages[i].sent_begin != pd.pages[i - 1].sent_end)
                v.push_back("spatial pages leave a gap before page " + std::to_string(i));
        if (pd.pages.back().sent_end > src->sentences.size())
            v.push_back("spatial pages reference sentences past the end of the source");
    }
    return v;
}

}  // namespace pagesum
