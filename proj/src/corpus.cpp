#include "grlsm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "grlsm/rng.hpp"

namespace grlsm {

namespace {

// Fixed generation lexicon; the whole synthetic charset derives from these
// words plus the markup characters.
constexpr const char* kLexicon[64] = {
    "system",   "model",    "report",   "value",    "signal",  "layer",
    "process",  "result",   "method",   "section",  "input",   "output",
    "data",     "graph",    "update",   "metric",   "window",  "sample",
    "state",    "vector",   "feature",  "measure",  "design",  "format",
    "record",   "summary",  "detail",   "context",  "pattern", "structure",
    "item",     "entry",    "note",     "step",     "phase",   "stage",
    "test",     "check",    "review",   "table",    "index",   "field",
    "source",   "target",   "batch",    "epoch",    "curve",   "trend",
    "scale",    "range",    "bound",    "limit",    "order",   "series",
    "balance",  "control",  "quality",  "schedule", "profile", "segment",
    "baseline", "variant",  "outcome",  "estimate",
};

constexpr char kGroupSeparator = '\x1d';

int draw_range(Xoshiro256pp& g, int lo, int hi) {
    return lo + static_cast<int>(g.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string draw_words(Xoshiro256pp& g, int count, bool capitalize_first) {
    std::string out;
    for (int i = 0; i < count; ++i) {
        std::string w = kLexicon[g.below(64)];
        if (i == 0 && capitalize_first)
            w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (i > 0) out += ' ';
        out += w;
    }
    return out;
}

std::string lstripped(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && line[i] == ' ') ++i;
    return line.substr(i);
}

} // namespace

void CorpusSpec::validate() const {
    if (docs < 1) throw ConfigError("docs must be >= 1");
    auto range_ok = [](int lo, int hi, const char* name) {
        if (lo < 0 || hi < lo)
            throw ConfigError(std::string(name) + " range must satisfy 0 <= lo <= hi");
    };
    range_ok(sections_lo, sections_hi, "sections");
    if (sections_lo < 1) throw ConfigError("sections range must satisfy lo >= 1");
    range_ok(bullets_lo, bullets_hi, "bullets");
    range_ok(numbered_lo, numbered_hi, "numbered");
    range_ok(body_lo, body_hi, "body_sentences");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    if (pad_to < 0) throw ConfigError("pad_to must be >= 0");
}

// --- vocabulary -----------------------------------------------------------------

Vocab::Vocab(std::span<const std::string> texts) {
    std::set<unsigned char> seen;
    for (const auto& t : texts)
        for (char c : t)
            if (c != kPadChar) seen.insert(static_cast<unsigned char>(c));
    chars_.push_back(kPadChar);
    for (unsigned char c : seen) chars_.push_back(static_cast<char>(c));
    rebuild_index();
}

Vocab::Vocab(std::vector<char> chars) : chars_(std::move(chars)) {
    if (chars_.empty() || chars_[0] != kPadChar)
        throw DataError("model parse: vocab must start with the pad symbol");
    rebuild_index();
}

void Vocab::rebuild_index() {
    to_id_.fill(0); // unknown bytes map to pad
    for (std::size_t i = 0; i < chars_.size(); ++i)
        to_id_[static_cast<unsigned char>(chars_[i])] = static_cast<int>(i);
}

char Vocab::char_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= chars_.size())
        throw Error("unknown token id " + std::to_string(id));
    return chars_[static_cast<std::size_t>(id)];
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(vocab.id_of(c));
    return out;
}

std::string detokenize(std::span<const int> tokens, const Vocab& vocab) {
    std::string out;
    out.reserve(tokens.size());
    for (int id : tokens) out.push_back(vocab.char_of(id));
    return out;
}

// --- structure ------------------------------------------------------------------

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::vector<LineTag> annotate_structure(const std::string& text) {
    std::vector<LineTag> tags;
    for (const auto& raw : split_lines(text)) {
        const std::string line = lstripped(raw);
        if (line.empty()) {
            tags.push_back(LineTag::Blank);
            continue;
        }
        if (line[0] == '#') {
            tags.push_back(LineTag::Heading);
            continue;
        }
        if (line.size() >= 2 && line[0] == '-' && line[1] == ' ') {
            tags.push_back(LineTag::Bullet);
            continue;
        }
        std::size_t digits = 0;
        while (digits < line.size() &&
               std::isdigit(static_cast<unsigned char>(line[digits])))
            ++digits;
        if (digits > 0 && digits + 1 < line.size() && line[digits] == '.' &&
            line[digits + 1] == ' ') {
            tags.push_back(LineTag::Numbered);
            continue;
        }
        tags.push_back(LineTag::Body);
    }
    return tags;
}

// --- generator ------------------------------------------------------------------

StructuredDoc gen_structured_doc(const CorpusSpec& spec, int index) {
    spec.validate();
    if (index < 0 || index >= spec.docs)
        throw Error("document index " + std::to_string(index) +
                    " outside spec range");
    auto rng = Xoshiro256pp::stream(spec.seed, kStreamCorpus,
                                    static_cast<std::uint64_t>(index));

    std::vector<std::string> lines;
    std::vector<LineTag> tags;
    auto emit = [&](std::string line, LineTag tag) {
        lines.push_back(std::move(line));
        tags.push_back(tag);
    };

    // Draw order (fixed): heading level, section count, then per section
    // heading words, bullet count (+ introducer and bullet words), numbered
    // count (+ words), body sentence count (+ words and terminators).
    const int level = 1 + static_cast<int>(rng.below(3));
    const int nsec = draw_range(rng, spec.sections_lo, spec.sections_hi);
    for (int s = 0; s < nsec; ++s) {
        if (s > 0) emit("", LineTag::Blank);
        emit(std::string(static_cast<std::size_t>(level), '#') + " " +
                 draw_words(rng, 2 + static_cast<int>(rng.below(3)), true),
             LineTag::Heading);

        const int nb = draw_range(rng, spec.bullets_lo, spec.bullets_hi);
        if (nb > 0) {
            emit(draw_words(rng, 3 + static_cast<int>(rng.below(4)), true) + ":",
                 LineTag::Body);
            for (int b = 0; b < nb; ++b)
                emit("- " + draw_words(rng, 2 + static_cast<int>(rng.below(4)),
                                       false),
                     LineTag::Bullet);
        }

        const int nn = draw_range(rng, spec.numbered_lo, spec.numbered_hi);
        for (int k = 1; k <= nn; ++k)
            emit(std::to_string(k) + ". " +
                     draw_words(rng, 2 + static_cast<int>(rng.below(4)), false),
                 LineTag::Numbered);

        const int ns = draw_range(rng, spec.body_lo, spec.body_hi);
        if (ns > 0) {
            std::string body;
            for (int q = 0; q < ns; ++q) {
                if (q > 0) body += ' ';
                body += draw_words(rng, 4 + static_cast<int>(rng.below(7)), true);
                body += ".!?"[rng.below(3)];
            }
            emit(std::move(body), LineTag::Body);
        }
    }

    StructuredDoc doc;
    doc.seed = spec.seed;
    doc.index = index;
    doc.tags = std::move(tags);
    std::string text;
    for (const auto& l : lines) {
        text += l;
        text += '\n';
    }
    doc.text = std::move(text);
    return doc;
}

std::vector<std::string> generate_corpus_texts(const CorpusSpec& spec) {
    spec.validate();
    std::vector<std::string> texts;
    texts.reserve(static_cast<std::size_t>(spec.docs));
    for (int i = 0; i < spec.docs; ++i)
        texts.push_back(gen_structured_doc(spec, i).text);
    return texts;
}

// --- corpus file ------------------------------------------------------------------

void write_corpus_file(std::span<const std::string> docs,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) out << kGroupSeparator << '\n';
        out << docs[i];
        if (docs[i].empty() || docs[i].back() != '\n') out << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

std::vector<std::string> read_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();

    std::vector<std::string> docs;
    std::string current;
    std::size_t start = 0;
    while (start <= content.size()) {
        std::size_t nl = content.find('\n', start);
        const bool last = nl == std::string::npos;
        const std::string line =
            content.substr(start, last ? std::string::npos : nl - start);
        if (line.size() == 1 && line[0] == kGroupSeparator) {
            if (!current.empty()) docs.push_back(std::move(current));
            current.clear();
        } else if (!(last && line.empty())) {
            current += line;
            current += '\n';
        }
        if (last) break;
        start = nl + 1;
    }
    if (!current.empty()) docs.push_back(std::move(current));
    return docs;
}

// --- datasets ---------------------------------------------------------------------

Dataset make_dataset(std::vector<StructuredDoc> docs, const Vocab& vocab,
                     int window, int max_len, int pad_to) {
    if (window < 1) throw ConfigError("window must be >= 1");
    if (max_len < window)
        throw ConfigError("max_len must be >= window (" +
                          std::to_string(max_len) + " < " +
                          std::to_string(window) + ")");
    Dataset ds;
    ds.vocab = vocab;
    const int pad = vocab.pad_id();
    for (auto& doc : docs) {
        doc.tokens = tokenize(doc.text, vocab);
        if (static_cast<int>(doc.tokens.size()) > max_len)
            doc.tokens.resize(static_cast<std::size_t>(max_len));
        if (pad_to > 0 && static_cast<int>(doc.tokens.size()) < pad_to)
            doc.tokens.resize(static_cast<std::size_t>(pad_to), pad);
    }
    for (const auto& doc : docs) {
        const auto& toks = doc.tokens;
        for (std::size_t p = 1; p < toks.size(); ++p) {
            Example ex;
            ex.window.resize(static_cast<std::size_t>(window));
            for (int j = 0; j < window; ++j) {
                const long long src =
                    static_cast<long long>(p) - window + j;
                ex.window[static_cast<std::size_t>(j)] =
                    src >= 0 ? toks[static_cast<std::size_t>(src)] : pad;
            }
            ex.target = toks[p];
            ds.examples.push_back(std::move(ex));
        }
    }
    ds.docs = std::move(docs);
    return ds;
}

namespace {

std::vector<StructuredDoc> docs_from_texts(std::vector<std::string> texts) {
    std::vector<StructuredDoc> docs;
    docs.reserve(texts.size());
    int index = 0;
    for (auto& t : texts) {
        StructuredDoc d;
        d.text = std::move(t);
        d.tags = annotate_structure(d.text);
        d.index = index++;
        docs.push_back(std::move(d));
    }
    return docs;
}

} // namespace

Dataset load_corpus_file(const std::string& path, int window, int max_len,
                         int pad_to) {
    auto texts = read_corpus_file(path);
    if (texts.empty()) throw DataError("corpus file has no documents: " + path);
    Vocab vocab{std::span<const std::string>(texts)};
    return make_dataset(docs_from_texts(std::move(texts)), vocab, window,
                        max_len, pad_to);
}

Dataset load_corpus_file(const std::string& path, const Vocab& vocab,
                         int window, int max_len, int pad_to) {
    auto texts = read_corpus_file(path);
    if (texts.empty()) throw DataError("corpus file has no documents: " + path);
    return make_dataset(docs_from_texts(std::move(texts)), vocab, window,
                        max_len, pad_to);
}

Dataset dataset_from_spec(const CorpusSpec& spec, int window) {
    std::vector<StructuredDoc> docs;
    docs.reserve(static_cast<std::size_t>(spec.docs));
    for (int i = 0; i < spec.docs; ++i)
        docs.push_back(gen_structured_doc(spec, i));
    std::vector<std::string> texts;
    texts.reserve(docs.size());
    for (const auto& d : docs) texts.push_back(d.text);
    Vocab vocab{std::span<const std::string>(texts)};
    return make_dataset(std::move(docs), vocab, window, spec.max_len,
                        spec.pad_to);
}

} // namespace grlsm
