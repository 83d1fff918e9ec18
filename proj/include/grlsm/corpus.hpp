#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grlsm/errors.hpp"

namespace grlsm {

enum class LineTag { Heading, Bullet, Numbered, Body, Blank };

// A document plus its per-line structural tags. Generated docs carry the
// generator-declared tags; ingested plain text is tagged by
// annotate_structure with the same rules.
struct StructuredDoc {
    std::string text;
    std::vector<int> tokens; // filled once a vocabulary is attached
    std::vector<LineTag> tags;
    std::uint64_t seed = 0;
    int index = 0;
};

struct CorpusSpec {
    int docs = 50;
    std::uint64_t seed = 0;
    int sections_lo = 1, sections_hi = 3;
    int bullets_lo = 0, bullets_hi = 3;
    int numbered_lo = 0, numbered_hi = 3;
    int body_lo = 1, body_hi = 3;
    int max_len = 160; // token truncation bound at load time
    int pad_to = 0;    // 0 disables padding to a fixed token length

    void validate() const;
};

// Byte-level vocabulary. Id 0 is always the pad symbol; the remaining ids
// are the corpus bytes in ascending order. Unknown bytes tokenize to pad.
class Vocab {
public:
    static constexpr char kPadChar = '\x01';

    Vocab() = default;
    explicit Vocab(std::span<const std::string> texts);
    explicit Vocab(std::vector<char> chars); // as stored in a model file

    int pad_id() const { return 0; }
    int id_of(char c) const { return to_id_[static_cast<unsigned char>(c)]; }
    char char_of(int id) const;
    std::size_t size() const { return chars_.size(); }
    const std::vector<char>& chars() const { return chars_; }
    bool operator==(const Vocab& other) const { return chars_ == other.chars_; }

private:
    void rebuild_index();
    std::vector<char> chars_;
    std::array<int, 256> to_id_{};
};

std::vector<int> tokenize(const std::string& text, const Vocab& vocab);
std::string detokenize(std::span<const int> tokens, const Vocab& vocab);

// Lines are maximal runs terminated by '\n' or end of text; a trailing
// newline does not create an extra empty line.
std::vector<std::string> split_lines(const std::string& text);

// Rule-based tagging, applied to each line after stripping leading spaces:
// '#'... -> heading, "- " -> bullet, digits+". " -> numbered, empty or
// whitespace-only -> blank, anything else -> body.
std::vector<LineTag> annotate_structure(const std::string& text);

// Deterministic synthetic document for (spec.seed, index). Sections are
// heading + optional introducer/bullet block + optional numbered block
// (always 1, 2, 3, ...) + body sentences, drawn from a fixed 64-word
// lexicon.
StructuredDoc gen_structured_doc(const CorpusSpec& spec, int index);

std::vector<std::string> generate_corpus_texts(const CorpusSpec& spec);

// Corpus file format: UTF-8 plain text, documents separated by a line
// containing only the group separator character (0x1d). Documents are
// normalized to end with a newline; empty documents are dropped on read.
void write_corpus_file(std::span<const std::string> docs,
                       const std::string& path);
std::vector<std::string> read_corpus_file(const std::string& path);

// Sliding-window next-token pairs over a document corpus. Windows at the
// start of a document are left-padded with the pad id. Order is document
// order, then position.
struct Example {
    std::vector<int> window;
    int target = 0;
};

struct Dataset {
    Vocab vocab;
    std::vector<StructuredDoc> docs;
    std::vector<Example> examples;
};

Dataset make_dataset(std::vector<StructuredDoc> docs, const Vocab& vocab,
                     int window, int max_len, int pad_to);

// Builds the vocabulary from the corpus itself.
Dataset load_corpus_file(const std::string& path, int window, int max_len,
                         int pad_to);
// Tokenizes with an existing (model) vocabulary.
Dataset load_corpus_file(const std::string& path, const Vocab& vocab,
                         int window, int max_len, int pad_to);
Dataset dataset_from_spec(const CorpusSpec& spec, int window);

} // namespace grlsm
