#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "atytts/common.hpp"

namespace aty::text {

constexpr int kPadId = 0;

struct PhonemeSequence {
    std::vector<int> ids;
    std::string text;  // original input
};

// Bijective symbol <-> id map; id 0 is reserved for padding.
class PhonemeVocabulary {
  public:
    // Builds a vocabulary from symbols, assigning ids 1..n in the given order.
    static PhonemeVocabulary from_symbols(const std::vector<std::string>& symbols);

    int id_of(const std::string& symbol) const;
    bool contains(const std::string& symbol) const;
    const std::string& symbol_of(int id) const;  // throws on unknown / pad id
    int size() const { return static_cast<int>(id_to_symbol_.size()); }  // includes pad slot

    std::vector<int> ids_for(const std::vector<std::string>& symbols) const;
    std::vector<std::string> symbols_for(const std::vector<int>& ids) const;

    // "symbol<TAB>id" lines, stable ordering.
    void save(const std::filesystem::path& path) const;
    static PhonemeVocabulary load(const std::filesystem::path& path);

    uint64_t fingerprint() const;

  private:
    std::map<std::string, int> symbol_to_id_;
    std::vector<std::string> id_to_symbol_;  // index 0 is the pad placeholder
};

// Word -> phoneme symbols. Closed dictionary with per-character fallback.
class Lexicon {
  public:
    void add(const std::string& word, const std::vector<std::string>& phonemes);
    bool contains(const std::string& word) const;
    const std::vector<std::string>& phonemes_of(const std::string& word) const;
    const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

    // "word<TAB>ph1 ph2 ..." lines.
    void save(const std::filesystem::path& path) const;
    static Lexicon load(const std::filesystem::path& path);

  private:
    std::map<std::string, std::vector<std::string>> entries_;
};

// Lowercase, strip punctuation except apostrophes, collapse whitespace.
std::string normalize_text(const std::string& text);

// Character-fallback symbol for out-of-lexicon words ("#a", "#b", ...).
std::string fallback_symbol(char c);

// Text -> phoneme ids. Lexicon words expand to their entry; unknown words fall
// back to per-character pseudo-phonemes. Throws InvalidInput on empty input.
PhonemeSequence phonemize(const std::string& text, const Lexicon& lexicon,
                          const PhonemeVocabulary& vocab);

std::vector<std::string> detokenize(const std::vector<int>& ids, const PhonemeVocabulary& vocab);

}  // namespace aty::text
