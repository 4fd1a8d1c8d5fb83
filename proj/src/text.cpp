#include "atytts/text.hpp"

#include <sstream>

namespace aty::text {

PhonemeVocabulary PhonemeVocabulary::from_symbols(const std::vector<std::string>& symbols) {
    PhonemeVocabulary v;
    v.id_to_symbol_.push_back("<pad>");
    for (const auto& s : symbols) {
        require(!s.empty(), "vocabulary: empty symbol");
        require(!v.symbol_to_id_.count(s), "vocabulary: duplicate symbol '" + s + "'");
        v.symbol_to_id_[s] = static_cast<int>(v.id_to_symbol_.size());
        v.id_to_symbol_.push_back(s);
    }
    return v;
}

int PhonemeVocabulary::id_of(const std::string& symbol) const {
    auto it = symbol_to_id_.find(symbol);
    require(it != symbol_to_id_.end(), "vocabulary: unknown symbol '" + symbol + "'");
    return it->second;
}

bool PhonemeVocabulary::contains(const std::string& symbol) const {
    return symbol_to_id_.count(symbol) > 0;
}

const std::string& PhonemeVocabulary::symbol_of(int id) const {
    require(id > kPadId && id < static_cast<int>(id_to_symbol_.size()),
            "vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_symbol_[static_cast<size_t>(id)];
}

std::vector<int> PhonemeVocabulary::ids_for(const std::vector<std::string>& symbols) const {
    std::vector<int> ids;
    ids.reserve(symbols.size());
    for (const auto& s : symbols) ids.push_back(id_of(s));
    return ids;
}

std::vector<std::string> PhonemeVocabulary::symbols_for(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(symbol_of(id));
    return out;
}

void PhonemeVocabulary::save(const std::filesystem::path& path) const {
    std::ostringstream ss;
    for (size_t id = 1; id < id_to_symbol_.size(); ++id) {
        ss << id_to_symbol_[id] << '\t' << id << '\n';
    }
    write_text_file(path, ss.str());
}

PhonemeVocabulary PhonemeVocabulary::load(const std::filesystem::path& path) {
    PhonemeVocabulary v;
    v.id_to_symbol_.push_back("<pad>");
    for (const auto& raw : split(read_text_file(path), '\n')) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        auto parts = split(line, '\t');
        require(parts.size() == 2, "vocabulary file: malformed line '" + line + "'");
        int id = std::stoi(parts[1]);
        require(id == static_cast<int>(v.id_to_symbol_.size()),
                "vocabulary file: ids must be dense and start at 1");
        v.symbol_to_id_[parts[0]] = id;
        v.id_to_symbol_.push_back(parts[0]);
    }
    require(v.size() > 1, "vocabulary file: no symbols");
    return v;
}

uint64_t PhonemeVocabulary::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t id = 1; id < id_to_symbol_.size(); ++id) {
        h = fnv1a(id_to_symbol_[id], h);
        h = fnv1a("\n", h);
    }
    return h;
}

void Lexicon::add(const std::string& word, const std::vector<std::string>& phonemes) {
    require(!word.empty() && !phonemes.empty(), "lexicon: empty entry");
    entries_[word] = phonemes;
}

bool Lexicon::contains(const std::string& word) const { return entries_.count(word) > 0; }

const std::vector<std::string>& Lexicon::phonemes_of(const std::string& word) const {
    auto it = entries_.find(word);
    require(it != entries_.end(), "lexicon: unknown word '" + word + "'");
    return it->second;
}

void Lexicon::save(const std::filesystem::path& path) const {
    std::ostringstream ss;
    for (const auto& [word, phs] : entries_) {
        ss << word << '\t';
        for (size_t i = 0; i < phs.size(); ++i) {
            if (i) ss << ' ';
            ss << phs[i];
        }
        ss << '\n';
    }
    write_text_file(path, ss.str());
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    Lexicon lex;
    for (const auto& raw : split(read_text_file(path), '\n')) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        auto parts = split(line, '\t');
        require(parts.size() == 2, "lexicon file: malformed line '" + line + "'");
        std::vector<std::string> phs;
        for (const auto& p : split(parts[1], ' ')) {
            if (!p.empty()) phs.push_back(p);
        }
        lex.add(parts[0], phs);
    }
    return lex;
}

std::string normalize_text(const std::string& text) {
    std::string out;
    bool last_space = true;
    for (char raw : text) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
        if (keep) {
            out.push_back(c);
            last_space = false;
        } else if (!last_space) {
            out.push_back(' ');
            last_space = true;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string fallback_symbol(char c) { return std::string("#") + c; }

PhonemeSequence phonemize(const std::string& text, const Lexicon& lexicon,
                          const PhonemeVocabulary& vocab) {
    std::string norm = normalize_text(text);
    require(!norm.empty(), "phonemize: text empty after normalization");
    PhonemeSequence seq;
    seq.text = text;
    for (const auto& word : split(norm, ' ')) {
        if (word.empty()) continue;
        if (lexicon.contains(word)) {
            for (const auto& ph : lexicon.phonemes_of(word)) {
                seq.ids.push_back(vocab.id_of(ph));
            }
        } else {
            for (char c : word) {
                seq.ids.push_back(vocab.id_of(fallback_symbol(c)));
            }
        }
    }
    require(!seq.ids.empty(), "phonemize: no phonemizable content");
    return seq;
}

std::vector<std::string> detokenize(const std::vector<int>& ids, const PhonemeVocabulary& vocab) {
    return vocab.symbols_for(ids);
}

}  // namespace aty::text
