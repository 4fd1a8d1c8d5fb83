#include <doctest.h>

#include "atytts/rng.hpp"
#include "atytts/text.hpp"
#include "test_util.hpp"

using namespace aty;
using namespace aty::text;

namespace {

PhonemeVocabulary make_vocab() {
    std::vector<std::string> symbols = {"sil", "sp", "aa", "iy", "t", "k", "m"};
    for (char c = 'a'; c <= 'z'; ++c) symbols.push_back(fallback_symbol(c));
    return PhonemeVocabulary::from_symbols(symbols);
}

Lexicon make_lexicon() {
    Lexicon lex;
    lex.add("cat", {"k", "aa", "t"});
    lex.add("me", {"m", "iy"});
    return lex;
}

}  // namespace

TEST_CASE("phonemize rejects empty and punctuation-only text") {
    auto vocab = make_vocab();
    auto lex = make_lexicon();
    CHECK_THROWS_AS(phonemize("", lex, vocab), InvalidInput);
    CHECK_THROWS_AS(phonemize("?!.,", lex, vocab), InvalidInput);
}

TEST_CASE("phonemize uses lexicon entries verbatim") {
    auto vocab = make_vocab();
    auto lex = make_lexicon();
    auto seq = phonemize("cat", lex, vocab);
    CHECK(seq.ids == vocab.ids_for({"k", "aa", "t"}));
}

TEST_CASE("out-of-lexicon words fall back to per-character symbols") {
    auto vocab = make_vocab();
    auto lex = make_lexicon();
    auto seq = phonemize("abc", lex, vocab);
    REQUIRE(seq.ids.size() == 3);
    CHECK(seq.ids == vocab.ids_for({"#a", "#b", "#c"}));
}

TEST_CASE("phonemize is deterministic and normalization folds case") {
    auto vocab = make_vocab();
    auto lex = make_lexicon();
    auto a = phonemize("  Cat   me ", lex, vocab);
    auto b = phonemize("cat me", lex, vocab);
    CHECK(a.ids == b.ids);
}

TEST_CASE("normalize_text keeps apostrophes, strips other punctuation") {
    CHECK(normalize_text("Don't stop!") == "don't stop");
    CHECK(normalize_text("A  B\tC") == "a b c");
    CHECK(normalize_text("...") == "");
}

TEST_CASE("detokenize round trips lexicon entries") {
    auto vocab = make_vocab();
    std::vector<std::string> symbols = {"k", "aa", "t"};
    auto ids = vocab.ids_for(symbols);
    CHECK(detokenize(ids, vocab) == symbols);
}

TEST_CASE("detokenize rejects the padding id and unknown ids") {
    auto vocab = make_vocab();
    CHECK_THROWS_AS(detokenize({kPadId}, vocab), InvalidInput);
    CHECK_THROWS_AS(detokenize({vocab.size() + 5}, vocab), InvalidInput);
}

TEST_CASE("detokenize preserves length for random valid ids") {
    auto vocab = make_vocab();
    Rng rng(3);
    std::vector<int> ids;
    for (int i = 0; i < 40; ++i) ids.push_back(rng.uniform_int(1, vocab.size() - 1));
    CHECK(detokenize(ids, vocab).size() == ids.size());
}

TEST_CASE("vocabulary persists through save/load with ids intact") {
    auto dir = testutil::temp_dir("vocab");
    auto vocab = make_vocab();
    vocab.save(dir / "vocab.txt");
    auto loaded = PhonemeVocabulary::load(dir / "vocab.txt");
    CHECK(loaded.size() == vocab.size());
    CHECK(loaded.fingerprint() == vocab.fingerprint());
    for (int id = 1; id < vocab.size(); ++id) {
        CHECK(loaded.symbol_of(id) == vocab.symbol_of(id));
        CHECK(loaded.id_of(vocab.symbol_of(id)) == id);
    }
}

TEST_CASE("lexicon persists through save/load") {
    auto dir = testutil::temp_dir("lex");
    auto lex = make_lexicon();
    lex.save(dir / "lexicon.txt");
    auto loaded = Lexicon::load(dir / "lexicon.txt");
    CHECK(loaded.entries() == lex.entries());
}
