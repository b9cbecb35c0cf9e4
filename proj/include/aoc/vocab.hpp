#ifndef AOC_VOCAB_HPP
#define AOC_VOCAB_HPP

#include <string>
#include <string_view>
#include <vector>

namespace aoc {

using TokenId = int;

/// Character-level vocabulary plus the four marker tokens, shared by every
/// backend. Markers are matched greedily before single characters.
class Vocabulary {
public:
    Vocabulary();

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    TokenId id(std::string_view token) const;

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(const std::vector<TokenId>& ids) const;

    TokenId think_open() const { return think_open_; }
    TokenId think_close() const { return think_close_; }
    TokenId answer() const { return answer_; }
    TokenId end() const { return end_; }
    TokenId think_step() const { return think_step_; }

private:
    std::vector<std::string> tokens_;
    TokenId think_open_, think_close_, answer_, end_, think_step_;
};

const Vocabulary& default_vocabulary();

}  // namespace aoc

#endif
