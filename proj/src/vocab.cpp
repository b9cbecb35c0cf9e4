#include "aoc/vocab.hpp"

#include "aoc/common.hpp"
#include "aoc/corpus.hpp"

namespace aoc {

Vocabulary::Vocabulary()
{
    // think-close precedes the step symbol so argmax ties resolve to closing
    tokens_ = {std::string(kThinkOpen), std::string(kThinkClose), std::string(kAnswerMarker), std::string(kEndMarker)};
    for (char c : std::string_view("0123456789+-=;okQ:?_.")) tokens_.emplace_back(1, c);
    think_open_ = 0;
    think_close_ = 1;
    answer_ = 2;
    end_ = 3;
    think_step_ = id(".");
}

TokenId Vocabulary::id(std::string_view token) const
{
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (tokens_[i] == token) return static_cast<TokenId>(i);
    throw InvalidArgument("unknown token '" + std::string(token) + "'");
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const
{
    std::vector<TokenId> out;
    std::size_t i = 0;
    while (i < text.size()) {
        TokenId best = -1;
        std::size_t best_len = 0;
        for (std::size_t t = 0; t < tokens_.size(); ++t) {
            const auto& tok = tokens_[t];
            if (tok.size() > best_len && text.substr(i, tok.size()) == tok) {
                best = static_cast<TokenId>(t);
                best_len = tok.size();
            }
        }
        if (best < 0) throw InvalidArgument("encode: character not in vocabulary: '" + std::string(1, text[i]) + "'");
        out.push_back(best);
        i += best_len;
    }
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const
{
    std::string out;
    for (auto id : ids) out += token(id);
    return out;
}

const Vocabulary& default_vocabulary()
{
    static const Vocabulary v;
    return v;
}

}  // namespace aoc
