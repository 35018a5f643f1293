#include "rclm/corpus.h"

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "rclm/vocabulary.h"
#include "synthetic.h"

namespace rclm {
namespace {

using Tokens = std::vector<std::string>;

TEST(Tokenize, SpecExamples) {
  EXPECT_EQ(tokenize("Anyone know how??"), (Tokens{"anyone", "know", "how", "??"}));
  EXPECT_EQ(tokenize("you're probably right :)"),
            (Tokens{"you're", "probably", "right", ":)"}));
  EXPECT_EQ(tokenize(""), Tokens{});
}

TEST(Tokenize, PunctuationRunsAndEmoticons) {
  EXPECT_EQ(tokenize("wait!! a->b"), (Tokens{"wait", "!!", "a", "->", "b"}));
  EXPECT_EQ(tokenize("ok ;) :D :P ^^ :("), (Tokens{"ok", ";)", ":D", ":P", "^^", ":("}));
  EXPECT_EQ(tokenize("SUDO Apt-Get"), (Tokens{"sudo", "apt", "-", "get"}));
  EXPECT_EQ(tokenize("'quoted' don't"), (Tokens{"'", "quoted", "'", "don't"}));
  EXPECT_EQ(tokenize("  \t\n "), Tokens{});
  EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (Tokens{"caf\xc3\xa9", "ok"}));
}

TEST(TokenizeProperty, TokensHaveNoWhitespaceAndRejoinLosslessly) {
  std::mt19937_64 rng(21);
  const std::string alphabet = "abcXYZ019 _'!?.-:;()^\t";
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
    const Tokens tokens = tokenize(text);
    std::string joined, squeezed;
    for (const auto& t : tokens) {
      ASSERT_FALSE(t.empty());
      ASSERT_EQ(t.find_first_of(" \t\n"), std::string::npos);
      joined += t;
    }
    for (char ch : text) {
      if (ch == ' ' || ch == '\t') continue;
      squeezed += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    // Emoticons keep their case, so compare case-insensitively.
    for (char& ch : joined) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    // Apostrophes outside words survive as punctuation tokens, so the
    // characters are preserved exactly.
    ASSERT_EQ(joined, squeezed) << text;
  }
}

std::string record(const std::string& id, int turns) {
  std::string s = "{\"id\":\"" + id + "\",\"turns\":[";
  for (int t = 0; t < turns; ++t) {
    if (t) s += ",";
    s += std::string("{\"role\":\"") + (t % 2 ? "responder" : "poster") + "\",\"text\":\"w" +
         std::to_string(t) + "\"}";
  }
  return s + "]}";
}

TEST(Ingest, FiltersByTurnCount) {
  std::istringstream in(record("a", 4) + "\n" + record("b", 6) + "\n" + record("c", 21) + "\n");
  const IngestResult r = ingest(in, 6, 20);
  ASSERT_EQ(r.conversations.size(), 1u);
  EXPECT_EQ(r.conversations[0].id, "b");
  EXPECT_EQ(r.filtered_out, 2u);
}

TEST(Ingest, EmptyInput) {
  std::istringstream in("");
  EXPECT_TRUE(ingest(in, 6, 20).conversations.empty());
}

TEST(Ingest, MalformedRecordSkippedWithLineNumber) {
  std::istringstream in(record("a", 6) + "\n{\"id\":\"x\",\"turns\":[{\"text\":\"hi\"}]}\n" +
                        "not json\n" + record("b", 6) + "\n");
  const IngestResult r = ingest(in, 1, 20);
  ASSERT_EQ(r.conversations.size(), 2u);
  EXPECT_EQ(r.conversations[1].id, "b");
  ASSERT_EQ(r.skipped.size(), 2u);
  EXPECT_EQ(r.skipped[0].line, 2u);
  EXPECT_NE(r.skipped[0].reason.find("role"), std::string::npos);
  EXPECT_EQ(r.skipped[1].line, 3u);
}

TEST(Ingest, DropsTurnsThatTokenizeToNothing) {
  std::istringstream in(
      "{\"id\":\"a\",\"turns\":[{\"role\":\"poster\",\"text\":\"hi\"},"
      "{\"role\":\"responder\",\"text\":\"   \"}]}\n");
  const IngestResult r = ingest(in, 1, 20);
  ASSERT_EQ(r.conversations.size(), 1u);
  EXPECT_EQ(r.conversations[0].turns.size(), 1u);
  EXPECT_EQ(r.dropped_turns, 1u);
}

TEST(Ingest, UnreadableFile) {
  EXPECT_THROW(ingest(std::filesystem::path("/nonexistent/corpus.jsonl"), 6, 20),
               std::runtime_error);
}

Conversation counted(const std::map<std::string, int>& counts) {
  Conversation c;
  Turn t;
  for (const auto& [w, n] : counts) {
    for (int i = 0; i < n; ++i) t.tokens.push_back(w);
  }
  c.turns.push_back(t);
  return c;
}

TEST(Vocabulary, BuildSpecExamples) {
  const std::vector<Conversation> a{counted({{"a", 3}, {"b", 2}, {"c", 1}})};
  const Vocabulary v = Vocabulary::build(a, 2);
  EXPECT_EQ(v.size(), 2 + Vocabulary::kReservedCount);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_EQ(v.id("c"), Vocabulary::kUnknown);

  const std::vector<Conversation> tie{counted({{"b", 2}, {"a", 2}})};
  const Vocabulary w = Vocabulary::build(tie, 1);
  EXPECT_TRUE(w.contains("a"));
  EXPECT_FALSE(w.contains("b"));
}

TEST(Vocabulary, Errors) {
  EXPECT_THROW(Vocabulary::build({}, 5), std::invalid_argument);
  const std::vector<Conversation> a{counted({{"a", 1}})};
  EXPECT_THROW(Vocabulary::build(a, 0), std::invalid_argument);
  EXPECT_THROW(Vocabulary().token(99), std::out_of_range);
}

TEST(Vocabulary, FileFormatAndByteDeterminism) {
  testing::RoleCorpusOptions o;
  o.conversations = 50;
  const auto convs = testing::role_corpus(o);
  std::ostringstream a, b;
  Vocabulary::build(convs, 20).write(a);
  Vocabulary::build(convs, 20).write(b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("RCLM-VOCAB 1\n<unk>\n<bot>\n<eot>\n", 0), 0u);
  std::istringstream in(a.str());
  EXPECT_EQ(Vocabulary::read(in), Vocabulary::build(convs, 20));
  std::istringstream bad("VOCAB\n");
  EXPECT_THROW(Vocabulary::read(bad), std::runtime_error);
}

TEST(Encode, SpecExamples) {
  const Vocabulary v = Vocabulary::from_tokens({"hi"});
  Conversation c{"x", {{Role::kPoster, {"hi"}}, {Role::kResponder, {"zzzunseen"}}}};
  const EncodedConversation e = encode(c, v);
  ASSERT_EQ(e.turns.size(), 2u);
  EXPECT_EQ(e.turns[0].ids, (std::vector<TokenId>{1, v.id("hi"), 2}));
  EXPECT_EQ(e.turns[1].ids, (std::vector<TokenId>{1, 0, 2}));
  EXPECT_EQ(e.turns[1].role, Role::kResponder);
  EXPECT_TRUE(encode(Conversation{"empty", {}}, v).turns.empty());
}

TEST(EncodeProperty, DecodeInvertsEncodeOnInVocabularyText) {
  testing::RoleCorpusOptions o;
  o.conversations = 40;
  o.seed = 5;
  const auto convs = testing::role_corpus(o);
  const Vocabulary v = Vocabulary::build(convs, 1000);
  for (const auto& c : convs) {
    const Conversation back = decode(encode(c, v), v);
    ASSERT_EQ(back.id, c.id);
    ASSERT_EQ(back.turns.size(), c.turns.size());
    for (std::size_t t = 0; t < c.turns.size(); ++t) {
      ASSERT_EQ(back.turns[t].role, c.turns[t].role);
      ASSERT_EQ(back.turns[t].tokens, c.turns[t].tokens);
    }
  }
}

TEST(EncodedCorpus, RoundTripAndValidation) {
  testing::TempDir dir;
  testing::RoleCorpusOptions o;
  o.conversations = 10;
  const auto convs = testing::role_corpus(o);
  const Vocabulary v = Vocabulary::build(convs, 100);
  const EncodedCorpus corpus{v.size(), encode_all(convs, v)};
  save_encoded_corpus(corpus, dir.file("c.enc"));
  const EncodedCorpus back = load_encoded_corpus(dir.file("c.enc"));
  EXPECT_EQ(back.vocab_size, corpus.vocab_size);
  ASSERT_EQ(back.conversations.size(), corpus.conversations.size());
  for (std::size_t i = 0; i < back.conversations.size(); ++i) {
    EXPECT_EQ(back.conversations[i].id, corpus.conversations[i].id);
    ASSERT_EQ(back.conversations[i].turns.size(), corpus.conversations[i].turns.size());
    for (std::size_t t = 0; t < back.conversations[i].turns.size(); ++t) {
      EXPECT_EQ(back.conversations[i].turns[t].ids, corpus.conversations[i].turns[t].ids);
    }
  }
  std::ofstream(dir.file("bad.enc")) << "RCLM-CORPUS 1 5\n"
                                     << R"({"id":"a","turns":[{"role":"poster","ids":[1,9,2]}]})"
                                     << "\n";
  EXPECT_THROW(load_encoded_corpus(dir.file("bad.enc")), std::runtime_error);
  EXPECT_THROW(load_encoded_corpus(dir.file("missing.enc")), std::runtime_error);
}

std::vector<std::string> words_of(const std::vector<RatioEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.word);
  return out;
}

TEST(RoleLikelihoodRatio, DisjointRoleVocabularies) {
  std::mt19937_64 rng(2);
  std::vector<Conversation> convs;
  for (int c = 0; c < 30; ++c) {
    Conversation conv;
    for (int t = 0; t < 6; ++t) {
      Turn turn;
      turn.role = t % 2 ? Role::kResponder : Role::kPoster;
      for (int i = 0; i < 4; ++i) {
        const std::string w = (t % 2 ? "a" : "q") + std::to_string(1 + rng() % 2);
        turn.tokens.push_back(w);
      }
      conv.turns.push_back(turn);
    }
    convs.push_back(conv);
  }
  const RoleWordLists lists = role_likelihood_ratio(convs, 0, 2);
  auto poster = words_of(lists.poster), responder = words_of(lists.responder);
  std::sort(poster.begin(), poster.end());
  std::sort(responder.begin(), responder.end());
  EXPECT_EQ(poster, (std::vector<std::string>{"q1", "q2"}));
  EXPECT_EQ(responder, (std::vector<std::string>{"a1", "a2"}));
}

// Independent recomputation of the add-one smoothed ratio.
TEST(RoleLikelihoodRatio, MatchesDirectCountOracle) {
  testing::RoleCorpusOptions o;
  o.conversations = 60;
  o.seed = 8;
  const auto convs = testing::role_corpus(o);
  std::map<std::string, double> by_role[2];
  double totals[2] = {0, 0};
  std::map<std::string, int> all;
  for (const auto& c : convs) {
    for (const auto& t : c.turns) {
      for (const auto& w : t.tokens) {
        by_role[static_cast<int>(t.role)][w] += 1;
        totals[static_cast<int>(t.role)] += 1;
        all[w] += 1;
      }
    }
  }
  const double v = static_cast<double>(all.size());
  const RoleWordLists lists = role_likelihood_ratio(convs, 10, 5);
  ASSERT_FALSE(lists.all.empty());
  for (const auto& e : lists.all) {
    const double pp = (by_role[0][e.word] + 1) / (totals[0] + v);
    const double pr = (by_role[1][e.word] + 1) / (totals[1] + v);
    EXPECT_NEAR(e.ratio, pp / pr, 1e-12) << e.word;
    EXPECT_GT(e.count, 10u);
  }
  EXPECT_LE(lists.poster.size(), 5u);
  for (std::size_t i = 1; i < lists.poster.size(); ++i) {
    EXPECT_GE(lists.poster[i - 1].ratio, lists.poster[i].ratio);
  }
  for (std::size_t i = 1; i < lists.responder.size(); ++i) {
    EXPECT_LE(lists.responder[i - 1].ratio, lists.responder[i].ratio);
  }
}

TEST(RoleLikelihoodRatio, SharedDistributionGivesRatiosNearOne) {
  testing::RoleCorpusOptions o;
  o.conversations = 2000;
  o.role_share = 0.0;
  o.seed = 4;
  const auto convs = testing::role_corpus(o);
  const RoleWordLists lists = role_likelihood_ratio(convs, 100, 10);
  for (const auto& e : lists.all) EXPECT_NEAR(e.ratio, 1.0, 0.1) << e.word;
}

TEST(RoleLikelihoodRatio, Errors) {
  EXPECT_THROW(role_likelihood_ratio({}, 0, 5), std::invalid_argument);
  const std::vector<Conversation> one{counted({{"a", 2}})};
  EXPECT_THROW(role_likelihood_ratio(one, 6000, 5), std::invalid_argument);
}

TEST(Role, NamesRoundTrip) {
  EXPECT_EQ(parse_role("poster"), Role::kPoster);
  EXPECT_EQ(parse_role("responder"), Role::kResponder);
  EXPECT_EQ(parse_role("Poster"), std::nullopt);
  EXPECT_EQ(role_name(Role::kResponder), "responder");
}

}  // namespace
}  // namespace rclm

namespace rclm {
namespace {

TEST(Tokenizer, NeverEmitsReservedTokens) {
  for (const auto& t : tokenize("<unk> <bot> x<eot> <eot>")) {
    EXPECT_NE(t, Vocabulary::kUnknownToken);
    EXPECT_NE(t, Vocabulary::kBeginTurnToken);
    EXPECT_NE(t, Vocabulary::kEndTurnToken);
  }
}

}  // namespace
}  // namespace rclm
