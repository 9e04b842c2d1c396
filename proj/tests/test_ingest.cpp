#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <cascadefit/ingest.hpp>

using namespace cascadefit;

namespace {
const char* kHeader = "message_id,group_id,timestamp,modality,content_type,forwarding_score\n";

LoadResult load(const std::string& body) {
    std::istringstream in(std::string(kHeader) + body);
    return load_events(in, EventFormat::Csv);
}

LabeledEvent ev(std::string m, std::string g, double t) {
    LabeledEvent e;
    e.message = MessageId(m);
    e.group = GroupId(g);
    e.time = t;
    return e;
}
} // namespace

TEST(LoadEvents, ValidRows) {
    auto r = load("m1,g1,0,text,unlabeled,0\nm1,g2,5,image,hateful,2\nm2,g1,7.5,video,propaganda,9\n");
    ASSERT_EQ(r.events.size(), 3u);
    EXPECT_TRUE(r.errors.empty());
    EXPECT_EQ(r.events[1].modality, Modality::Image);
    EXPECT_EQ(r.events[2].forwarding_score, 9);
    EXPECT_DOUBLE_EQ(r.events[2].time, 7.5);
}

TEST(LoadEvents, NegativeForwardingScoreIsRowError) {
    auto r = load("m1,g1,0,text,unlabeled,-1\nm1,g2,1,text,unlabeled,0\n");
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].field, "forwarding_score");
    EXPECT_EQ(r.errors[0].row, 2u);
    EXPECT_EQ(r.events.size(), 1u);
}

TEST(LoadEvents, ContentIsCaseInsensitive) {
    auto r = load("m1,g1,0,Text,MISINFORMATION,0\n");
    ASSERT_EQ(r.events.size(), 1u);
    EXPECT_EQ(r.events[0].content, ContentType::Misinformation);
}

TEST(LoadEvents, UnknownLabelsAreRowErrors) {
    auto r = load("m1,g1,0,audio,unlabeled,0\nm1,g1,0,text,satire,0\nm1,g1,abc,text,hateful,0\n");
    ASSERT_EQ(r.errors.size(), 3u);
    EXPECT_EQ(r.errors[0].field, "modality");
    EXPECT_EQ(r.errors[1].field, "content_type");
    EXPECT_EQ(r.errors[2].field, "timestamp");
}

TEST(LoadEvents, MissingColumnIsFatal) {
    std::istringstream in("message_id,group_id,timestamp,modality,content_type\nm1,g1,0,text,hateful\n");
    EXPECT_THROW(load_events(in, EventFormat::Csv), InputError);
}

TEST(LoadEvents, QuotedFieldsAndExtraColumns) {
    std::istringstream in(std::string("message_id,group_id,timestamp,modality,content_type,forwarding_score,region\n") +
                          "\"m,1\",\"g \"\"one\"\"\",1,text,hateful,0,\"north\r\neast\"\r\n");
    auto r = load_events(in, EventFormat::Csv);
    ASSERT_EQ(r.events.size(), 1u);
    EXPECT_EQ(r.events[0].message.str(), "m,1");
    EXPECT_EQ(r.events[0].group.str(), "g \"one\"");
    EXPECT_EQ(r.events[0].extra.at("region"), "north\r\neast");
}

TEST(LoadEvents, Jsonl) {
    std::istringstream in(
        "{\"message_id\":\"m1\",\"group_id\":\"g1\",\"timestamp\":3,\"modality\":\"video\",\"content_type\":\"Hate\","
        "\"forwarding_score\":5}\n\n{\"message_id\":\"m1\",\"group_id\":\"g2\",\"timestamp\":4.5,\"modality\":\"text\","
        "\"content_type\":\"hateful\",\"forwarding_score\":-2}\nnot json\n");
    auto r = load_events(in, EventFormat::Jsonl);
    ASSERT_EQ(r.events.size(), 1u);
    EXPECT_EQ(r.events[0].content, ContentType::Hateful);
    ASSERT_EQ(r.errors.size(), 2u);
    EXPECT_EQ(r.errors[0].field, "forwarding_score");
    EXPECT_EQ(r.errors[0].row, 3u);
    EXPECT_EQ(r.errors[1].row, 4u);
}

TEST(BuildCascades, EarliestPerGroup) {
    auto b = build_cascades(std::vector<LabeledEvent>{ev("m1", "g1", 5), ev("m1", "g1", 9), ev("m1", "g2", 7)});
    ASSERT_EQ(b.cascades.size(), 1u);
    std::vector<Adoption> want = {{GroupId("g1"), 5}, {GroupId("g2"), 7}};
    EXPECT_EQ(b.cascades[0].adoptions, want);
    EXPECT_EQ(b.report.duplicates_collapsed, 1u);
}

TEST(BuildCascades, SingleGroupDropped) {
    auto b = build_cascades(std::vector<LabeledEvent>{ev("m2", "g1", 1), ev("m2", "g1", 2)});
    EXPECT_TRUE(b.cascades.empty());
    EXPECT_EQ(b.report.single_group_dropped, 1u);
}

TEST(BuildCascades, TiesOrderedByGroupAndFlagged) {
    auto b = build_cascades(std::vector<LabeledEvent>{ev("m", "gz", 3), ev("m", "ga", 3), ev("m", "gm", 1)});
    ASSERT_EQ(b.cascades.size(), 1u);
    const auto& a = b.cascades[0].adoptions;
    EXPECT_EQ(a[0].group.str(), "gm");
    EXPECT_EQ(a[1].group.str(), "ga");
    EXPECT_EQ(a[2].group.str(), "gz");
    ASSERT_EQ(b.report.ties.size(), 1u);
    EXPECT_EQ(b.report.ties[0].groups.size(), 2u);
    EXPECT_DOUBLE_EQ(b.report.ties[0].time, 3);
}

TEST(BuildCascades, LabelsFromEarliestEvent) {
    auto e1 = ev("m", "g1", 2), e2 = ev("m", "g2", 1);
    e1.content = ContentType::Hateful;
    e2.content = ContentType::Propaganda;
    auto b = build_cascades(std::vector<LabeledEvent>{e1, e2});
    EXPECT_EQ(b.cascades[0].content, ContentType::Propaganda);
    EXPECT_EQ(b.report.label_conflicts, 1u);
}

TEST(BuildCascades, IdempotentAndNoShortCascades) {
    std::mt19937_64 eng(3);
    std::vector<LabeledEvent> evs;
    for (int i = 0; i < 500; ++i)
        evs.push_back(ev("m" + std::to_string(eng() % 40), "g" + std::to_string(eng() % 15), double(eng() % 50)));
    auto once = build_cascades(evs);
    for (const auto& c : once.cascades) {
        EXPECT_GE(c.size(), 2u);
        for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(c.adoptions[i - 1].time, c.adoptions[i].time);
    }
    auto twice = build_cascades(flatten(once.cascades));
    ASSERT_EQ(twice.cascades.size(), once.cascades.size());
    for (std::size_t i = 0; i < once.cascades.size(); ++i)
        EXPECT_EQ(twice.cascades[i].adoptions, once.cascades[i].adoptions);
    EXPECT_EQ(twice.report.single_group_dropped, 0u);
    EXPECT_EQ(twice.report.duplicates_collapsed, 0u);
}

namespace {
GroupCatalog catalog(const std::vector<std::pair<std::string, std::set<std::string>>>& gs) {
    GroupCatalog c;
    for (const auto& [g, m] : gs) c[GroupId(g)] = GroupInfo{static_cast<long long>(std::max<std::size_t>(m.size(), 1)), m};
    return c;
}
} // namespace

TEST(OverlapNetwork, Examples) {
    auto net = build_overlap_network(catalog({{"g1", {"a", "b"}}, {"g2", {"b", "c"}}, {"g3", {"d"}}}));
    ASSERT_EQ(net.edges.size(), 1u);
    EXPECT_TRUE(net.contains(GroupId("g1"), GroupId("g2")));
    EXPECT_TRUE(net.contains(GroupId("g2"), GroupId("g1")));
    EXPECT_TRUE(build_overlap_network(catalog({{"g1", {"a"}}, {"g2", {"b"}}})).edges.empty());
}

TEST(OverlapNetwork, RequiresMembership) {
    GroupCatalog c;
    c[GroupId("g1")] = GroupInfo{3, std::nullopt};
    c[GroupId("g2")] = GroupInfo{4, std::nullopt};
    try {
        build_overlap_network(c);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_STREQ(e.what(), "overlap network requires membership data");
    }
}

TEST(OverlapNetwork, MatchesBruteForce) {
    std::mt19937_64 eng(11);
    std::vector<std::pair<std::string, std::set<std::string>>> gs;
    for (int g = 0; g < 50; ++g) {
        std::set<std::string> m;
        int k = 1 + eng() % 6;
        for (int i = 0; i < k; ++i) m.insert("u" + std::to_string(eng() % 120));
        gs.emplace_back("g" + std::to_string(g), m);
    }
    auto net = build_overlap_network(catalog(gs));
    std::size_t expected = 0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        EXPECT_FALSE(net.contains(GroupId(gs[i].first), GroupId(gs[i].first)));
        for (std::size_t j = 0; j < gs.size(); ++j) {
            if (i == j) continue;
            bool share = false;
            for (const auto& m : gs[i].second) share = share || gs[j].second.count(m);
            EXPECT_EQ(net.contains(GroupId(gs[i].first), GroupId(gs[j].first)), share);
            if (share && i < j) ++expected;
        }
    }
    EXPECT_EQ(net.edges.size(), expected);
}

TEST(LoadGroups, ParsesMembersAndRejectsOversize) {
    std::istringstream in("group_id,size,member_ids\ng1,3,a;b\ng2,2,\n");
    auto c = load_groups(in);
    EXPECT_EQ(c.at(GroupId("g1")).members->size(), 2u);
    EXPECT_FALSE(c.at(GroupId("g2")).members);
    std::istringstream bad("group_id,size,member_ids\ng1,1,a;b\n");
    EXPECT_THROW(load_groups(bad), InputError);
}

TEST(Summarize, EmptyAndSmall) {
    auto empty = summarize_dataset(std::vector<LabeledEvent>{});
    EXPECT_EQ(empty.size(), 14u);
    for (const auto& s : empty) {
        EXPECT_EQ(s.messages, 0u);
        EXPECT_EQ(s.groups, 0u);
    }
    auto two = summarize_dataset(std::vector<LabeledEvent>{ev("m1", "g1", 0), ev("m2", "g1", 1)});
    EXPECT_EQ(two[0].level, "text");
    EXPECT_EQ(two[0].messages, 2u);
    EXPECT_EQ(two[0].groups, 1u);
}

TEST(Summarize, HundredEventFixture) {
    // message i: modality i%3, content i%5, score i%8; each message hits
    // groups i%7 and (i+1)%7 ... 100 events over 50 messages
    std::vector<LabeledEvent> evs;
    for (int i = 0; i < 50; ++i)
        for (int k = 0; k < 2; ++k) {
            auto e = ev("m" + std::to_string(i), "g" + std::to_string((i + k) % 7), i);
            e.modality = static_cast<Modality>(i % 3);
            e.content = static_cast<ContentType>(i % 5);
            e.forwarding_score = i % 8;
            evs.push_back(e);
        }
    auto s = summarize_dataset(evs);
    // hand counts: 50 messages split 17/17/16 by i%3, 10 each by i%5;
    // scores 0..7 each on 7 or 6 messages, so bucket 5+ holds scores 5,6,7
    EXPECT_EQ(s[0].messages, 17u);
    EXPECT_EQ(s[1].messages, 17u);
    EXPECT_EQ(s[2].messages, 16u);
    for (int c = 0; c < 5; ++c) EXPECT_EQ(s[3 + c].messages, 10u);
    EXPECT_EQ(s[8].messages, 7u);  // score 0: i = 0,8,...,48
    EXPECT_EQ(s[12].messages, 6u); // score 4: i = 4,...,44
    EXPECT_EQ(s[13].level, "5+");
    EXPECT_EQ(s[13].messages, 18u); // 6 + 6 + 6
    for (const auto& cell : s) EXPECT_EQ(cell.groups, 7u);
}
