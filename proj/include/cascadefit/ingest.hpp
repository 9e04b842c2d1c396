#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core_model.hpp"
#include "csv.hpp"

namespace cascadefit {

// Events may carry extra columns beyond the six required ones; they are kept
// verbatim so cascades can be stratified by an arbitrary label.
struct LabeledEvent : AdoptionEvent {
    std::map<std::string, std::string> extra;
};

struct RowError {
    std::size_t row = 0;
    std::string field;
    std::string message;
};

struct LoadResult {
    std::vector<LabeledEvent> events;
    std::vector<RowError> errors;
};

enum class EventFormat { Csv, Jsonl };

inline const std::array<std::string, 6> kEventColumns = {"message_id", "group_id",     "timestamp",
                                                        "modality",   "content_type", "forwarding_score"};

namespace detail {

// Fills ev from raw string fields; returns the first offending field on failure.
inline std::optional<RowError> parse_event_fields(const std::map<std::string, std::string>& raw, std::size_t row,
                                                  LabeledEvent& ev) {
    auto bad = [&](const std::string& f, const std::string& msg) { return RowError{row, f, msg}; };
    const auto& mid = raw.at("message_id");
    const auto& gid = raw.at("group_id");
    if (mid.empty()) return bad("message_id", "empty message_id");
    if (gid.empty()) return bad("group_id", "empty group_id");
    ev.message = MessageId(mid);
    ev.group = GroupId(gid);

    auto t = csv::parse_double(raw.at("timestamp"));
    if (!t || !std::isfinite(*t)) return bad("timestamp", "timestamp not a finite number: '" + raw.at("timestamp") + "'");
    ev.time = *t;

    auto m = parse_modality(raw.at("modality"));
    if (!m) return bad("modality", "unknown modality '" + raw.at("modality") + "'");
    ev.modality = *m;

    auto c = parse_content(raw.at("content_type"));
    if (!c) return bad("content_type", "unknown content_type '" + raw.at("content_type") + "'");
    ev.content = *c;

    auto fs = csv::parse_int(raw.at("forwarding_score"));
    if (!fs) return bad("forwarding_score", "forwarding_score not an integer: '" + raw.at("forwarding_score") + "'");
    if (*fs < 0) return bad("forwarding_score", "forwarding_score must be >= 0, got " + std::to_string(*fs));
    ev.forwarding_score = *fs;

    for (const auto& [k, v] : raw)
        if (std::find(kEventColumns.begin(), kEventColumns.end(), k) == kEventColumns.end()) ev.extra[k] = v;
    return std::nullopt;
}

inline LoadResult load_csv(std::istream& in) {
    auto recs = csv::read(in);
    if (recs.empty()) throw InputError("event file has no header row");
    const auto& header = recs.front().fields;
    for (const auto& col : kEventColumns)
        if (std::find(header.begin(), header.end(), col) == header.end())
            throw InputError("missing required column '" + col + "'");

    LoadResult out;
    for (std::size_t r = 1; r < recs.size(); ++r) {
        const auto& rec = recs[r];
        if (rec.fields.size() != header.size()) {
            out.errors.push_back({rec.line, "", "expected " + std::to_string(header.size()) + " fields, got " +
                                                    std::to_string(rec.fields.size())});
            continue;
        }
        std::map<std::string, std::string> raw;
        for (std::size_t i = 0; i < header.size(); ++i) raw[header[i]] = rec.fields[i];
        LabeledEvent ev;
        if (auto err = parse_event_fields(raw, rec.line, ev))
            out.errors.push_back(*err);
        else
            out.events.push_back(std::move(ev));
    }
    return out;
}

inline std::string json_scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return "";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) return csv::num(v.get<double>());
    return v.dump();
}

inline LoadResult load_jsonl(std::istream& in) {
    if (!in) throw InputError("unreadable stream");
    LoadResult out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            out.errors.push_back({row, "", std::string("invalid JSON: ") + e.what()});
            continue;
        }
        if (!j.is_object()) {
            out.errors.push_back({row, "", "line is not a JSON object"});
            continue;
        }
        for (const auto& col : kEventColumns)
            if (!j.contains(col)) throw InputError("missing required key '" + col + "' on line " + std::to_string(row));
        std::map<std::string, std::string> raw;
        for (auto it = j.begin(); it != j.end(); ++it) raw[it.key()] = json_scalar(it.value());
        LabeledEvent ev;
        if (auto err = parse_event_fields(raw, row, ev))
            out.errors.push_back(*err);
        else
            out.events.push_back(std::move(ev));
    }
    if (in.bad()) throw InputError("unreadable stream");
    return out;
}

} // namespace detail

inline LoadResult load_events(std::istream& in, EventFormat fmt) {
    return fmt == EventFormat::Csv ? detail::load_csv(in) : detail::load_jsonl(in);
}

inline LoadResult load_events_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    auto ext = path.extension().string();
    auto fmt = (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") ? EventFormat::Jsonl : EventFormat::Csv;
    return load_events(in, fmt);
}

struct Adoption {
    GroupId group;
    double time = 0.0;
    bool operator==(const Adoption&) const = default;
};

struct Cascade {
    MessageId message;
    std::vector<Adoption> adoptions;
    ContentType content = ContentType::Unlabeled;
    Modality modality = Modality::Text;
    std::int64_t forwarding_score = 0;
    std::map<std::string, std::string> extra;

    std::size_t size() const { return adoptions.size(); }
};

struct TieRecord {
    MessageId message;
    double time = 0.0;
    std::vector<GroupId> groups;
};

struct BuildReport {
    std::size_t single_group_dropped = 0;
    std::size_t duplicates_collapsed = 0;
    std::size_t label_conflicts = 0;
    std::vector<TieRecord> ties;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["single_group_dropped"] = single_group_dropped;
        j["duplicates_collapsed"] = duplicates_collapsed;
        j["label_conflicts"] = label_conflicts;
        j["timestamp_ties"] = ties.size();
        auto arr = nlohmann::json::array();
        for (const auto& t : ties) {
            nlohmann::json g = nlohmann::json::array();
            for (const auto& id : t.groups) g.push_back(id.str());
            arr.push_back({{"message_id", t.message.str()}, {"time", t.time}, {"groups", g}});
        }
        j["ties"] = arr;
        return j;
    }
};

struct BuildResult {
    std::vector<Cascade> cascades;
    BuildReport report;
};

// Earliest event per (message, group); messages seen in fewer than two groups
// are dropped. Labels come from the earliest event. Equal timestamps are
// ordered by GroupId and flagged. Output is sorted by MessageId.
template <class Event>
BuildResult build_cascades(const std::vector<Event>& events) {
    std::map<MessageId, std::vector<const Event*>> by_msg;
    for (const auto& e : events) by_msg[e.message].push_back(&e);

    BuildResult out;
    for (auto& [mid, evs] : by_msg) {
        std::stable_sort(evs.begin(), evs.end(), [](const Event* a, const Event* b) {
            if (a->time != b->time) return a->time < b->time;
            return a->group < b->group;
        });
        Cascade c;
        c.message = mid;
        const Event& first = *evs.front();
        c.content = first.content;
        c.modality = first.modality;
        c.forwarding_score = first.forwarding_score;
        if constexpr (requires { first.extra; }) c.extra = first.extra;

        std::set<GroupId> seen;
        bool conflict = false;
        for (const Event* e : evs) {
            if (e->content != c.content || e->modality != c.modality || e->forwarding_score != c.forwarding_score)
                conflict = true;
            if (!seen.insert(e->group).second) {
                ++out.report.duplicates_collapsed;
                continue;
            }
            c.adoptions.push_back({e->group, e->time});
        }
        if (conflict) ++out.report.label_conflicts;
        if (c.adoptions.size() < 2) {
            ++out.report.single_group_dropped;
            continue;
        }
        for (std::size_t i = 0; i + 1 < c.adoptions.size();) {
            std::size_t j = i + 1;
            while (j < c.adoptions.size() && c.adoptions[j].time == c.adoptions[i].time) ++j;
            if (j - i > 1) {
                TieRecord t{mid, c.adoptions[i].time, {}};
                for (std::size_t k = i; k < j; ++k) t.groups.push_back(c.adoptions[k].group);
                out.report.ties.push_back(std::move(t));
            }
            i = j;
        }
        out.cascades.push_back(std::move(c));
    }
    return out;
}

// inverse of build_cascades for an already-built collection
inline std::vector<LabeledEvent> flatten(const std::vector<Cascade>& cascades) {
    std::vector<LabeledEvent> out;
    for (const auto& c : cascades)
        for (const auto& a : c.adoptions) {
            LabeledEvent e;
            e.message = c.message;
            e.group = a.group;
            e.time = a.time;
            e.modality = c.modality;
            e.content = c.content;
            e.forwarding_score = c.forwarding_score;
            e.extra = c.extra;
            out.push_back(std::move(e));
        }
    return out;
}

struct GroupInfo {
    long long size = 1;
    std::optional<std::set<std::string>> members;
};

using GroupCatalog = std::map<GroupId, GroupInfo>;

inline GroupCatalog load_groups(std::istream& in) {
    auto recs = csv::read(in);
    if (recs.empty()) throw InputError("groups file has no header row");
    const auto& header = recs.front().fields;
    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    auto gcol = col("group_id"), scol = col("size"), mcol = col("member_ids");
    if (!gcol) throw InputError("groups file: missing required column 'group_id'");
    if (!scol) throw InputError("groups file: missing required column 'size'");

    GroupCatalog cat;
    for (std::size_t r = 1; r < recs.size(); ++r) {
        const auto& f = recs[r].fields;
        auto where = "groups file line " + std::to_string(recs[r].line) + ": ";
        if (f.size() != header.size()) throw InputError(where + "wrong field count");
        if (f[*gcol].empty()) throw InputError(where + "empty group_id");
        auto sz = csv::parse_int(f[*scol]);
        if (!sz || *sz < 1) throw InputError(where + "size must be a positive integer");
        GroupInfo g;
        g.size = *sz;
        if (mcol && !f[*mcol].empty()) {
            std::set<std::string> m;
            std::stringstream ss(f[*mcol]);
            for (std::string tok; std::getline(ss, tok, ';');)
                if (!tok.empty()) m.insert(tok);
            if (static_cast<long long>(m.size()) > g.size) throw InputError(where + "more members than size");
            g.members = std::move(m);
        }
        if (!cat.emplace(GroupId(f[*gcol]), std::move(g)).second)
            throw InputError(where + "duplicate group_id '" + f[*gcol] + "'");
    }
    return cat;
}

inline GroupCatalog load_groups_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return load_groups(in);
}

// Undirected, stored with the smaller id first.
struct GroupOverlapNetwork {
    std::set<std::pair<GroupId, GroupId>> edges;

    bool contains(const GroupId& a, const GroupId& b) const {
        if (a == b) return false;
        return a < b ? edges.count({a, b}) > 0 : edges.count({b, a}) > 0;
    }
    void add(const GroupId& a, const GroupId& b) {
        if (a == b) return;
        edges.insert(a < b ? std::pair{a, b} : std::pair{b, a});
    }
};

inline GroupOverlapNetwork build_overlap_network(const GroupCatalog& cat) {
    std::map<std::string, std::vector<GroupId>> member_groups;
    std::size_t with_members = 0;
    for (const auto& [gid, info] : cat) {
        if (!info.members) continue;
        ++with_members;
        for (const auto& m : *info.members) member_groups[m].push_back(gid);
    }
    if (with_members < 2) throw InputError("overlap network requires membership data");
    GroupOverlapNetwork net;
    for (const auto& [m, gs] : member_groups)
        for (std::size_t i = 0; i < gs.size(); ++i)
            for (std::size_t j = i + 1; j < gs.size(); ++j) net.add(gs[i], gs[j]);
    return net;
}

struct SummaryCell {
    std::string factor;
    std::string level;
    std::size_t messages = 0;
    std::size_t groups = 0;
};

// Table-1 style counts; every level is present even when empty.
template <class Event>
std::vector<SummaryCell> summarize_dataset(const std::vector<Event>& events) {
    struct Acc {
        std::set<MessageId> msgs;
        std::set<GroupId> groups;
    };
    std::array<Acc, 3> mod;
    std::array<Acc, 5> con;
    std::array<Acc, 6> fwd;
    for (const auto& e : events) {
        for (Acc* a : {&mod[static_cast<int>(e.modality)], &con[static_cast<int>(e.content)],
                       &fwd[forwarding_bucket(e.forwarding_score)]}) {
            a->msgs.insert(e.message);
            a->groups.insert(e.group);
        }
    }
    std::vector<SummaryCell> out;
    for (int i = 0; i < 3; ++i)
        out.push_back({"modality", std::string(to_string(static_cast<Modality>(i))), mod[i].msgs.size(), mod[i].groups.size()});
    for (int i = 0; i < 5; ++i)
        out.push_back({"content_type", std::string(to_string(static_cast<ContentType>(i))), con[i].msgs.size(),
                       con[i].groups.size()});
    for (int i = 0; i < 6; ++i) out.push_back({"forwarding_score", forwarding_label(i), fwd[i].msgs.size(), fwd[i].groups.size()});
    return out;
}

inline void write_events_csv(std::ostream& os, const std::vector<LabeledEvent>& events) {
    std::vector<std::string> extra_cols;
    for (const auto& e : events)
        for (const auto& [k, v] : e.extra)
            if (std::find(extra_cols.begin(), extra_cols.end(), k) == extra_cols.end()) extra_cols.push_back(k);
    std::sort(extra_cols.begin(), extra_cols.end());
    std::vector<std::string> header(kEventColumns.begin(), kEventColumns.end());
    header.insert(header.end(), extra_cols.begin(), extra_cols.end());
    csv::write_row(os, header);
    for (const auto& e : events) {
        std::vector<std::string> row = {e.message.str(),
                                        e.group.str(),
                                        csv::num(e.time),
                                        std::string(to_string(e.modality)),
                                        std::string(to_string(e.content)),
                                        std::to_string(e.forwarding_score)};
        for (const auto& k : extra_cols) {
            auto it = e.extra.find(k);
            row.push_back(it == e.extra.end() ? "" : it->second);
        }
        csv::write_row(os, row);
    }
}

} // namespace cascadefit
