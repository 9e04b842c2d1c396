#pragma once

#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "error.hpp"

namespace cascadefit {

template <class Tag>
struct StrongId {
    std::string value;

    StrongId() = default;
    explicit StrongId(std::string v) : value(std::move(v)) {
        if (value.empty()) throw InputError("empty identifier");
    }
    const std::string& str() const { return value; }
    auto operator<=>(const StrongId&) const = default;
};

struct GroupTag {};
struct MessageTag {};
using GroupId = StrongId<GroupTag>;
using MessageId = StrongId<MessageTag>;

enum class ContentType { Misinformation, Hateful, Propaganda, ViralNormal, Unlabeled };
enum class Modality { Text, Image, Video };

inline std::string_view to_string(ContentType c) {
    switch (c) {
    case ContentType::Misinformation: return "misinformation";
    case ContentType::Hateful: return "hateful";
    case ContentType::Propaganda: return "propaganda";
    case ContentType::ViralNormal: return "viral_normal";
    case ContentType::Unlabeled: return "unlabeled";
    }
    return "?";
}

inline std::string_view to_string(Modality m) {
    switch (m) {
    case Modality::Text: return "text";
    case Modality::Image: return "image";
    case Modality::Video: return "video";
    }
    return "?";
}

namespace detail {
inline std::string normalize_label(std::string_view s) {
    std::string out;
    for (char ch : s) {
        if (ch == ' ' || ch == '-' || ch == '_') continue;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}
} // namespace detail

// case-insensitive; separators (space, '-', '_') ignored
inline std::optional<ContentType> parse_content(std::string_view s) {
    auto k = detail::normalize_label(s);
    if (k == "misinformation" || k == "misinfo") return ContentType::Misinformation;
    if (k == "hateful" || k == "hate" || k == "hatespeech") return ContentType::Hateful;
    if (k == "propaganda" || k == "propa") return ContentType::Propaganda;
    if (k == "viralnormal" || k == "normal") return ContentType::ViralNormal;
    if (k == "unlabeled" || k == "unlabelled") return ContentType::Unlabeled;
    return std::nullopt;
}

inline std::optional<Modality> parse_modality(std::string_view s) {
    auto k = detail::normalize_label(s);
    if (k == "text" || k == "chat") return Modality::Text;
    if (k == "image") return Modality::Image;
    if (k == "video") return Modality::Video;
    return std::nullopt;
}

// forwarding-score buckets 0,1,2,3,4 and 5 meaning ">=5"
inline int forwarding_bucket(std::int64_t score) { return score >= 5 ? 5 : static_cast<int>(score); }

inline std::string forwarding_label(int bucket) {
    return bucket >= 5 ? std::string("5+") : std::to_string(bucket);
}

struct AdoptionEvent {
    MessageId message;
    GroupId group;
    double time = 0.0;
    Modality modality = Modality::Text;
    ContentType content = ContentType::Unlabeled;
    std::int64_t forwarding_score = 0;
};

struct TreeParams {
    double b = 1.0;
    double h = 0.0;

    TreeParams() = default;
    TreeParams(double b_, double h_) : b(b_), h(h_) {
        if (!std::isfinite(b) || !std::isfinite(h) || b < 1.0 || h < 0.0)
            throw InputError("tree params need finite b >= 1 and h >= 0");
    }
};

namespace detail {
// 1 + b + ... + b^H
inline double geometric_size(double b, int H) {
    if (b == 1.0) return H + 1.0;
    return std::expm1((H + 1) * std::log(b)) / (b - 1.0);
}
} // namespace detail

// Expected node count of the complete b-ary tree; fractional h interpolates
// linearly between floor(h) and ceil(h).
inline double tree_size(const TreeParams& t) {
    int H = static_cast<int>(std::floor(t.h));
    double f = t.h - H;
    double lo = detail::geometric_size(t.b, H);
    if (f == 0.0) return lo;
    return (1.0 - f) * lo + f * detail::geometric_size(t.b, H + 1);
}

inline double level_count(const TreeParams& t, int level) {
    if (level < 0) return 0.0;
    int H = static_cast<int>(std::floor(t.h));
    if (level <= H) return std::pow(t.b, level);
    double f = t.h - H;
    if (level == H + 1 && f > 0.0) return f * std::pow(t.b, level);
    return 0.0;
}

} // namespace cascadefit
