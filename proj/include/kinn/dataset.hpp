// Dataset ingestion (line-delimited records with doc_id/text/label/split) and
// the deterministic synthetic corpus generator used for offline training and
// CI.
//
// Synthetic corpora plant a per-class signal bigram that also exists in the
// accompanying lexicon; off-class documents receive the REVERSED bigram, so
// every class shares one token multiset per document template. Without
// position information a bag-of-tokens model cannot separate the classes —
// only the tagging step (which turns the in-order bigram into a distinct
// marker token) makes them separable. That is what lets tests honestly
// measure the value of knowledge infusion.

#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinn/common.hpp"
#include "kinn/lexicon.hpp"
#include "kinn/network.hpp"

namespace kinn {

enum class Split { TRAIN, DEV, TEST };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::TRAIN: return "train";
        case Split::DEV: return "dev";
        case Split::TEST: return "test";
    }
    return "train";
}

inline Split split_from(const std::string& s) {
    const std::string low = to_lower(s);
    if (low == "train") return Split::TRAIN;
    if (low == "dev") return Split::DEV;
    if (low == "test") return Split::TEST;
    throw DataError("unknown split '" + s + "' (expected train/dev/test)");
}

struct DatasetRecord {
    std::string doc_id;
    std::string text;
    Label label;
    Split split = Split::TRAIN;
};

// --- ingestion ---------------------------------------------------------------------

inline Label parse_label(const nlohmann::json& j, Task task, int num_classes,
                         std::size_t lineno) {
    Label y;
    if (task == Task::MULTILABEL) {
        if (!j.is_array()) {
            throw DataError("label must be an array of 0/1 for multilabel task", lineno);
        }
        if (static_cast<int>(j.size()) != num_classes) {
            throw DataError("label vector has " + std::to_string(j.size()) +
                                " entries, expected " + std::to_string(num_classes),
                            lineno);
        }
        for (const auto& b : j) {
            if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
                throw DataError("label vector entries must be 0 or 1", lineno);
            }
            y.bits.push_back(b.get<int>());
        }
    } else {
        if (!j.is_number_integer()) {
            throw DataError("label must be an integer class index", lineno);
        }
        y.cls = j.get<int>();
        if (y.cls < 0 || y.cls >= num_classes) {
            throw DataError("label " + std::to_string(y.cls) + " out of range [0, " +
                                std::to_string(num_classes) + ")",
                            lineno);
        }
    }
    return y;
}

/// Load and validate a dataset file. Malformed lines raise DataError with the
/// line number; duplicate doc_ids and label-shape mismatches are hard errors.
/// An empty file is valid (a warning goes to stderr).
inline std::vector<DatasetRecord> load_dataset(const std::string& path, Task task,
                                               int num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<DatasetRecord> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed dataset record: ") + e.what(), lineno);
        }
        for (const char* field : {"doc_id", "text", "label", "split"}) {
            if (!j.contains(field)) {
                throw DataError(std::string("dataset record missing '") + field + "'",
                                lineno);
            }
        }
        DatasetRecord r;
        r.doc_id = j["doc_id"].get<std::string>();
        r.text = j["text"].get<std::string>();
        if (r.text.empty()) throw DataError("dataset record has empty text", lineno);
        if (!ids.insert(r.doc_id).second) {
            throw DataError("duplicate doc_id '" + r.doc_id + "'", lineno);
        }
        r.label = parse_label(j["label"], task, num_classes, lineno);
        try {
            r.split = split_from(j["split"].get<std::string>());
        } catch (const DataError& e) {
            throw DataError(e.what(), lineno);
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) {
        std::fprintf(stderr, "warning: dataset file '%s' contains no records\n",
                     path.c_str());
    }
    return out;
}

inline void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records,
                         Task task) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset file: " + path);
    for (const DatasetRecord& r : records) {
        nlohmann::json j;
        j["doc_id"] = r.doc_id;
        j["text"] = r.text;
        if (task == Task::MULTILABEL) {
            j["label"] = r.label.bits;
        } else {
            j["label"] = r.label.cls;
        }
        j["split"] = to_string(r.split);
        out << j.dump() << '\n';
    }
}

// --- synthetic corpus -----------------------------------------------------------------

struct SyntheticData {
    std::vector<DatasetRecord> records;
    Lexicon lexicon;
};

namespace detail {

inline const std::vector<std::string>& filler_words() {
    // All default-noun under the rule tagger (no closed-class hits, no
    // suffix rules), disjoint from the signal words below.
    static const std::vector<std::string> w = {
        "table",  "garden", "window",  "coffee", "music",  "river",
        "letter", "bottle", "street",  "cloud",  "stone",  "bridge",
        "candle", "mirror", "pillow",  "basket", "lantern", "meadow"};
    return w;
}

inline const std::vector<std::pair<std::string, std::string>>& signal_bigrams() {
    static const std::vector<std::pair<std::string, std::string>> b = {
        {"velvet", "storm"},   {"amber", "valley"},   {"copper", "forest"},
        {"silver", "canyon"},  {"crimson", "harbor"}, {"ivory", "tower"},
        {"granite", "island"}, {"scarlet", "desert"}, {"cobalt", "prairie"}};
    return b;
}

/// A document: filler nouns with the signal (or reversed signal) bigram of
/// each requested class inserted at a random position.
inline std::string synth_text(Rng& rng, const std::vector<std::pair<int, bool>>& plants) {
    const auto& fillers = filler_words();
    const std::size_t n_fillers = 8 + rng.index(5);  // 8..12
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n_fillers; ++i) {
        words.push_back(fillers[rng.index(fillers.size())]);
    }
    for (const auto& [cls, in_order] : plants) {
        const auto& [a, b] = signal_bigrams()[static_cast<std::size_t>(cls)];
        const std::size_t pos = rng.index(words.size() + 1);
        if (in_order) {
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), {a, b});
        } else {
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), {b, a});
        }
    }
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) text += ' ';
        text += words[i];
    }
    return text;
}

/// Deterministic stratified 70/15/15 split within each label bucket.
inline void assign_splits(std::vector<DatasetRecord>& records,
                          const std::vector<std::string>& bucket_of, Rng& rng) {
    std::map<std::string, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < records.size(); ++i) buckets[bucket_of[i]].push_back(i);
    for (auto& [key, idxs] : buckets) {
        rng.shuffle(idxs);
        const std::size_t n = idxs.size();
        const std::size_t n_train = (n * 70 + 99) / 100;  // ceil
        const std::size_t n_dev = (n - n_train + 1) / 2;
        for (std::size_t k = 0; k < n; ++k) {
            if (k < n_train) {
                records[idxs[k]].split = Split::TRAIN;
            } else if (k < n_train + n_dev) {
                records[idxs[k]].split = Split::DEV;
            } else {
                records[idxs[k]].split = Split::TEST;
            }
        }
    }
}

}  // namespace detail

/// Deterministic synthetic corpus + matching lexicon for one task shape.
/// BINARY: class 1 plants the signal bigram, class 0 its reversal.
/// MULTILABEL: each label independently present w.p. ~0.35 (in-order bigram);
/// absent labels may plant the reversed bigram as noise.
/// MULTICLASS: class k plants bigram k plus one reversed off-class bigram.
inline SyntheticData make_synthetic(Task task, int num_classes, std::size_t num_docs,
                                    std::uint64_t seed) {
    if (num_classes < 2 || num_classes > static_cast<int>(detail::signal_bigrams().size())) {
        throw ConfigError("synthetic generator supports 2..9 classes");
    }
    SyntheticData data;
    Rng rng(seed);

    for (int k = 0; k < (task == Task::BINARY ? 1 : num_classes); ++k) {
        const int bigram_idx = task == Task::BINARY ? 0 : k;
        const auto& [a, b] = detail::signal_bigrams()[static_cast<std::size_t>(bigram_idx)];
        Concept c;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "c%02d", bigram_idx + 1);
        c.id = idbuf;
        c.preferred_label = a + " " + b;
        c.phq9 = (bigram_idx % 9) + 1;
        c.definition = "synthetic signal concept " + std::to_string(bigram_idx + 1);
        c.source = ConceptSource::DFO;
        data.lexicon.add(std::move(c));
    }

    std::vector<std::string> bucket_of;
    for (std::size_t i = 0; i < num_docs; ++i) {
        DatasetRecord r;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "doc%04zu", i);
        r.doc_id = idbuf;
        std::vector<std::pair<int, bool>> plants;
        if (task == Task::BINARY) {
            const int cls = static_cast<int>(i % 2);
            r.label.cls = cls;
            plants.push_back({0, cls == 1});
            bucket_of.push_back(std::to_string(cls));
        } else if (task == Task::MULTICLASS) {
            const int cls = static_cast<int>(i % static_cast<std::size_t>(num_classes));
            r.label.cls = cls;
            plants.push_back({cls, true});
            int other = static_cast<int>(rng.index(static_cast<std::size_t>(num_classes)));
            if (other == cls) other = (other + 1) % num_classes;
            plants.push_back({other, false});
            bucket_of.push_back(std::to_string(cls));
        } else {
            r.label.bits.assign(static_cast<std::size_t>(num_classes), 0);
            int set_count = 0;
            for (int k = 0; k < num_classes; ++k) {
                const bool present = rng.next_unit() < 0.35;
                if (present) {
                    r.label.bits[static_cast<std::size_t>(k)] = 1;
                    plants.push_back({k, true});
                    ++set_count;
                } else if (rng.next_unit() < 0.5) {
                    plants.push_back({k, false});
                }
            }
            bucket_of.push_back(std::to_string(set_count));
        }
        r.text = detail::synth_text(rng, plants);
        data.records.push_back(std::move(r));
    }

    detail::assign_splits(data.records, bucket_of, rng);
    return data;
}

/// Records of one split, in file order.
inline std::vector<DatasetRecord> filter_split(const std::vector<DatasetRecord>& records,
                                               Split split) {
    std::vector<DatasetRecord> out;
    for (const DatasetRecord& r : records) {
        if (r.split == split) out.push_back(r);
    }
    return out;
}

}  // namespace kinn
