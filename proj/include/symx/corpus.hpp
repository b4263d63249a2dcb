#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "symx/errors.hpp"

namespace symx {

/// Three-class symptom label: -1 absent/negated, 0 unknown, 1 present.
enum class Label : int { Absent = -1, Unknown = 0, Present = 1 };

/// Throws IllegalLabelValue for anything outside {-1, 0, 1}.
Label label_from_int(long long value);

const char* label_name(Label l);

enum class Split { Train, TestSingle, Multi };

const char* split_name(Split s);
Split split_from_string(const std::string& s); // throws MalformedRecord

struct Symptom {
    std::string id;
    std::string display_name;

    bool operator==(const Symptom&) const = default;
};

struct ClinicalNote {
    std::string note_id;
    std::string text;
    Split split = Split::Train;
    std::map<std::string, Label> labels; // symptom id -> gold label

    bool operator==(const ClinicalNote&) const = default;
};

struct SplitCounts {
    long train = 0;
    long test_single = 0;
    long multi = 0;

    bool operator==(const SplitCounts&) const = default;
};

/// Validated, immutable corpus. Notes are kept in lexicographic note_id
/// order so downstream runs are deterministic and checkpoints replayable.
class Corpus {
public:
    /// Loads a manifest file (symptoms + notes-file path) and its JSONL
    /// notes file, validating every invariant.
    static Corpus load(const std::filesystem::path& manifest_path);

    static Corpus from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    const std::vector<Symptom>& symptoms() const { return symptoms_; }
    const std::vector<ClinicalNote>& notes() const { return notes_; }
    const std::string& provenance() const { return provenance_; }

    bool has_symptom(const std::string& id) const;
    const Symptom& symptom(const std::string& id) const; // throws UnknownSymptomId

    SplitCounts counts() const;
    std::map<std::string, SplitCounts> counts_by_symptom() const;

    /// All notes in `split` labeled for `symptom_id`, in note_id order.
    std::vector<const ClinicalNote*> notes_for(const std::string& symptom_id,
                                                Split split) const;

    bool operator==(const Corpus& other) const {
        return symptoms_ == other.symptoms_ && notes_ == other.notes_ &&
               provenance_ == other.provenance_;
    }

private:
    Corpus(std::vector<Symptom> symptoms, std::vector<ClinicalNote> notes,
           std::string provenance);

    void validate() const;

    std::vector<Symptom> symptoms_;
    std::vector<ClinicalNote> notes_;
    std::string provenance_;
};

/// Strict UTF-8 validity check (rejects overlongs, surrogates, > U+10FFFF).
bool is_valid_utf8(const std::string& s);

} // namespace symx
