#include "symx/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace symx {

using nlohmann::json;

Label label_from_int(long long value) {
    switch (value) {
    case -1: return Label::Absent;
    case 0: return Label::Unknown;
    case 1: return Label::Present;
    default: throw IllegalLabelValue(value);
    }
}

const char* label_name(Label l) {
    switch (l) {
    case Label::Absent: return "absent";
    case Label::Unknown: return "unknown";
    case Label::Present: return "present";
    }
    return "?";
}

const char* split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::TestSingle: return "test_single";
    case Split::Multi: return "multi";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test_single") return Split::TestSingle;
    if (s == "multi") return Split::Multi;
    throw MalformedRecord("unknown split '" + s + "'", 0, "split");
}

bool is_valid_utf8(const std::string& s) {
    const auto* p = reinterpret_cast<const unsigned char*>(s.data());
    size_t n = s.size();
    size_t i = 0;
    while (i < n) {
        unsigned char c = p[i];
        if (c < 0x80) { ++i; continue; }
        int len;
        unsigned cp;
        if ((c & 0xE0) == 0xC0) { len = 2; cp = c & 0x1F; }
        else if ((c & 0xF0) == 0xE0) { len = 3; cp = c & 0x0F; }
        else if ((c & 0xF8) == 0xF0) { len = 4; cp = c & 0x07; }
        else return false;
        if (i + len > n) return false;
        for (int k = 1; k < len; ++k) {
            if ((p[i + k] & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (p[i + k] & 0x3F);
        }
        if (len == 2 && cp < 0x80) return false;
        if (len == 3 && cp < 0x800) return false;
        if (len == 4 && cp < 0x10000) return false;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += len;
    }
    return true;
}

Corpus::Corpus(std::vector<Symptom> symptoms, std::vector<ClinicalNote> notes,
               std::string provenance)
    : symptoms_(std::move(symptoms)), notes_(std::move(notes)),
      provenance_(std::move(provenance)) {
    std::sort(notes_.begin(), notes_.end(),
              [](const ClinicalNote& a, const ClinicalNote& b) { return a.note_id < b.note_id; });
    validate();
}

void Corpus::validate() const {
    std::set<std::string> symptom_ids;
    for (const auto& s : symptoms_) {
        if (s.id.empty())
            throw MalformedRecord("symptom id must be non-empty", 0, "id");
        if (!symptom_ids.insert(s.id).second)
            throw MalformedRecord("duplicate symptom id '" + s.id + "'", 0, "id");
    }
    std::set<std::string> note_ids;
    for (const auto& note : notes_) {
        if (note.note_id.empty())
            throw MalformedRecord("note_id must be non-empty", 0, "note_id");
        if (!note_ids.insert(note.note_id).second)
            throw DuplicateNoteId(note.note_id);
        if (note.text.empty())
            throw MalformedRecord("note text must be non-empty", 0, "text");
        if (!is_valid_utf8(note.text))
            throw MalformedRecord("note text is not valid UTF-8", 0, "text");
        if (note.labels.empty())
            throw MalformedRecord("note '" + note.note_id + "' has no labels", 0, "labels");
        if (note.split != Split::Multi && note.labels.size() != 1)
            throw MalformedRecord("note '" + note.note_id + "' in split '" +
                                      split_name(note.split) + "' must label exactly one symptom",
                                  0, "labels");
        for (const auto& [sid, _] : note.labels)
            if (!symptom_ids.count(sid))
                throw UnknownSymptomId(sid);
    }
}

static ClinicalNote parse_note_line(const std::string& line, int lineno) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw MalformedRecord(e.what(), lineno);
    }
    if (!j.is_object())
        throw MalformedRecord("expected a JSON object", lineno);

    ClinicalNote note;
    auto require_string = [&](const char* field) -> std::string {
        if (!j.contains(field) || !j[field].is_string())
            throw MalformedRecord("missing or non-string field", lineno, field);
        return j[field].get<std::string>();
    };
    note.note_id = require_string("note_id");
    note.text = require_string("text");
    try {
        note.split = split_from_string(require_string("split"));
    } catch (const MalformedRecord& e) {
        throw MalformedRecord(e.what(), lineno, "split");
    }
    if (!j.contains("labels") || !j["labels"].is_object())
        throw MalformedRecord("missing or non-object field", lineno, "labels");
    for (const auto& [sid, v] : j["labels"].items()) {
        if (!v.is_number_integer())
            throw MalformedRecord("label for '" + sid + "' is not an integer", lineno, "labels");
        note.labels[sid] = label_from_int(v.get<long long>());
    }
    return note;
}

Corpus Corpus::load(const std::filesystem::path& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf)
        throw MalformedRecord("cannot open manifest file '" + manifest_path.string() + "'");
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        throw MalformedRecord(std::string("manifest: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("symptoms") ||
        !manifest["symptoms"].is_array() || !manifest.contains("notes_file") ||
        !manifest["notes_file"].is_string())
        throw MalformedRecord("manifest must contain 'symptoms' array and 'notes_file' string");

    std::vector<Symptom> symptoms;
    for (const auto& s : manifest["symptoms"]) {
        if (!s.is_object() || !s.contains("id") || !s["id"].is_string())
            throw MalformedRecord("symptom entry must have a string 'id'", 0, "symptoms");
        symptoms.push_back({s["id"].get<std::string>(),
                            s.value("display_name", s["id"].get<std::string>())});
    }

    std::filesystem::path notes_path = manifest["notes_file"].get<std::string>();
    if (notes_path.is_relative())
        notes_path = manifest_path.parent_path() / notes_path;
    std::ifstream nf(notes_path);
    if (!nf)
        throw MalformedRecord("cannot open notes file '" + notes_path.string() + "'");

    std::vector<ClinicalNote> notes;
    std::string line;
    int lineno = 0;
    bool any = false;
    while (std::getline(nf, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        any = true;
        notes.push_back(parse_note_line(line, lineno));
    }
    if (!any)
        throw MalformedRecord("notes file '" + notes_path.string() + "' is empty");

    return Corpus(std::move(symptoms), std::move(notes),
                  manifest.value("provenance", std::string{}));
}

Corpus Corpus::from_json(const json& j) {
    std::vector<Symptom> symptoms;
    for (const auto& s : j.at("symptoms"))
        symptoms.push_back({s.at("id").get<std::string>(), s.at("display_name").get<std::string>()});
    std::vector<ClinicalNote> notes;
    for (const auto& n : j.at("notes")) {
        ClinicalNote note;
        note.note_id = n.at("note_id").get<std::string>();
        note.text = n.at("text").get<std::string>();
        note.split = split_from_string(n.at("split").get<std::string>());
        for (const auto& [sid, v] : n.at("labels").items())
            note.labels[sid] = label_from_int(v.get<long long>());
        notes.push_back(std::move(note));
    }
    return Corpus(std::move(symptoms), std::move(notes),
                  j.value("provenance", std::string{}));
}

json Corpus::to_json() const {
    json j;
    j["provenance"] = provenance_;
    j["symptoms"] = json::array();
    for (const auto& s : symptoms_)
        j["symptoms"].push_back({{"id", s.id}, {"display_name", s.display_name}});
    j["notes"] = json::array();
    for (const auto& n : notes_) {
        json labels = json::object();
        for (const auto& [sid, l] : n.labels)
            labels[sid] = static_cast<int>(l);
        j["notes"].push_back({{"note_id", n.note_id},
                              {"text", n.text},
                              {"split", split_name(n.split)},
                              {"labels", std::move(labels)}});
    }
    return j;
}

bool Corpus::has_symptom(const std::string& id) const {
    return std::any_of(symptoms_.begin(), symptoms_.end(),
                       [&](const Symptom& s) { return s.id == id; });
}

const Symptom& Corpus::symptom(const std::string& id) const {
    for (const auto& s : symptoms_)
        if (s.id == id) return s;
    throw UnknownSymptomId(id);
}

SplitCounts Corpus::counts() const {
    SplitCounts c;
    for (const auto& n : notes_) {
        switch (n.split) {
        case Split::Train: ++c.train; break;
        case Split::TestSingle: ++c.test_single; break;
        case Split::Multi: ++c.multi; break;
        }
    }
    return c;
}

std::map<std::string, SplitCounts> Corpus::counts_by_symptom() const {
    std::map<std::string, SplitCounts> out;
    for (const auto& s : symptoms_)
        out[s.id] = {};
    for (const auto& n : notes_) {
        for (const auto& [sid, _] : n.labels) {
            auto& c = out[sid];
            switch (n.split) {
            case Split::Train: ++c.train; break;
            case Split::TestSingle: ++c.test_single; break;
            case Split::Multi: ++c.multi; break;
            }
        }
    }
    return out;
}

std::vector<const ClinicalNote*> Corpus::notes_for(const std::string& symptom_id,
                                                    Split split) const {
    if (!has_symptom(symptom_id))
        throw UnknownSymptomId(symptom_id);
    std::vector<const ClinicalNote*> out;
    for (const auto& n : notes_)
        if (n.split == split && n.labels.count(symptom_id))
            out.push_back(&n);
    return out;
}

} // namespace symx
