#pragma once

#include <stdexcept>
#include <string>

namespace symx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- corpus ---

class MalformedRecord : public Error {
public:
    MalformedRecord(std::string message, int line = 0, std::string field = {})
        : Error("malformed record" + (line > 0 ? " at line " + std::to_string(line) : "") +
                (field.empty() ? "" : " (field '" + field + "')") + ": " + message),
          line(line), field(std::move(field)) {}
    int line;
    std::string field;
};

class DuplicateNoteId : public Error {
public:
    explicit DuplicateNoteId(const std::string& note_id)
        : Error("duplicate note_id '" + note_id + "'"), note_id(note_id) {}
    std::string note_id;
};

class UnknownSymptomId : public Error {
public:
    explicit UnknownSymptomId(const std::string& symptom_id)
        : Error("unknown symptom id '" + symptom_id + "'"), symptom_id(symptom_id) {}
    std::string symptom_id;
};

class IllegalLabelValue : public Error {
public:
    explicit IllegalLabelValue(long long value)
        : Error("illegal label value " + std::to_string(value) + " (expected -1, 0 or 1)"),
          value(value) {}
    long long value;
};

// --- metrics ---

class EmptyMatrix : public Error {
public:
    EmptyMatrix() : Error("confusion matrix is empty") {}
};

class EmptyList : public Error {
public:
    EmptyList() : Error("cannot aggregate an empty list of metric sets") {}
};

// --- model gateway ---

class BackendUnreachable : public Error {
public:
    using Error::Error;
};

class AuthMissing : public Error {
public:
    explicit AuthMissing(const std::string& env_var)
        : Error("credential environment variable '" + env_var + "' is not set"),
          env_var(env_var) {}
    std::string env_var;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

class DegenerateRefinement : public Error {
public:
    DegenerateRefinement(const std::string& message, std::string repeated_text = {})
        : Error(message), repeated_text(std::move(repeated_text)) {}
    std::string repeated_text; // the prompt the teacher kept repeating
};

// --- refinement engine ---

class NoTrainingNotes : public Error {
public:
    explicit NoTrainingNotes(const std::string& symptom_id)
        : Error("symptom '" + symptom_id + "' has no training notes") {}
};

class CorruptCheckpoint : public Error {
public:
    using Error::Error;
};

class ConfigMismatch : public Error {
public:
    using Error::Error;
};

// --- evaluation / reporting ---

class NoNotesInSplit : public Error {
public:
    using Error::Error;
};

class MissingRun : public Error {
public:
    explicit MissingRun(const std::string& symptom_id)
        : Error("no refinement run found for symptom '" + symptom_id + "'") {}
};

} // namespace symx
