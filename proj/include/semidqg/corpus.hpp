#pragma once

#include <optional>
#include <string>
#include <vector>

namespace semidqg::corpus {

enum class Speaker { USER, SYSTEM };

std::string speaker_tag(Speaker s);  // "user" / "system"
Speaker parse_speaker(const std::string& s);

// One utterance. Text is non-empty after whitespace stripping.
struct Turn {
    Speaker speaker = Speaker::USER;
    std::string text;

    bool operator==(const Turn&) const = default;
};

// One conversation turn-point: the history before the current turn, the
// optional current (response) turn, and the optional annotated query.
struct DialogueInstance {
    std::string id;
    std::vector<Turn> history;
    std::optional<Turn> response;
    std::optional<std::string> gold_query;
    // Target document title for retrieval evaluation; not part of the
    // labeled/unlabeled distinction.
    std::optional<std::string> gold_title;

    bool operator==(const DialogueInstance&) const = default;
};

struct Dataset {
    std::string name;
    std::vector<DialogueInstance> instances;
    bool labeled = false;

    std::size_t size() const { return instances.size(); }
};

enum class Role { QP, RA };

// Serialization of an instance into the flat model input string.
struct InputFormat {
    std::string separator = "<sep>";
    // 0 keeps the full history; otherwise the most recent max_turns turns.
    std::size_t max_turns = 0;
};

// Reads a JSONL corpus. Each line is an object with keys: id, history
// (list of {speaker, text}), optional response {speaker, text}, optional
// gold_query, optional gold_title. The labeled flag is inferred and must
// be all-or-none across lines.
Dataset load_jsonl(const std::string& path, const std::string& name = "");

void save_jsonl(const Dataset& ds, const std::string& path);

// QP input: speaker-tagged history joined by the separator. RA input:
// the same followed by the separator and the response text.
std::string build_model_input(const DialogueInstance& inst, Role role,
                              const InputFormat& fmt = {});

// Returns a copy with gold_query removed from every instance.
Dataset strip_labels(const Dataset& ds);

}  // namespace semidqg::corpus
