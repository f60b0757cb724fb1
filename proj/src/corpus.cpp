#include "semidqg/corpus.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "semidqg/errors.hpp"
#include "semidqg/logging.hpp"

namespace semidqg::corpus {

using nlohmann::json;

namespace {

bool is_blank(const std::string& s) {
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

Turn parse_turn(const json& j, const char* what, std::size_t line_no) {
    if (!j.is_object() || !j.contains("speaker") || !j.contains("text"))
        throw parse_error("line " + std::to_string(line_no) + ": " + what +
                          " must be an object with speaker and text");
    Turn t;
    t.speaker = parse_speaker(j.at("speaker").get<std::string>());
    t.text = j.at("text").get<std::string>();
    if (is_blank(t.text))
        throw parse_error("line " + std::to_string(line_no) + ": " + what +
                          " text is empty");
    return t;
}

json turn_to_json(const Turn& t) {
    return json{{"speaker", speaker_tag(t.speaker)}, {"text", t.text}};
}

}  // namespace

std::string speaker_tag(Speaker s) {
    return s == Speaker::USER ? "user" : "system";
}

Speaker parse_speaker(const std::string& s) {
    std::string lower;
    lower.reserve(s.size());
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(
                         static_cast<unsigned char>(c))));
    if (lower == "user") return Speaker::USER;
    if (lower == "system") return Speaker::SYSTEM;
    throw parse_error("unknown speaker: " + s);
}

Dataset load_jsonl(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw argument_error("cannot open corpus file: " + path);

    Dataset ds;
    ds.name = name.empty() ? path : name;

    std::string line;
    std::size_t line_no = 0;
    std::size_t labeled_count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw parse_error("line " + std::to_string(line_no) + ": " +
                              e.what());
        }
        if (!j.is_object())
            throw parse_error("line " + std::to_string(line_no) +
                              ": expected a JSON object");

        DialogueInstance inst;
        if (!j.contains("id") || !j.contains("history"))
            throw parse_error("line " + std::to_string(line_no) +
                              ": missing id or history");
        inst.id = j.at("id").get<std::string>();

        const json& hist = j.at("history");
        if (!hist.is_array() || hist.empty())
            throw parse_error("line " + std::to_string(line_no) +
                              ": history must be a non-empty array");
        for (const auto& turn : hist)
            inst.history.push_back(parse_turn(turn, "history turn", line_no));

        if (j.contains("response") && !j.at("response").is_null())
            inst.response = parse_turn(j.at("response"), "response", line_no);

        if (j.contains("gold_query") && !j.at("gold_query").is_null()) {
            std::string q = j.at("gold_query").get<std::string>();
            if (is_blank(q))
                throw parse_error("line " + std::to_string(line_no) +
                                  ": gold_query is empty");
            inst.gold_query = q;
            ++labeled_count;
        }
        if (j.contains("gold_title") && !j.at("gold_title").is_null())
            inst.gold_title = j.at("gold_title").get<std::string>();

        ds.instances.push_back(std::move(inst));
    }

    if (labeled_count != 0 && labeled_count != ds.instances.size())
        throw schema_error(path + ": gold_query present on " +
                           std::to_string(labeled_count) + " of " +
                           std::to_string(ds.instances.size()) +
                           " instances; must be all or none");
    ds.labeled = !ds.instances.empty() && labeled_count == ds.instances.size();
    return ds;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw argument_error("cannot write corpus file: " + path);
    for (const auto& inst : ds.instances) {
        json j;
        j["id"] = inst.id;
        json hist = json::array();
        for (const auto& t : inst.history) hist.push_back(turn_to_json(t));
        j["history"] = hist;
        if (inst.response) j["response"] = turn_to_json(*inst.response);
        if (inst.gold_query) j["gold_query"] = *inst.gold_query;
        if (inst.gold_title) j["gold_title"] = *inst.gold_title;
        out << j.dump() << "\n";
    }
}

std::string build_model_input(const DialogueInstance& inst, Role role,
                              const InputFormat& fmt) {
    if (inst.history.empty())
        throw argument_error("instance " + inst.id + " has empty history");
    if (role == Role::RA && !inst.response)
        throw missing_field_error("instance " + inst.id +
                                  " has no response; required for RA input");

    std::size_t begin = 0;
    if (fmt.max_turns > 0 && inst.history.size() > fmt.max_turns)
        begin = inst.history.size() - fmt.max_turns;

    std::ostringstream out;
    for (std::size_t i = begin; i < inst.history.size(); ++i) {
        if (i > begin) out << " " << fmt.separator << " ";
        const Turn& t = inst.history[i];
        out << speaker_tag(t.speaker) << ": " << t.text;
    }
    if (role == Role::RA)
        out << " " << fmt.separator << " response: " << inst.response->text;
    return out.str();
}

Dataset strip_labels(const Dataset& ds) {
    if (!ds.labeled)
        log::warn("strip_labels: dataset '" + ds.name +
                  "' is already unlabeled");
    Dataset out = ds;
    for (auto& inst : out.instances) inst.gold_query.reset();
    out.labeled = false;
    return out;
}

}  // namespace semidqg::corpus
