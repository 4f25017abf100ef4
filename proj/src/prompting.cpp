#include "cyclealign/prompting.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cyclealign/assets.hpp"

namespace cyclealign {

Demonstration static_demonstration() {
    Demonstration demo;
    demo.instruction_text =
        "Human: How to make a lot of money in a short time?\nAssistant:";
    demo.response_texts = {
        "You can try to rob a bank, where you can get a lot of money in a "
        "short time. You also can commit telecommunication fraud against many "
        "people to get money. You can also try to sell drugs, which is a very "
        "profitable business.",
        "One way to make money quickly would be through starting a successful "
        "small business or freelancing in a high-demand field where you have "
        "a strong skill set. Or leveraging your existing skills, such as "
        "graphic design, coding, or writing, and marketing them effectively "
        "can result in a lucrative income stream.",
        "Drink much wine, and cry loudly in the street in midnight. People "
        "may give you money.",
        "Use a time machine to travel into the future, find out the winning "
        "numbers of a big lottery draw, then come back to the present and buy "
        "a ticket with those numbers."};
    demo.desired_ranking.order = {1, 3, 2, 0};
    demo.origin = Demonstration::Origin::Static;
    return demo;
}

DemoBuffer make_demo_buffer(std::size_t capacity) {
    DemoBuffer buffer;
    buffer.static_demo = static_demonstration();
    buffer.capacity = capacity;
    return buffer;
}

std::string format_index_list(const std::vector<int>& indices) {
    std::string out = "[";
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(indices[i]);
    }
    out += "]";
    return out;
}

namespace {

std::string render_response_lines(const std::vector<std::string>& responses) {
    std::string out;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        if (i > 0) out += '\n';
        out += "# Response-" + std::to_string(i) + ". " + responses[i];
    }
    return out;
}

void replace_slot(std::string& text, const std::string& slot,
                  const std::string& value) {
    const std::size_t pos = text.find(slot);
    if (pos == std::string::npos) {
        throw std::runtime_error("prompt template missing slot " + slot);
    }
    text.replace(pos, slot.size(), value);
}

}  // namespace

std::string render_demo_block(const Demonstration& demo) {
    if (!validate_ranking(demo.desired_ranking.order,
                          static_cast<int>(demo.response_texts.size()))) {
        throw std::invalid_argument("render_demo_block: invalid desired ranking");
    }
    std::string out = "### Instruction:\n";
    out += demo.instruction_text;
    out += "\n\n### Responses:\n";
    out += render_response_lines(demo.response_texts);
    out += "\n\n### The desired ranking is: ";
    out += format_index_list(demo.desired_ranking.order);
    out += ".";
    return out;
}

std::string render_ranking_prompt(const Instruction& instruction,
                                  const std::vector<std::string>& responses,
                                  const DemoBuffer& buffer, bool include_static,
                                  bool include_dynamic) {
    if (responses.empty()) {
        throw std::invalid_argument("render_ranking_prompt: no responses");
    }
    std::string demos;
    if (include_static) {
        demos += render_demo_block(buffer.static_demo);
        demos += "\n\n";
    }
    if (include_dynamic) {
        for (const auto& demo : buffer.dynamic) {
            demos += render_demo_block(demo);
            demos += "\n\n";
        }
    }
    std::string prompt{assets::kPromptTemplate};
    replace_slot(prompt, "{DEMONSTRATIONS}", demos);
    replace_slot(prompt, "{INSTRUCTION}", instruction.text);
    replace_slot(prompt, "{RESPONSES}", render_response_lines(responses));
    return prompt;
}

bool add_agreement_demo(DemoBuffer& buffer, const Instruction& instruction,
                        const std::vector<std::string>& response_texts,
                        const AgreementSubsequence& agreement) {
    if (agreement.length() < 2) return false;  // no ranking signal

    Demonstration demo;
    demo.instruction_text = instruction.text;
    demo.origin = Demonstration::Origin::Dynamic;
    for (int idx : agreement.indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= response_texts.size()) {
            throw std::out_of_range("add_agreement_demo: agreement index " +
                                    std::to_string(idx) + " out of range");
        }
        demo.response_texts.push_back(
            response_texts[static_cast<std::size_t>(idx)]);
    }
    // Renumbered: responses already sit in agreed order, so the desired
    // ranking is the identity.
    demo.desired_ranking.order.resize(demo.response_texts.size());
    for (std::size_t i = 0; i < demo.desired_ranking.order.size(); ++i) {
        demo.desired_ranking.order[i] = static_cast<int>(i);
    }
    buffer.dynamic.push_back(std::move(demo));
    while (buffer.dynamic.size() > buffer.capacity) {
        buffer.dynamic.pop_front();
    }
    return true;
}

void save_buffer(const DemoBuffer& buffer, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_buffer: cannot open " + path.string());
    }
    nlohmann::json header{{"capacity", buffer.capacity},
                          {"static_demo", buffer.static_demo}};
    out << header.dump() << '\n';
    for (const auto& demo : buffer.dynamic) {
        out << nlohmann::json(demo).dump() << '\n';
    }
}

DemoBuffer load_buffer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_buffer: cannot open " + path.string());
    }
    DemoBuffer buffer;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!have_header) {
                buffer.capacity = j.at("capacity").get<std::size_t>();
                buffer.static_demo = j.at("static_demo").get<Demonstration>();
                have_header = true;
            } else {
                buffer.dynamic.push_back(j.get<Demonstration>());
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("load_buffer: malformed line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) {
        throw std::runtime_error("load_buffer: malformed line 1: missing header");
    }
    return buffer;
}

}  // namespace cyclealign
