#pragma once

#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "cyclealign/agreement.hpp"
#include "cyclealign/types.hpp"

namespace cyclealign {

struct DemoBuffer {
    Demonstration static_demo;
    std::deque<Demonstration> dynamic;  // insertion order, FIFO eviction
    std::size_t capacity = 8;
};

// The shipped hand-crafted ranking demonstration.
Demonstration static_demonstration();

DemoBuffer make_demo_buffer(std::size_t capacity = 8);

std::string format_index_list(const std::vector<int>& indices);

// One "### Instruction / ### Responses / ### The desired ranking" block,
// no trailing newline.
std::string render_demo_block(const Demonstration& demo);

// Full ranking prompt: preamble, demonstrations (static first, then dynamic
// in insertion order), query section, and the reply-format request.
// Throws on an empty response list.
std::string render_ranking_prompt(const Instruction& instruction,
                                  const std::vector<std::string>& responses,
                                  const DemoBuffer& buffer, bool include_static,
                                  bool include_dynamic);

// Appends a demonstration carrying only the agreed-upon responses in
// agreement order with an identity desired-ranking; FIFO-evicts when over
// capacity. Returns false (no-op) when the agreement is shorter than 2.
bool add_agreement_demo(DemoBuffer& buffer, const Instruction& instruction,
                        const std::vector<std::string>& response_texts,
                        const AgreementSubsequence& agreement);

// JSONL persistence: header line (capacity + static demo), then one dynamic
// demonstration per line. load(save(b)) == b field-for-field; malformed input
// raises an error naming the 1-based line number.
void save_buffer(const DemoBuffer& buffer, const std::filesystem::path& path);
DemoBuffer load_buffer(const std::filesystem::path& path);

}  // namespace cyclealign
