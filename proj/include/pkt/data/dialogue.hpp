#pragma once

#include <string>
#include <vector>

namespace pkt::data {

/// One utterance. Speaker 2 is the persona-bearing agent throughout.
struct Turn {
    int speaker = 1;
    std::string text;

    bool operator==(const Turn&) const = default;
};

using Dialogue = std::vector<Turn>;

}  // namespace pkt::data
