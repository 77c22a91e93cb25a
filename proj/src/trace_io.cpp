#include <nlohmann/json.hpp>

#include "betapoison/attack.hpp"

namespace betapoison {

void write_trace_jsonl(std::ostream& os, std::span<const BetaState> states, std::span<const SampleId> ids) {
    if (states.size() != ids.size()) throw ArgumentError("one sample id per trace is required");
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& st = states[i];
        for (std::size_t t = 0; t < st.log_likelihood_trace.size(); ++t) {
            nlohmann::json row{{"sample", ids[i]},
                               {"iteration", t},
                               {"likelihood", st.likelihood_trace[t]},
                               {"log_likelihood", st.log_likelihood_trace[t]},
                               {"beta", st.beta_trace[t]}};
            os << row.dump() << '\n';
        }
    }
}

} // namespace betapoison
