#pragma once
// Probe-set validation against a concrete mentor/mentee pair: index ranges,
// layer-kind comparability, spatial agreement for conv probes, and the
// softmax probe's equal-class-count requirement.

#include <string>

#include "mentee/network.hpp"
#include "mentee/probe.hpp"

namespace mentee {

template <class T>
void validate_probes(const ProbeSet& probes, Network<T>& mentor, Network<T>& mentee) {
    probes.validate();
    auto comparable = [&](const ProbeSpec& p, const char* what) {
        if (p.mentor_layer >= mentor.depth() || p.mentee_layer >= mentee.depth())
            throw ProbeShapeError(std::string(what) + ": layer index out of range (" +
                                  std::to_string(p.mentor_layer) + "," +
                                  std::to_string(p.mentee_layer) + ")");
        const Shape& m = mentor.out_shape(p.mentor_layer);
        const Shape& s = mentee.out_shape(p.mentee_layer);
        if (m.size() != s.size())
            throw ProbeShapeError(std::string(what) + ": incomparable layer kinds " + shape_str(m) +
                                  " vs " + shape_str(s));
        if (m.size() == 3 && (m[1] != s[1] || m[2] != s[2]))
            throw ProbeShapeError(std::string(what) + ": conv maps differ spatially " + shape_str(m) +
                                  " vs " + shape_str(s));
        if (m.size() != 1 && m.size() != 3)
            throw ProbeShapeError(std::string(what) + ": unsupported activation rank");
    };
    for (const auto& p : probes.body) comparable(p, "probe");
    if (probes.softmax_probe) {
        const auto& p = *probes.softmax_probe;
        const std::size_t msm = mentor.softmax_index(), ssm = mentee.softmax_index();
        if (msm >= mentor.depth() || ssm >= mentee.depth())
            throw ProbeShapeError("softmax probe: both networks need a softmax layer");
        if (p.mentor_layer != msm || p.mentee_layer != ssm)
            throw ProbeShapeError("softmax probe must target the final softmax layers (" +
                                  std::to_string(msm) + "," + std::to_string(ssm) + ")");
        if (mentor.out_shape(msm) != mentee.out_shape(ssm))
            throw ProbeShapeError("softmax probe needs equal class counts");
    }
}

} // namespace mentee
