#pragma once

#include "geoflow/config.hpp"

#include <string>

namespace geoflow {

/// JSON fragments for module results. Non-finite numbers become null.
/// Nothing here records wall time, so fragments are reproducible.
Json number_json(double v);
Json state_json(const CotangentState<double>& s);
Json orbit_json(const ClosedOrbit<double>& orbit);
Json classification_json(const OrbitClassification<double>& c);
Json hyperbolicity_json(const HyperbolicityCertificate<double>& c);
Json sweep_json(const TraceSweep<double>& s);
Json chain_validation_json(const ChainValidation<double>& v, long first_index);
Json shadow_report_json(const ShadowReport<double>& r);
Json circle_json(const InvariantCircleEstimate<double>& c);
Json absence_json(const CircleAbsence<double>& a);
Json pseudo_orbit_json(const TwistPseudoOrbit<double>& po);
Json certificate_json(const NonShadowCertificate<double>& c);

/// Pretty-printed with a trailing newline.
void write_json(const std::string& path, const Json& j);

}  // namespace geoflow
