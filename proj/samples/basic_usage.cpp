// Minimal library usage: design the vertex gains, certify them and run the
// sine-with-load scenario for both controller pairings.

#include <iostream>

#include "maps/maps.hpp"

int main() {
  namespace h = maps::harness;
  maps::MotorConfig motor;
  motor.discretization = maps::Discretization::kExactZoh;

  const h::Design design = h::make_design(motor);
  const auto cert = maps::certify(design.vertices);
  std::cout << "certified: " << (cert.certified ? "yes" : "no") << ", alpha = " << cert.alpha
            << ", eps_star = " << cert.bound.eps_star << "\n";

  const h::ScenarioSpec base = h::preset("sine-load", motor);
  const auto runs =
      h::run_variants({h::as_fixed_baseline(base), h::as_maps(base)}, design);
  h::write_comparison_text(std::cout, h::compare_runs(runs));
  return 0;
}
