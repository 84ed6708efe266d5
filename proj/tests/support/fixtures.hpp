#pragma once

#include "epsolve/model.hpp"

#include <cmath>

namespace fixtures {

inline constexpr double kPi = 3.14159265358979323846;

struct Well {
  int basis_size = 2;
  int channel_cutoff = 1;
  double coupling = 1.0;
  double kz = 0.3;
  epsolve::AuxiliaryMode auxiliary = epsolve::AuxiliaryMode::ExactBlock;
  int points = 256;
  double amplitude = 0.1;
  double phase = 0.0; // nonzero breaks the reflection parity of cos(x)
  int aux_size = 0;
  double total_energy = NAN; // selects fixed-energy mode when set

  epsolve::SystemSpec spec() const {
    epsolve::SystemSpec s;
    s.grid = {kPi, points, epsolve::Boundary::HardWall};
    s.v0 = epsolve::constant_samples(s.grid, 0.0);
    s.harmonics[1] = epsolve::to_complex(epsolve::cosine_samples(s.grid, amplitude, 1.0, phase));
    s.period = 2.0 * kPi;
    s.coupling = coupling;
    if (std::isnan(total_energy)) {
      s.mode = epsolve::FixedBloch{kz};
    } else {
      s.mode = epsolve::FixedEnergy{total_energy};
    }
    return s;
  }

  epsolve::SolverConfig config() const {
    epsolve::SolverConfig c;
    c.basis_size = basis_size;
    c.channel_cutoff = channel_cutoff;
    c.auxiliary = auxiliary;
    c.aux_size = aux_size;
    return c;
  }

  epsolve::Problem build() const { return epsolve::build_system(spec(), config()); }
};

} // namespace fixtures
