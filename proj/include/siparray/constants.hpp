#pragma once

namespace siparray {

// Si conventional lattice constant. All lengths in this library are in
// units of a0 unless a variable name says otherwise.
inline constexpr double kLatticeConstantNm = 0.5431;

// e^2/(4 pi eps0) = 1.4399645 eV*nm, converted to eV*a0.
inline constexpr double kCoulombEvNm = 1.4399645;
inline constexpr double kCoulombEvA0 = kCoulombEvNm / kLatticeConstantNm;

// Screening and central-cell correction for substitutional P in Si.
inline constexpr double kDefaultEpsilonSi = 10.8;
inline constexpr double kDefaultUcccEv = -3.5;

// Energy shift applied to dangling-bond sp3 hybrids on hard-wall surfaces.
inline constexpr double kPassivationShiftEv = 5.0;

// Orbitals per atom in the sp3d5s* basis, without and with spin.
inline constexpr int kOrbitalsPerAtom = 10;
inline constexpr int kSpinOrbitalsPerAtom = 20;

}  // namespace siparray
