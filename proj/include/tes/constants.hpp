#ifndef TES_CONSTANTS_HPP
#define TES_CONSTANTS_HPP

// Physical constants (exact 2019 SI) and the unit conversions used at
// config/CLI boundaries. Internally everything is strict SI.

namespace tes {

inline constexpr double k_boltzmann = 1.380649e-23;   // J/K, exact
inline constexpr double electron_volt = 1.602176634e-19; // J, exact

// boundary-unit helpers
inline constexpr double from_mK(double v)  { return v * 1e-3; }
inline constexpr double from_nH(double v)  { return v * 1e-9; }
inline constexpr double from_ns(double v)  { return v * 1e-9; }
inline constexpr double from_us(double v)  { return v * 1e-6; }
inline constexpr double from_MHz(double v) { return v * 1e6; }
inline constexpr double from_kHz(double v) { return v * 1e3; }
inline constexpr double from_GSps(double v){ return v * 1e9; }
inline constexpr double from_eV(double v)  { return v * electron_volt; }
// volume stays in um^3 at the boundary; SI is m^3
inline constexpr double from_um3(double v) { return v * 1e-18; }
// thermal coupling nW um^-3 K^-5 -> W m^-3 K^-5
inline constexpr double from_nW_per_um3_K5(double v) { return v * 1e-9 / 1e-18; }
// heat capacity coefficient aJ um^-3 K^-2 -> J m^-3 K^-2
inline constexpr double from_aJ_per_um3_K2(double v) { return v * 1e-18 / 1e-18; }

inline constexpr double to_ns(double v) { return v * 1e9; }
inline constexpr double to_nH(double v) { return v * 1e9; }

} // namespace tes

#endif
