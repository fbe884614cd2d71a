#pragma once

namespace ods {

// Earth model constants, overridable from the run configuration.
struct EarthModel {
    double mu = 398600.4418;          // km^3/s^2
    double re = 6378.137;             // km, equatorial radius
    double j2 = 1.08262668e-3;
    double omega = 7.2921150e-5;      // rad/s, rotation rate
    double flattening = 1.0 / 298.257223563;
    double theta0 = 0.0;              // rad, sidereal angle at t = 0
};

}  // namespace ods
