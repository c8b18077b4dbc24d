#ifndef TCLT_ESTIMATE_HPP
#define TCLT_ESTIMATE_HPP

namespace tclt
{

/// A Monte Carlo (or exact, std_error == 0) scalar estimate.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

} // namespace tclt

#endif
