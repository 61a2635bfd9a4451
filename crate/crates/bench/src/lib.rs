//! Fixtures shared by the benchmarks.

use shiftexit_core::{Horizon, SdeModel, TimeSpaceDomain};

/// 1-D Brownian motion below the level 1 on `[0, 1]`.
pub fn halfspace() -> (SdeModel, TimeSpaceDomain) {
    let domain = TimeSpaceDomain::half_space(vec![1.0], 1.0, Horizon::Finite(1.0))
        .expect("valid half-space");
    (SdeModel::brownian(1), domain)
}

/// 1-D Brownian motion in an interval whose ends move linearly.
pub fn moving_interval() -> (SdeModel, TimeSpaceDomain) {
    let domain = TimeSpaceDomain::affine_interval((-1.0, -0.2), (1.0, 0.1), Horizon::Finite(1.0))
        .expect("valid interval");
    (SdeModel::brownian(1), domain)
}
