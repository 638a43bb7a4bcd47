//! Counter-based random number generation.
//!
//! Every draw is a pure function of (seed, path index, step index, draw
//! index), so ensembles are reproducible bit-for-bit no matter how paths are
//! scheduled across workers.

const PHI64: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX2);
    z ^ (z >> 31)
}

#[inline]
fn mix2(key: u64, ctr: u64) -> u64 {
    splitmix(splitmix(key.wrapping_add(ctr.wrapping_mul(PHI64))).wrapping_add(PHI64))
}

/// Deterministic stream for one simulated path.
///
/// Draw counters are partitioned per step: `begin_step(k)` rebases the
/// counter to `k << 8`, allowing up to 256 draws per step before streams
/// could overlap (far above what any scheme here consumes).
#[derive(Debug, Clone)]
pub struct PathStream {
    key: u64,
    ctr: u64,
}

impl PathStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let key = splitmix(seed ^ splitmix(path_index.wrapping_add(PHI64)));
        PathStream { key, ctr: 0 }
    }

    pub fn begin_step(&mut self, step_index: u64) {
        self.ctr = step_index << 8;
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix2(self.key, self.ctr);
        self.ctr += 1;
        v
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform on (0, 1]; safe to feed into ln.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller (consumes exactly two draws).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Minimum over [0, dt] of a Brownian bridge from 0 to `endpoint` with
    /// infinitesimal variance `var` per unit time (consumes one draw).
    ///
    /// Inverse-CDF sampling of P(min <= m | endpoint) =
    /// exp(-2 m (m - endpoint) / (var dt)) for m <= min(0, endpoint).
    #[inline]
    pub fn bridge_min(&mut self, endpoint: f64, var: f64, dt: f64) -> f64 {
        let u = self.uniform_open();
        0.5 * (endpoint - (endpoint * endpoint - 2.0 * var * dt * u.ln()).sqrt())
    }
}
