//! Small numeric helpers shared across modules.

/// Neumaier-compensated accumulator.
///
/// Keeps moment sums honest at n ~ 1e4 terms so that algebraic identities
/// between directly-summed and moment-form quantities hold to 1e-12.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Formats a float with 17 significant digits, enough for a bit-exact
/// round trip through text.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Hex-encoded SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
